//! Error classification for process exit codes: configuration problems exit
//! with 2 before any work starts, partial sweep failures exit with 3, and
//! everything else is a plain failure.

use thiserror::Error;

/// A problem in the user's configuration or arguments, detected before any
/// training or file writing begins.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct ValidationError(pub String);

/// Builds a validation error wrapped in `anyhow` so call sites can bubble it
/// with `?` while `exit_code_for` still recognizes it.
pub fn validation(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ValidationError(msg.into()))
}

/// Exit code 0: success. 2: validation failure. 3: partial cell failures
/// (signaled by the sweep verb directly). 1: everything else.
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ValidationError>() {
            return 2;
        }
        if let Some(core_err) = cause.downcast_ref::<pulsekd_core::Error>() {
            if matches!(
                core_err,
                pulsekd_core::Error::InvalidConfig(_) | pulsekd_core::Error::InsufficientData { .. }
            ) {
                return 2;
            }
        }
    }
    1
}

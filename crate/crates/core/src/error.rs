//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Failures surfaced by the engine.
///
/// Shape and configuration problems are reported eagerly at API boundaries;
/// numeric failures (a non-finite loss) carry enough context to locate the
/// offending epoch and batch.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor or batch dimensions do not match what an operation expects.
    ShapeMismatch { expected: String, got: String },
    /// An input buffer contained NaN or an infinity.
    NonFiniteInput(&'static str),
    /// Loss evaluation produced a non-finite value during training.
    NonFiniteLoss { epoch: usize, batch: usize },
    /// An operation was called in the wrong state (e.g. backward before forward).
    InvalidState(&'static str),
    /// A configuration value violates its documented contract.
    InvalidConfig(String),
    /// A class label lies outside `[0, num_classes)`.
    LabelOutOfRange { label: usize, num_classes: usize },
    /// Not enough data for the requested computation.
    InsufficientData { needed: usize, got: usize },
    /// Malformed recording text (1-based line number within the record).
    Parse { line: usize, message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::NonFiniteInput(what) => write!(f, "non-finite values in {what}"),
            Error::NonFiniteLoss { epoch, batch } => {
                write!(f, "non-finite loss at epoch {epoch}, batch {batch}")
            }
            Error::InvalidState(what) => write!(f, "invalid state: {what}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::LabelOutOfRange { label, num_classes } => {
                write!(f, "label {label} outside [0, {num_classes})")
            }
            Error::InsufficientData { needed, got } => {
                write!(f, "insufficient data: need at least {needed}, got {got}")
            }
            Error::Parse { line, message } => write!(f, "parse error on line {line}: {message}"),
        }
    }
}

impl core::error::Error for Error {}

impl Error {
    /// Builds a [`Error::ShapeMismatch`] from anything debug-printable.
    pub fn shape<E: fmt::Debug, G: fmt::Debug>(expected: E, got: G) -> Self {
        Error::ShapeMismatch {
            expected: alloc::format!("{expected:?}"),
            got: alloc::format!("{got:?}"),
        }
    }
}

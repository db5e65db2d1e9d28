//! Adam optimizer with bias correction.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Optimizer state: one first- and second-moment buffer per parameter (in the
/// caller's parameter order) plus the shared step counter and coefficients.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state (zero moments, step 0) with the standard coefficients
    /// β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(params: &[&Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Fresh state sized for the parameters currently in a model. Convenience
    /// wrapper over [`AdamState::new`] for `params_mut`-style access.
    pub fn for_params(params: &[&mut Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Moment buffers in parameter order (first, second).
    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// Rebuilds state from checkpointed parts; moment lists must pair up
    /// shape-for-shape.
    pub fn from_parts(
        m: Vec<Tensor>,
        v: Vec<Tensor>,
        step: u64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::shape(m.len(), v.len()));
        }
        for (a, b) in m.iter().zip(&v) {
            if a.shape() != b.shape() {
                return Err(Error::shape(a.shape(), b.shape()));
            }
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "adam coefficients out of range: beta1={beta1} beta2={beta2} eps={eps}"
            )));
        }
        Ok(AdamState {
            m,
            v,
            step,
            beta1,
            beta2,
            eps,
        })
    }
}

/// One Adam update over `params`, reading each parameter's accumulated
/// gradient and applying the bias-corrected moment estimates:
///
/// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
/// `p ← p − lr · m̂ / (√v̂ + ε)` with `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`.
///
/// The step counter increments once per call. Every parameter must carry a
/// gradient of its own shape; the parameter list must match the state.
pub fn adam_step(params: &mut [&mut Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "learning rate must be finite and positive, got {lr}"
        )));
    }
    if params.len() != state.m.len() {
        return Err(Error::shape(state.m.len(), params.len()));
    }
    let t = state.step + 1;
    // Correction factors recomputed from the step count (not carried
    // incrementally) so a resumed run reproduces them bit-for-bit.
    let bc1 = 1.0 - math::powi(state.beta1, t as i32);
    let bc2 = 1.0 - math::powi(state.beta2, t as i32);
    for (i, p) in params.iter_mut().enumerate() {
        if p.shape() != state.m[i].shape() {
            return Err(Error::shape(state.m[i].shape(), p.shape()));
        }
        if p.grad().is_none() {
            return Err(Error::InvalidState("parameter has no gradient"));
        }
        let md = state.m[i].data_mut();
        let vd = state.v[i].data_mut();
        // split borrows: read grad before taking data_mut
        let gd = p.grad().expect("checked above").to_vec();
        let pd = p.data_mut();
        let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
        for j in 0..pd.len() {
            let g = gd[j];
            md[j] = b1 * md[j] + (1.0 - b1) * g;
            vd[j] = b2 * vd[j] + (1.0 - b2) * g * g;
            let mhat = md[j] / bc1;
            let vhat = vd[j] / bc2;
            pd[j] -= lr * mhat / (math::sqrt(vhat) + eps);
        }
    }
    state.step = t;
    Ok(())
}

//! Dense row-major `f64` arrays with an optional gradient buffer.
//!
//! This is deliberately not a general autodiff tape: layers cache their own
//! activations during the forward pass and implement explicit backward passes,
//! so a tensor only needs to carry values and (for trainable parameters) an
//! accumulated gradient of the same shape.

use alloc::{vec, vec::Vec};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Dense n-dimensional `f64` array in row-major order.
///
/// Invariants maintained by construction:
/// * `data.len()` equals the product of `shape`
/// * when present, `grad.len() == data.len()`
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    /// A tensor of zeros with the given shape. Zero-size shapes are allowed
    /// (the empty product is 1 for a 0-dim shape, matching row-major layout).
    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
            grad: None,
        }
    }

    /// Wraps an existing buffer; errors when the element count does not match
    /// the shape product.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::shape(shape, data.len()));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Size of dimension `i`; panics on out-of-range axis (programmer error).
    pub fn dim(&self, i: usize) -> usize {
        self.shape[i]
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The accumulated gradient, if any backward pass has touched this tensor.
    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Mutable gradient buffer, allocated lazily as zeros on first use.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    /// Simultaneous read access to values and write access to the gradient
    /// (allocated lazily). Values and gradient are disjoint buffers, so layer
    /// backward passes can read weights while accumulating their gradients.
    pub fn data_and_grad_mut(&mut self) -> (&[f64], &mut [f64]) {
        let n = self.data.len();
        let grad = self.grad.get_or_insert_with(|| vec![0.0; n]);
        (&self.data, grad)
    }

    /// Resets the gradient to zero (keeps the allocation if one exists).
    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.fill(0.0);
        }
    }

    /// Adds `delta` element-wise into the gradient buffer.
    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.data.len() {
            return Err(Error::shape(self.data.len(), delta.len()));
        }
        let g = self.grad_mut();
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Fills the tensor with draws from a zero-mean normal distribution.
    pub fn fill_normal(&mut self, std: f64, rng: &mut SeededRng) {
        for v in self.data.iter_mut() {
            *v = crate::rng::normal(rng, 0.0, std);
        }
    }
}

//! Capacity-aware knowledge distillation engine for PPG heart-rate estimation.
//!
//! The crate trains small 1D convolutional and MLP classifiers that map 8-second
//! photoplethysmography windows to one of 180 heart-rate bins (30–210 BPM), and
//! transfers knowledge from large teacher networks into smaller students via
//! response-based (hard/soft/decoupled) and feature-based distillation.
//!
//! Everything here is deterministic given a seed and runs on plain `f64`
//! buffers: no threads, no syscalls, no global state. The crate builds without
//! `std` (the default `std` feature only adds a wall-clock for epoch timing);
//! file formats, checkpoints, experiment orchestration, and the CLI live in the
//! companion `pulsekd-lab` crate.
//!
//! Module map:
//!
//! * [`tensor`] — dense row-major `f64` arrays with an optional gradient buffer
//! * [`nn`] — conv1d / batchnorm1d / linear layers with explicit backward passes
//! * [`model`] — residual-network and MLP assembly, parameter walks, memory model
//! * [`loss`] — softmax cross-entropy
//! * [`distill`] — hard, soft, decoupled, and feature distillation losses
//! * [`adam`] — Adam optimizer with bias correction
//! * [`data`] — recordings, resampling, windowing, HR binning, synthetic PPG, splits
//! * [`train`] — minibatch training loop, evaluation, histories
//! * [`scaling`] — saturating-exponential fits of MAE versus student capacity
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod adam;
pub mod data;
pub mod distill;
pub mod error;
pub mod loss;
mod math;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scaling;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;

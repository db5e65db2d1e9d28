//! Wall-clock inference benchmarking with analytic memory estimates.
//!
//! Each measurement runs a few untimed warmup passes (cache/allocator
//! settling), then times `reps` evaluation-mode forward passes over one
//! deterministic seeded batch. Reported memory is the engine's analytic
//! estimate — parameter bytes plus peak simultaneously-live activation
//! bytes — rather than a process-level RSS probe, so numbers are stable
//! across machines and runs.

use std::time::Instant;

use anyhow::Result;
use pulsekd_core::model::{Model, ModelSpec};
use pulsekd_core::rng;
use pulsekd_core::tensor::Tensor;
use serde::Serialize;

use crate::error::validation;

/// Untimed passes before measurement begins.
pub const WARMUP_REPS: usize = 3;
/// Smallest number of timed repetitions accepted.
pub const MIN_REPS: usize = 10;

const BENCH_INPUT_STREAM: u64 = 0x62656e6368; // "bench"

/// One model's timing and memory summary.
#[derive(Debug, Clone, Serialize)]
pub struct BenchResult {
    pub spec: ModelSpec,
    pub param_count: usize,
    pub batch_size: usize,
    pub reps: usize,
    pub warmup: usize,
    /// Mean seconds per forward pass.
    pub mean_s: f64,
    /// Sample standard deviation (n−1) of per-pass seconds.
    pub std_s: f64,
    /// Bytes of resident model state (parameters + running statistics).
    pub param_bytes: usize,
    /// Peak bytes of simultaneously-live activations at this batch size.
    pub peak_activation_bytes: usize,
}

/// Times evaluation-mode forward passes of `model` on a deterministic
/// standard-normal batch. `reps` below [`MIN_REPS`] is rejected rather than
/// silently padded, so reported statistics always mean what they claim.
pub fn benchmark(model: &Model, batch_size: usize, reps: usize) -> Result<BenchResult> {
    if reps < MIN_REPS {
        return Err(validation(&format!(
            "benchmark repetitions must be at least {MIN_REPS}, got {reps}"
        )));
    }
    if batch_size == 0 {
        return Err(validation("benchmark batch size must be positive"));
    }
    let spec = model.spec().clone();
    let mut input = Tensor::zeros(&[batch_size, spec.input_channels, spec.input_length]);
    let mut r = rng::derived(0, BENCH_INPUT_STREAM);
    input.fill_normal(1.0, &mut r);

    for _ in 0..WARMUP_REPS {
        model.forward_eval(&input)?;
    }

    let mut seconds = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let out = model.forward_eval(&input)?;
        seconds.push(start.elapsed().as_secs_f64());
        // Keep the optimizer from proving the output unused.
        std::hint::black_box(&out);
    }

    let mean = seconds.iter().sum::<f64>() / reps as f64;
    let var = seconds
        .iter()
        .map(|s| (s - mean) * (s - mean))
        .sum::<f64>()
        / (reps - 1) as f64;
    let memory = model.inference_memory(batch_size);

    Ok(BenchResult {
        param_count: model.count_params(),
        spec,
        batch_size,
        reps,
        warmup: WARMUP_REPS,
        mean_s: mean,
        std_s: var.sqrt(),
        param_bytes: memory.param_bytes,
        peak_activation_bytes: memory.peak_activation_bytes,
    })
}

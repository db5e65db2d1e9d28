//! Minibatch training loop and evaluation.
//!
//! Training is deterministic given the config seed: weight initialization,
//! per-epoch shuffles, and (for feature distillation) projector initialization
//! all derive from it. A frozen teacher only ever runs in evaluation mode
//! through `&Model`, so its parameters and running statistics cannot move.
//!
//! Teacher outputs for a window never change across epochs (the teacher is
//! frozen and evaluation-mode inference is per-sample deterministic), so the
//! loop memoizes them per training window after the first epoch.

use alloc::string::String;
use alloc::vec::Vec;

use crate::adam::{adam_step, AdamState};
use crate::data::WindowedSample;
use crate::distill::{
    total_loss, DistillConfig, Projector, Strategy, StudentOutputs, TeacherOutputs,
};
use crate::error::{Error, Result};
use crate::loss::argmax_row;
use crate::model::{Model, ModelSpec};
use crate::rng;
use crate::tensor::Tensor;

/// Wall-clock source for epoch timing. The engine itself never needs real
/// time; hosts inject one (tests use [`NullClock`]).
pub trait Clock {
    /// Monotonic seconds since an arbitrary origin.
    fn now_s(&self) -> f64;
}

/// Clock that always reads zero (for deterministic tests and `no_std` hosts).
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_s(&self) -> f64 {
        0.0
    }
}

/// Monotonic process clock.
#[cfg(feature = "std")]
#[derive(Debug, Clone)]
pub struct SystemClock(std::time::Instant);

#[cfg(feature = "std")]
impl Default for SystemClock {
    fn default() -> Self {
        SystemClock(std::time::Instant::now())
    }
}

#[cfg(feature = "std")]
impl Clock for SystemClock {
    fn now_s(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TrainConfig {
    #[cfg_attr(feature = "serde", serde(default = "default_epochs"))]
    pub epochs: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_lr"))]
    pub lr: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_batch"))]
    pub batch_size: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
    pub distill: DistillConfig,
    /// Path of a teacher checkpoint, resolved by the host before calling
    /// [`train`] (the engine itself does no IO).
    #[cfg_attr(feature = "serde", serde(default))]
    pub teacher_checkpoint: Option<String>,
}

fn default_epochs() -> usize {
    300
}
fn default_lr() -> f64 {
    5e-4
}
fn default_batch() -> usize {
    128
}

impl TrainConfig {
    /// Standard hyperparameters (300 epochs, lr 5e-4, batch 128) for the
    /// given distillation setup.
    pub fn new(distill: DistillConfig) -> Self {
        TrainConfig {
            epochs: default_epochs(),
            lr: default_lr(),
            batch_size: default_batch(),
            seed: 0,
            distill,
            teacher_checkpoint: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "learning rate must be finite and positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        self.distill.validate()
    }
}

/// Per-epoch training curves. All vectors share one length: the number of
/// epochs completed by the call that produced the history.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainHistory {
    /// Mean per-sample training loss.
    pub train_loss: Vec<f64>,
    /// Validation mean absolute error, BPM.
    pub val_mae: Vec<f64>,
    /// Wall-clock seconds per epoch (zeros under a [`NullClock`]).
    pub epoch_seconds: Vec<f64>,
}

impl TrainHistory {
    pub fn append(&mut self, other: &TrainHistory) {
        self.train_loss.extend_from_slice(&other.train_loss);
        self.val_mae.extend_from_slice(&other.val_mae);
        self.epoch_seconds.extend_from_slice(&other.epoch_seconds);
    }
}

/// Everything a run needs to continue training: model, optimizer state,
/// optional feature projector (with its own optimizer), and progress.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model,
    pub adam: AdamState,
    pub projector: Option<Projector>,
    pub projector_adam: Option<AdamState>,
    pub completed_epochs: usize,
}

/// Validates the teacher/strategy pairing and builds fresh training state.
pub fn init_state(
    spec: &ModelSpec,
    cfg: &TrainConfig,
    teacher: Option<&Model>,
) -> Result<TrainState> {
    cfg.validate()?;
    match (cfg.distill.strategy.needs_teacher(), teacher) {
        (true, None) => {
            return Err(Error::InvalidConfig(alloc::format!(
                "strategy '{}' requires a teacher",
                cfg.distill.strategy
            )))
        }
        (false, Some(_)) => {
            return Err(Error::InvalidConfig(
                "scratch training must not receive a teacher".into(),
            ))
        }
        _ => {}
    }
    let mut model = Model::build(spec, cfg.seed)?;
    if let Some(t) = teacher {
        let ts = t.spec();
        if ts.num_classes != spec.num_classes
            || ts.input_channels != spec.input_channels
            || ts.input_length != spec.input_length
        {
            return Err(Error::InvalidConfig(alloc::format!(
                "teacher interface {}x{}->{} does not match student {}x{}->{}",
                ts.input_channels,
                ts.input_length,
                ts.num_classes,
                spec.input_channels,
                spec.input_length,
                spec.num_classes
            )));
        }
    }
    let adam = AdamState::for_params(&model.params_mut());
    let (projector, projector_adam) = if cfg.distill.strategy == Strategy::Feature {
        let t = teacher.expect("presence checked above");
        let mut p = Projector::new(model.feature_dim(), t.feature_dim(), cfg.seed);
        let pa = AdamState::for_params(&p.params_mut());
        (Some(p), Some(pa))
    } else {
        (None, None)
    };
    Ok(TrainState {
        model,
        adam,
        projector,
        projector_adam,
        completed_epochs: 0,
    })
}

/// Memoized evaluation-mode teacher outputs, one row per training window.
struct TeacherCache {
    rows: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl TeacherCache {
    /// Caches unconditionally at desk scale, but refuses to balloon past
    /// ~512 MB for very large corpora.
    fn new(n_windows: usize, num_classes: usize, feature_dim: usize) -> Option<Self> {
        let bytes = n_windows
            .saturating_mul(num_classes + feature_dim)
            .saturating_mul(core::mem::size_of::<f64>());
        if bytes > 512 << 20 {
            return None;
        }
        Some(TeacherCache {
            rows: alloc::vec![None; n_windows],
        })
    }
}

/// Teacher logits and features for the batch at `idx`, served from the cache
/// when possible.
fn teacher_outputs_for_batch(
    teacher: &Model,
    cache: &mut Option<TeacherCache>,
    idx: &[usize],
    batch: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let k = teacher.spec().num_classes;
    let d = teacher.feature_dim();
    if let Some(c) = cache {
        let all_cached = idx.iter().all(|&i| c.rows[i].is_some());
        if !all_cached {
            let (logits, feats) = teacher.forward_eval(batch)?;
            for (row, &i) in idx.iter().enumerate() {
                let l = logits.data()[row * k..(row + 1) * k].to_vec();
                let f = feats.pooled.data()[row * d..(row + 1) * d].to_vec();
                c.rows[i] = Some((l, f));
            }
        }
        let b = idx.len();
        let mut logits = Tensor::zeros(&[b, k]);
        let mut feats = Tensor::zeros(&[b, d]);
        for (row, &i) in idx.iter().enumerate() {
            let (l, f) = c.rows[i].as_ref().expect("filled above");
            logits.data_mut()[row * k..(row + 1) * k].copy_from_slice(l);
            feats.data_mut()[row * d..(row + 1) * d].copy_from_slice(f);
        }
        Ok((logits, feats))
    } else {
        let (logits, feats) = teacher.forward_eval(batch)?;
        Ok((logits, feats.pooled))
    }
}

/// Stacks the windows at `idx` into a `[B, C, L]` batch with labels and
/// ground-truth BPM values.
pub fn assemble_batch(
    samples: &[WindowedSample],
    idx: &[usize],
) -> Result<(Tensor, Vec<usize>, Vec<f64>)> {
    if idx.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let shape = samples[idx[0]].window.shape().to_vec();
    let row_len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(idx.len() * row_len);
    let mut labels = Vec::with_capacity(idx.len());
    let mut bpm = Vec::with_capacity(idx.len());
    for &i in idx {
        let w = &samples[i];
        if w.window.shape() != shape.as_slice() {
            return Err(Error::shape(shape.as_slice(), w.window.shape()));
        }
        data.extend_from_slice(w.window.data());
        labels.push(w.class_bin);
        bpm.push(w.hr_bpm);
    }
    let mut full_shape = Vec::with_capacity(shape.len() + 1);
    full_shape.push(idx.len());
    full_shape.extend_from_slice(&shape);
    Ok((Tensor::from_vec(&full_shape, data)?, labels, bpm))
}

/// Runs `epochs` additional epochs on existing state. Epoch `e` (global,
/// counted across resumes) shuffles with a generator derived from
/// `(cfg.seed, e)`, so an interrupted-and-resumed run walks the exact batch
/// sequence of an uninterrupted one.
pub fn train_epochs(
    state: &mut TrainState,
    train_set: &[WindowedSample],
    val_set: &[WindowedSample],
    cfg: &TrainConfig,
    teacher: Option<&Model>,
    epochs: usize,
    clock: &dyn Clock,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if val_set.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    match (cfg.distill.strategy.needs_teacher(), teacher) {
        (true, None) => {
            return Err(Error::InvalidConfig(alloc::format!(
                "strategy '{}' requires a teacher",
                cfg.distill.strategy
            )))
        }
        (false, Some(_)) => {
            return Err(Error::InvalidConfig(
                "scratch training must not receive a teacher".into(),
            ))
        }
        _ => {}
    }
    let mut history = TrainHistory::default();
    let mut teacher_cache = teacher.and_then(|t| {
        TeacherCache::new(train_set.len(), t.spec().num_classes, t.feature_dim())
    });
    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..epochs {
        let epoch = state.completed_epochs;
        let t_start = clock.now_s();
        let mut r = rng::derived(cfg.seed, epoch as u64);
        order.sort_unstable(); // reset to canonical order before shuffling
        rng::shuffle(&mut r, &mut order);
        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (batch, labels, _) = assemble_batch(train_set, chunk)?;
            let teacher_out = match teacher {
                Some(t) => {
                    let (l, f) = teacher_outputs_for_batch(t, &mut teacher_cache, chunk, &batch)?;
                    Some((l, f))
                }
                None => None,
            };
            // gradients are zeroed before the loss because feature
            // distillation accumulates projector gradients inside total_loss
            state.model.zero_grads();
            if let Some(p) = state.projector.as_mut() {
                p.zero_grads();
            }
            let (logits, feats) = state.model.forward_train(&batch)?;
            let bundle = total_loss(
                &cfg.distill,
                StudentOutputs {
                    logits: &logits,
                    features: &feats.pooled,
                },
                teacher_out
                    .as_ref()
                    .map(|(l, f)| TeacherOutputs { logits: l, features: f }),
                &labels,
                state.projector.as_mut(),
            )
            .map_err(|e| match e {
                // non-finite activations surface as a located training failure
                Error::NonFiniteInput(_) => Error::NonFiniteLoss { epoch, batch: batch_idx },
                other => other,
            })?;
            if !bundle.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
            }
            state
                .model
                .backward_with_feature_grad(&bundle.logit_grad, bundle.feature_grad.as_ref())?;
            adam_step(&mut state.model.params_mut(), &mut state.adam, cfg.lr)?;
            if let (Some(p), Some(pa)) = (state.projector.as_mut(), state.projector_adam.as_mut())
            {
                adam_step(&mut p.params_mut(), pa, cfg.lr)?;
            }
            loss_sum += bundle.total * chunk.len() as f64;
        }
        history.train_loss.push(loss_sum / n as f64);
        history.val_mae.push(evaluate_mae(&state.model, val_set)?);
        history.epoch_seconds.push(clock.now_s() - t_start);
        state.completed_epochs = epoch + 1;
    }
    Ok(history)
}

/// Builds a model and trains it for `cfg.epochs` epochs.
pub fn train(
    spec: &ModelSpec,
    train_set: &[WindowedSample],
    val_set: &[WindowedSample],
    cfg: &TrainConfig,
    teacher: Option<&Model>,
    clock: &dyn Clock,
) -> Result<(Model, TrainHistory)> {
    let mut state = init_state(spec, cfg, teacher)?;
    let history = train_epochs(&mut state, train_set, val_set, cfg, teacher, cfg.epochs, clock)?;
    Ok((state.model, history))
}

/// Mean absolute error (BPM) of argmax-decoded predictions over `samples`,
/// evaluated in evaluation mode.
pub fn evaluate_mae(model: &Model, samples: &[WindowedSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    const EVAL_BATCH: usize = 256;
    let idx: Vec<usize> = (0..samples.len()).collect();
    let k = model.spec().num_classes;
    let mut abs_sum = 0.0;
    for chunk in idx.chunks(EVAL_BATCH) {
        let (batch, _, bpm) = assemble_batch(samples, chunk)?;
        let (logits, _) = model.forward_eval(&batch)?;
        for (row, &truth) in bpm.iter().enumerate() {
            let pred_bin = argmax_row(&logits.data()[row * k..(row + 1) * k]);
            let pred = crate::data::bin_to_bpm(pred_bin)?;
            abs_sum += (pred - truth).abs();
        }
    }
    Ok(abs_sum / samples.len() as f64)
}

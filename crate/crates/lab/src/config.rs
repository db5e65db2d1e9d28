//! Experiment configuration: one TOML file describes the data source, the
//! participant split, the models, the distillation setup, the training
//! hyperparameters, and (optionally) a capacity sweep. Everything is
//! validated up front — a run that starts training has a fully valid config.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pulsekd_core::data::NUM_FOLDS;
use pulsekd_core::distill::{DistillConfig, Strategy};
use pulsekd_core::model::ModelSpec;
use pulsekd_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::validation;

/// Default teacher capacities swept when the config does not narrow them.
pub const DEFAULT_TEACHER_BLOCKS: [usize; 8] = [2, 3, 4, 5, 6, 8, 10, 12];
/// Default student capacities swept when the config does not narrow them.
pub const DEFAULT_STUDENT_BLOCKS: [usize; 8] = [1, 2, 3, 4, 5, 6, 8, 10];

/// Top-level experiment description, loaded from TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed: corpus generation, splits and training all derive from it.
    #[serde(default)]
    pub seed: u64,
    /// Output root; overridable by `--out` and the `PULSEKD_OUT` variable.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub data: DataSection,
    #[serde(default)]
    pub split: SplitSection,
    /// Teacher architecture; required by any strategy that distills.
    #[serde(default)]
    pub teacher: Option<ModelSpec>,
    /// Reuse an existing teacher checkpoint instead of training one.
    #[serde(default)]
    pub teacher_checkpoint: Option<PathBuf>,
    /// Student architecture for single-run training (`train` verb).
    #[serde(default)]
    pub student: Option<ModelSpec>,
    /// Distillation setup; defaults are filled per strategy when absent.
    #[serde(default)]
    pub distill: Option<DistillConfig>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

/// Where windows come from: the built-in generator or recording files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Files,
}

/// `[data]` table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// Root directory of `.ppg` recording files (`source = "files"`).
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "d_participants")]
    pub participants: usize,
    /// Length of each generated recording, seconds.
    #[serde(default = "d_duration")]
    pub duration_s: f64,
    #[serde(default = "d_rate")]
    pub sample_rate_hz: f64,
    /// Additive Gaussian noise amplitude relative to the unit-scale pulse.
    #[serde(default = "d_noise")]
    pub noise_level: f64,
    /// Heart-rate profile range for generated participants, BPM.
    #[serde(default = "d_hr_min")]
    pub hr_min: f64,
    #[serde(default = "d_hr_max")]
    pub hr_max: f64,
    /// Piecewise-linear profile control points per participant.
    #[serde(default = "d_control_points")]
    pub control_points: usize,
}

fn d_participants() -> usize {
    30
}
fn d_duration() -> f64 {
    80.0
}
fn d_rate() -> f64 {
    25.0
}
fn d_noise() -> f64 {
    0.3
}
fn d_hr_min() -> f64 {
    50.0
}
fn d_hr_max() -> f64 {
    180.0
}
fn d_control_points() -> usize {
    5
}

impl DataSection {
    pub fn validate(&self) -> Result<()> {
        match self.source {
            DataSource::Files => {
                if self.path.is_none() {
                    return Err(validation("[data] source = \"files\" requires `path`"));
                }
            }
            DataSource::Synthetic => {
                if self.path.is_some() {
                    return Err(validation(
                        "[data] `path` is only meaningful with source = \"files\"",
                    ));
                }
                if self.participants < 2 {
                    return Err(validation(
                        "[data] participants must be at least 2 (one per split side)",
                    ));
                }
                if !(self.duration_s >= 8.0) {
                    return Err(validation(
                        "[data] duration_s must cover at least one 8-second window",
                    ));
                }
                if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
                    return Err(validation("[data] sample_rate_hz must be positive"));
                }
                if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
                    return Err(validation("[data] noise_level must be nonnegative"));
                }
                if !(30.0 < self.hr_min && self.hr_min < self.hr_max && self.hr_max < 210.0) {
                    return Err(validation(
                        "[data] need 30 < hr_min < hr_max < 210 (the supported label band)",
                    ));
                }
                if self.control_points == 0 {
                    return Err(validation("[data] control_points must be at least 1"));
                }
            }
        }
        Ok(())
    }
}

/// How participants divide into train/test sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// All participants shuffled together.
    #[default]
    Pooled,
    /// Each dataset directory split independently, then unioned.
    PerDataset,
}

/// `[split]` table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "d_train_fraction")]
    pub train_fraction: f64,
    /// Which cross-validation folds to run (subset of {0, 1}).
    #[serde(default = "d_folds")]
    pub folds: Vec<usize>,
    #[serde(default)]
    pub mode: SplitMode,
    /// Split-specific seed; falls back to the master seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn d_train_fraction() -> f64 {
    0.8
}
fn d_folds() -> Vec<usize> {
    vec![0, 1]
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train_fraction: d_train_fraction(),
            folds: d_folds(),
            mode: SplitMode::default(),
            seed: None,
        }
    }
}

impl SplitSection {
    fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(validation("[split] train_fraction must lie in (0, 1)"));
        }
        if self.folds.is_empty() {
            return Err(validation("[split] folds must name at least one fold"));
        }
        for &f in &self.folds {
            if f >= NUM_FOLDS {
                return Err(validation(format!(
                    "[split] fold {f} out of range (folds are 0..{NUM_FOLDS})"
                )));
            }
        }
        let mut seen = self.folds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.folds.len() {
            return Err(validation("[split] folds must not repeat"));
        }
        Ok(())
    }
}

/// `[train]` table: the hyperparameters shared by every run of the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_batch_size")]
    pub batch_size: usize,
}

fn d_epochs() -> usize {
    300
}
fn d_lr() -> f64 {
    5e-4
}
fn d_batch_size() -> usize {
    128
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: d_epochs(),
            lr: d_lr(),
            batch_size: d_batch_size(),
        }
    }
}

impl TrainSection {
    /// Assembles the engine-level training config for one run.
    pub fn to_core(&self, seed: u64, distill: DistillConfig) -> TrainConfig {
        let mut cfg = TrainConfig::new(distill);
        cfg.epochs = self.epochs;
        cfg.lr = self.lr;
        cfg.batch_size = self.batch_size;
        cfg.seed = seed;
        cfg
    }
}

/// `[sweep]` table: the strategy × teacher × student matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Distillation strategies to sweep (the scratch baseline has its own flag).
    pub strategies: Vec<Strategy>,
    #[serde(default = "d_teacher_blocks")]
    pub teacher_blocks: Vec<usize>,
    #[serde(default = "d_student_blocks")]
    pub student_blocks: Vec<usize>,
    #[serde(default = "d_true")]
    pub include_scratch_baseline: bool,
}

fn d_teacher_blocks() -> Vec<usize> {
    DEFAULT_TEACHER_BLOCKS.to_vec()
}
fn d_student_blocks() -> Vec<usize> {
    DEFAULT_STUDENT_BLOCKS.to_vec()
}
fn d_true() -> bool {
    true
}

impl SweepSection {
    fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(validation("[sweep] strategies must not be empty"));
        }
        if self.strategies.contains(&Strategy::Scratch) {
            return Err(validation(
                "[sweep] scratch is the baseline, not a sweep strategy; \
                 use include_scratch_baseline",
            ));
        }
        let mut s = self.strategies.clone();
        s.sort_unstable_by_key(|v| v.as_str());
        s.dedup();
        if s.len() != self.strategies.len() {
            return Err(validation("[sweep] strategies must not repeat"));
        }
        for (name, list) in [
            ("teacher_blocks", &self.teacher_blocks),
            ("student_blocks", &self.student_blocks),
        ] {
            if list.is_empty() {
                return Err(validation(format!("[sweep] {name} must not be empty")));
            }
            if list.iter().any(|&b| !(1..=12).contains(&b)) {
                return Err(validation(format!("[sweep] {name} entries must be in 1..=12")));
            }
            let mut d = list.clone();
            d.sort_unstable();
            d.dedup();
            if d.len() != list.len() {
                return Err(validation(format!("[sweep] {name} must not repeat")));
            }
        }
        Ok(())
    }
}

impl ExperimentConfig {
    /// Reads and parses a config file, with pointed messages on failure.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| validation(format!("config {}: {e}", path.display())))?;
        cfg.validate_common()?;
        Ok(cfg)
    }

    /// Checks every section that any verb relies on.
    pub fn validate_common(&self) -> Result<()> {
        self.data.validate()?;
        self.split.validate()?;
        if let Some(t) = &self.teacher {
            t.validate().map_err(|e| validation(format!("[teacher] {e}")))?;
        }
        if let Some(s) = &self.student {
            s.validate().map_err(|e| validation(format!("[student] {e}")))?;
        }
        if let Some(d) = &self.distill {
            d.validate().map_err(|e| validation(format!("[distill] {e}")))?;
        }
        if let Some(sw) = &self.sweep {
            sw.validate()?;
        }
        if self.train.epochs == 0 {
            return Err(validation("[train] epochs must be at least 1"));
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err(validation("[train] lr must be finite and positive"));
        }
        if self.train.batch_size == 0 {
            return Err(validation("[train] batch_size must be at least 1"));
        }
        if self.split.mode == SplitMode::PerDataset && self.data.source == DataSource::Synthetic {
            return Err(validation(
                "[split] per_dataset mode needs dataset directories (source = \"files\")",
            ));
        }
        Ok(())
    }

    /// Additional requirements for a single training run (`train` verb).
    pub fn validate_for_train(&self) -> Result<()> {
        let student = self
            .student
            .as_ref()
            .ok_or_else(|| validation("the train verb needs a [student] section"))?;
        let distill = self
            .distill
            .as_ref()
            .ok_or_else(|| validation("the train verb needs a [distill] section"))?;
        if distill.strategy.needs_teacher() {
            if self.teacher.is_none() {
                return Err(validation(format!(
                    "[distill] strategy \"{}\" requires a [teacher] section",
                    distill.strategy
                )));
            }
        } else if self.teacher.is_some() {
            return Err(validation(
                "[teacher] is set but the scratch strategy never uses it",
            ));
        }
        if let (Some(t), Some(_)) = (&self.teacher, &self.student) {
            if t.num_classes != student.num_classes
                || t.input_channels != student.input_channels
                || t.input_length != student.input_length
            {
                return Err(validation(
                    "[teacher] and [student] must agree on input shape and classes",
                ));
            }
        }
        Ok(())
    }

    /// Additional requirements for the sweep verb.
    pub fn validate_for_sweep(&self) -> Result<&SweepSection> {
        self.sweep
            .as_ref()
            .ok_or_else(|| validation("the sweep verb needs a [sweep] section"))
    }

    /// Seed used for participant splitting.
    pub fn split_seed(&self) -> u64 {
        self.split.seed.unwrap_or(self.seed)
    }

    /// Distillation config for `strategy`: the `[distill]` table with its
    /// strategy swapped, or the per-strategy defaults when absent.
    pub fn distill_for(&self, strategy: Strategy) -> DistillConfig {
        match &self.distill {
            Some(d) => {
                let mut cfg = d.clone();
                cfg.strategy = strategy;
                cfg
            }
            None => DistillConfig::for_strategy(strategy),
        }
    }
}

/// Resolves the output root: `--out` flag, then the config, then the
/// `PULSEKD_OUT` environment variable, then `./pulsekd_out`.
pub fn resolve_out_dir(flag: Option<PathBuf>, config: Option<&ExperimentConfig>) -> PathBuf {
    if let Some(p) = flag {
        return p;
    }
    if let Some(p) = config.and_then(|c| c.out_dir.clone()) {
        return p;
    }
    if let Some(p) = std::env::var_os("PULSEKD_OUT") {
        return PathBuf::from(p);
    }
    PathBuf::from("pulsekd_out")
}

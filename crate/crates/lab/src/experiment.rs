//! Experiment orchestration: corpus preparation, participant-level fold
//! assembly, teacher training with on-disk reuse, and the single-run
//! `train` verb.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pulsekd_core::data::{split_participants, WindowedSample};
use pulsekd_core::distill::{DistillConfig, Strategy};
use pulsekd_core::model::{Arch, Model, ModelSpec};
use pulsekd_core::train::{evaluate_mae, init_state, train_epochs, SystemClock, TrainHistory};
use serde::Serialize;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{DataSource, ExperimentConfig, SplitMode};
use crate::corpus::synth_corpus;
use crate::dataset::load_corpus;
use crate::error::validation;

/// One participant's windowed samples, tagged with the dataset it came from.
#[derive(Debug, Clone)]
pub struct ParticipantData {
    pub dataset: String,
    pub participant_id: String,
    pub windows: Vec<WindowedSample>,
}

/// Train/test window sets realizing one fold of the participant split.
#[derive(Debug, Clone)]
pub struct FoldSets {
    pub fold: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub train: Vec<WindowedSample>,
    pub test: Vec<WindowedSample>,
}

/// Loads (or generates) the corpus and runs every recording through the
/// resample → window → label pipeline. Participants come back in a canonical
/// deterministic order: the corpus order for generated data, sorted
/// dataset/id order for file corpora.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<Vec<ParticipantData>> {
    let labeled: Vec<(String, pulsekd_core::data::PpgRecording)> = match cfg.data.source {
        DataSource::Synthetic => synth_corpus(&cfg.data, cfg.seed)?
            .into_iter()
            .map(|rec| ("synthetic".to_string(), rec))
            .collect(),
        DataSource::Files => {
            let root = cfg
                .data
                .path
                .as_ref()
                .expect("files source validated to carry a path");
            load_corpus(root)?
                .into_iter()
                .map(|lr| (lr.dataset, lr.recording))
                .collect()
        }
    };
    let mut out = Vec::with_capacity(labeled.len());
    for (dataset, rec) in labeled {
        let windows = pulsekd_core::data::prepare_recording(&rec)
            .with_context(|| format!("preparing participant {}", rec.participant_id))?;
        out.push(ParticipantData {
            dataset,
            participant_id: rec.participant_id,
            windows,
        });
    }
    Ok(out)
}

/// FNV-1a over the dataset name, diffused once — gives each dataset its own
/// split seed in per-dataset mode so groups are shuffled independently.
fn dataset_split_seed(base: u64, dataset: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in dataset.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    base ^ h
}

/// Assembles one fold's train/test window sets from prepared participants,
/// honoring the configured split mode. Window order within each side follows
/// the canonical participant order (not the shuffled split order), so
/// downstream training sees a deterministic sequence.
pub fn fold_sets(
    data: &[ParticipantData],
    cfg: &ExperimentConfig,
    fold: usize,
) -> Result<FoldSets> {
    let seed = cfg.split_seed();
    let fraction = cfg.split.train_fraction;
    let (mut train_ids, mut test_ids) = (Vec::new(), Vec::new());
    match cfg.split.mode {
        SplitMode::Pooled => {
            let ids: Vec<String> = data.iter().map(|p| p.participant_id.clone()).collect();
            let plan = split_participants(&ids, fraction, fold, seed)?;
            train_ids = plan.train;
            test_ids = plan.test;
        }
        SplitMode::PerDataset => {
            let mut groups: BTreeMap<&str, Vec<String>> = BTreeMap::new();
            for p in data {
                groups
                    .entry(p.dataset.as_str())
                    .or_default()
                    .push(p.participant_id.clone());
            }
            for (dataset, ids) in groups {
                let plan =
                    split_participants(&ids, fraction, fold, dataset_split_seed(seed, dataset))
                        .with_context(|| format!("splitting dataset {dataset}"))?;
                train_ids.extend(plan.train);
                test_ids.extend(plan.test);
            }
        }
    }

    let in_train: std::collections::HashSet<&str> =
        train_ids.iter().map(|s| s.as_str()).collect();
    let in_test: std::collections::HashSet<&str> =
        test_ids.iter().map(|s| s.as_str()).collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for p in data {
        if in_train.contains(p.participant_id.as_str()) {
            train.extend(p.windows.iter().cloned());
        } else if in_test.contains(p.participant_id.as_str()) {
            test.extend(p.windows.iter().cloned());
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(validation(format!(
            "fold {fold}: the split left {} training and {} test windows; \
             need at least one window on each side",
            train.len(),
            test.len()
        )));
    }
    Ok(FoldSets {
        fold,
        train_ids,
        test_ids,
        train,
        test,
    })
}

/// Short filesystem-safe description of an architecture, used in checkpoint
/// and report file names.
pub fn spec_slug(spec: &ModelSpec) -> String {
    match &spec.arch {
        Arch::Resnet1d { num_blocks } => format!("resnet{num_blocks}"),
        Arch::Mlp { hidden_widths } => {
            let dims: Vec<String> = hidden_widths.iter().map(|w| w.to_string()).collect();
            format!("mlp{}", dims.join("x"))
        }
    }
}

/// Returns the teacher for `(spec, fold)`, in priority order: an explicitly
/// configured checkpoint, a cached checkpoint under `out_dir/teachers/`, or
/// a fresh scratch training run (which is then cached).
///
/// A loaded checkpoint must match the requested spec and — for cached
/// teachers — the configured epoch budget, so a stale cache from an earlier
/// config fails loudly instead of silently degrading every student cell.
pub fn get_or_train_teacher(
    spec: &ModelSpec,
    sets: &FoldSets,
    cfg: &ExperimentConfig,
    out_dir: &Path,
    explicit: Option<&Path>,
) -> Result<Model> {
    if let Some(path) = explicit {
        let state = load_checkpoint(path)?;
        if state.model.spec() != spec {
            return Err(validation(format!(
                "teacher checkpoint {} holds a {} model but the config asks for {}",
                path.display(),
                spec_slug(state.model.spec()),
                spec_slug(spec)
            )));
        }
        return Ok(state.model);
    }

    let cache = out_dir
        .join("teachers")
        .join(format!("teacher_{}_f{}.ckpt", spec_slug(spec), sets.fold));
    if cache.exists() {
        let state = load_checkpoint(&cache)?;
        if state.model.spec() != spec || state.completed_epochs != cfg.train.epochs {
            return Err(validation(format!(
                "cached teacher {} does not match the current config \
                 (found {} at {} epochs, want {} at {}); remove it to retrain",
                cache.display(),
                spec_slug(state.model.spec()),
                state.completed_epochs,
                spec_slug(spec),
                cfg.train.epochs
            )));
        }
        return Ok(state.model);
    }

    let core_cfg = cfg
        .train
        .to_core(cfg.seed, DistillConfig::for_strategy(Strategy::Scratch));
    let mut state = init_state(spec, &core_cfg, None)?;
    // The per-epoch MAE curve is informational — no model selection happens
    // on it — so evaluating on the held-out side is reporting, not leakage.
    train_epochs(
        &mut state,
        &sets.train,
        &sets.test,
        &core_cfg,
        None,
        core_cfg.epochs,
        &SystemClock::default(),
    )
    .with_context(|| format!("training teacher {} fold {}", spec_slug(spec), sets.fold))?;
    save_checkpoint(&state, &cache)?;
    Ok(state.model)
}

/// One fold's outcome from the `train` verb.
#[derive(Debug, Clone, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub strategy: String,
    pub student: ModelSpec,
    pub teacher: Option<ModelSpec>,
    pub seed: u64,
    pub n_train_windows: usize,
    pub n_test_windows: usize,
    pub final_train_loss: f64,
    pub test_mae_bpm: f64,
    pub checkpoint: PathBuf,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    verb: &'a str,
    config: &'a ExperimentConfig,
}

/// Renders the run's metadata echo — the verb plus the full validated
/// config, with no timestamps so identical runs produce identical bytes.
pub fn run_meta_string(verb: &str, cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string_pretty(&RunMeta { verb, config: cfg }).context("serializing run metadata")
}

/// Writes `run.toml` under `out_dir`.
pub fn write_run_meta(verb: &str, cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let meta = run_meta_string(verb, cfg)?;
    fs::write(out_dir.join("run.toml"), meta).context("writing run.toml")?;
    Ok(())
}

fn write_history_csv(history: &TrainHistory, path: &Path) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_mae_bpm,epoch_seconds\n");
    for (i, ((loss, mae), secs)) in history
        .train_loss
        .iter()
        .zip(&history.val_mae)
        .zip(&history.epoch_seconds)
        .enumerate()
    {
        out.push_str(&format!("{i},{loss},{mae},{secs}\n"));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Runs the `train` verb: per configured fold, resolve the teacher (if the
/// strategy needs one), train the student, checkpoint it, and evaluate on
/// the held-out participants. Returns one result per fold and writes
/// `train/results.json`, per-fold history CSVs, and `run.toml` under
/// `out_dir`.
pub fn run_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<FoldResult>> {
    cfg.validate_common()?;
    cfg.validate_for_train()?;
    let student = cfg.student.as_ref().expect("checked by validate_for_train");
    let distill = cfg.distill.as_ref().expect("checked by validate_for_train");

    let data = prepare_data(cfg)?;
    write_run_meta("train", cfg, out_dir)?;
    let train_dir = out_dir.join("train");
    fs::create_dir_all(&train_dir)
        .with_context(|| format!("creating {}", train_dir.display()))?;

    let mut results = Vec::new();
    for &fold in &cfg.split.folds {
        let sets = fold_sets(&data, cfg, fold)?;
        let teacher = if distill.strategy.needs_teacher() {
            let tspec = cfg.teacher.as_ref().expect("checked by validate_for_train");
            Some(get_or_train_teacher(
                tspec,
                &sets,
                cfg,
                out_dir,
                cfg.teacher_checkpoint.as_deref(),
            )?)
        } else {
            None
        };

        let core_cfg = cfg.train.to_core(cfg.seed, distill.clone());
        let mut state = init_state(student, &core_cfg, teacher.as_ref())?;
        let history = train_epochs(
            &mut state,
            &sets.train,
            &sets.test,
            &core_cfg,
            teacher.as_ref(),
            core_cfg.epochs,
            &SystemClock::default(),
        )
        .with_context(|| format!("training student fold {fold}"))?;

        let slug = spec_slug(student);
        let strategy = distill.strategy.as_str();
        let ckpt = train_dir.join(format!("student_{slug}_{strategy}_f{fold}.ckpt"));
        save_checkpoint(&state, &ckpt)?;
        write_history_csv(
            &history,
            &train_dir.join(format!("history_{slug}_{strategy}_f{fold}.csv")),
        )?;

        let mae = evaluate_mae(&state.model, &sets.test)?;
        let result = FoldResult {
            fold,
            strategy: strategy.to_string(),
            student: student.clone(),
            teacher: cfg.teacher.clone(),
            seed: cfg.seed,
            n_train_windows: sets.train.len(),
            n_test_windows: sets.test.len(),
            final_train_loss: *history
                .train_loss
                .last()
                .expect("at least one epoch was validated"),
            test_mae_bpm: mae,
            checkpoint: ckpt,
        };
        println!(
            "fold {fold}: {strategy} {slug} test MAE {mae:.3} BPM over {} windows",
            sets.test.len()
        );
        results.push(result);
    }

    let mut file = fs::File::create(train_dir.join("results.json"))
        .context("creating train/results.json")?;
    serde_json::to_writer_pretty(&mut file, &results)?;
    file.write_all(b"\n")?;
    Ok(results)
}

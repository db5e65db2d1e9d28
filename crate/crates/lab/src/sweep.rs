//! Capacity-sweep orchestration: plans the strategy × teacher × student ×
//! fold matrix (plus the from-scratch baseline per student size), trains
//! each teacher once per fold and reuses it across its student cells, runs
//! cells on a small worker pool, and appends one JSON record per cell to an
//! append-only `results.jsonl` log. Reruns with `--resume` skip every
//! recorded cell — successes and failures alike — so interrupted sweeps
//! continue instead of recomputing.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use pulsekd_core::distill::Strategy;
use pulsekd_core::model::{Model, ModelSpec};
use pulsekd_core::train::{evaluate_mae, init_state, train_epochs, SystemClock};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::validation;
use crate::experiment::{fold_sets, get_or_train_teacher, prepare_data, FoldSets};

/// Whether a cell is a from-scratch baseline or a distilled run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Baseline,
    Distilled,
}

/// Terminal state of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// One row of the append-only sweep log. Deliberately timestamp-free so
/// identical sweeps produce identical rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell_id: String,
    pub kind: CellKind,
    pub strategy: String,
    #[serde(default)]
    pub teacher_blocks: Option<usize>,
    pub student_blocks: usize,
    pub fold: usize,
    pub seed: u64,
    pub status: CellStatus,
    #[serde(default)]
    pub mae_bpm: Option<f64>,
    #[serde(default)]
    pub n_test_windows: Option<usize>,
    #[serde(default)]
    pub final_train_loss: Option<f64>,
    #[serde(default)]
    pub error: Option<String>,
}

/// One planned unit of work.
#[derive(Debug, Clone)]
pub struct CellPlan {
    pub cell_id: String,
    pub kind: CellKind,
    pub strategy: Strategy,
    pub teacher_blocks: Option<usize>,
    pub student_blocks: usize,
    pub fold: usize,
}

/// Expands a sweep section into the full cell list: baselines first (every
/// fold × student size when enabled), then distilled cells in fold →
/// strategy → teacher → student order.
pub fn plan_cells(cfg: &ExperimentConfig) -> Result<Vec<CellPlan>> {
    let sweep = cfg.validate_for_sweep()?;
    let mut plans = Vec::new();
    for &fold in &cfg.split.folds {
        if sweep.include_scratch_baseline {
            for &s in &sweep.student_blocks {
                plans.push(CellPlan {
                    cell_id: format!("scratch_s{s}_f{fold}"),
                    kind: CellKind::Baseline,
                    strategy: Strategy::Scratch,
                    teacher_blocks: None,
                    student_blocks: s,
                    fold,
                });
            }
        }
    }
    for &fold in &cfg.split.folds {
        for &strategy in &sweep.strategies {
            for &t in &sweep.teacher_blocks {
                for &s in &sweep.student_blocks {
                    plans.push(CellPlan {
                        cell_id: format!("{}_t{t}_s{s}_f{fold}", strategy.as_str()),
                        kind: CellKind::Distilled,
                        strategy,
                        teacher_blocks: Some(t),
                        student_blocks: s,
                        fold,
                    });
                }
            }
        }
    }
    Ok(plans)
}

/// Parses an existing results log, line by line, with pointed errors.
pub fn load_records(path: &Path) -> Result<Vec<CellRecord>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CellRecord = serde_json::from_str(line).map_err(|e| {
            validation(format!(
                "{} line {}: unparseable cell record ({e}); \
                 remove the damaged line to continue",
                path.display(),
                i + 1
            ))
        })?;
        records.push(rec);
    }
    Ok(records)
}

/// Everything a finished sweep hands back to the caller.
#[derive(Debug)]
pub struct SweepOutcome {
    /// All records now in the log: prior runs plus this one.
    pub records: Vec<CellRecord>,
    /// Cells executed by this invocation.
    pub newly_run: usize,
    /// Cells skipped because the log already contains them.
    pub skipped: usize,
    /// Failed cells across the whole log.
    pub failed_total: usize,
}

struct ResultsSink {
    file: Mutex<fs::File>,
    records: Mutex<Vec<CellRecord>>,
}

impl ResultsSink {
    fn append(&self, record: CellRecord) -> Result<()> {
        let line = serde_json::to_string(&record)?;
        {
            let mut file = self.file.lock().expect("results file lock");
            // One write per record keeps concurrent appends line-atomic.
            file.write_all(format!("{line}\n").as_bytes())?;
            file.flush()?;
        }
        self.records.lock().expect("records lock").push(record);
        Ok(())
    }
}

fn train_one_cell(
    plan: &CellPlan,
    cfg: &ExperimentConfig,
    sets: &FoldSets,
    teacher: Option<&Model>,
) -> Result<(f64, usize, f64)> {
    let spec = ModelSpec::resnet(plan.student_blocks);
    let core_cfg = cfg.train.to_core(cfg.seed, cfg.distill_for(plan.strategy));
    let mut state = init_state(&spec, &core_cfg, teacher)?;
    let history = train_epochs(
        &mut state,
        &sets.train,
        &sets.test,
        &core_cfg,
        teacher,
        core_cfg.epochs,
        &SystemClock::default(),
    )?;
    let mae = evaluate_mae(&state.model, &sets.test)?;
    let final_loss = *history
        .train_loss
        .last()
        .expect("epochs >= 1 is validated");
    Ok((mae, sets.test.len(), final_loss))
}

/// Runs the sweep described by `cfg` under `out_dir` with up to `jobs`
/// concurrent cells. Teachers are resolved serially first (one training per
/// teacher size × fold, cached on disk), then cells draw from a shared queue.
/// Cell failures are recorded and the sweep continues; infrastructure
/// failures (unwritable log, corrupt cache) abort.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    jobs: usize,
    resume: bool,
) -> Result<SweepOutcome> {
    cfg.validate_common()?;
    let _ = cfg.validate_for_sweep()?;
    if cfg.teacher_checkpoint.is_some() {
        return Err(validation(
            "sweeps train one teacher per size and fold; teacher_checkpoint \
             only applies to the train verb",
        ));
    }

    let results_path = out_dir.join("results.jsonl");
    let existing = if results_path.exists() {
        if !resume {
            return Err(validation(format!(
                "{} already holds sweep results; pass --resume to continue \
                 that sweep or choose a fresh output directory",
                results_path.display()
            )));
        }
        load_records(&results_path)?
    } else {
        Vec::new()
    };
    let done: HashSet<String> = existing.iter().map(|r| r.cell_id.clone()).collect();

    let plans = plan_cells(cfg)?;
    let pending: Vec<CellPlan> = plans
        .iter()
        .filter(|p| !done.contains(&p.cell_id))
        .cloned()
        .collect();
    let skipped = plans.len() - pending.len();
    if skipped > 0 {
        println!("resume: skipping {skipped} recorded cells, {} remain", pending.len());
    }

    // Resuming against a different config would mix incompatible cells into
    // one log; compare the stored metadata echo before touching anything.
    let meta_path = out_dir.join("run.toml");
    if resume && meta_path.exists() {
        let stored: toml::Value = fs::read_to_string(&meta_path)?
            .parse()
            .with_context(|| format!("parsing {}", meta_path.display()))?;
        let current: toml::Value =
            crate::experiment::run_meta_string("sweep", cfg)?.parse()?;
        if stored != current {
            return Err(validation(format!(
                "{} was written by a different sweep configuration; resuming \
                 would mix incompatible cells — use a fresh output directory",
                meta_path.display()
            )));
        }
    }
    crate::experiment::write_run_meta("sweep", cfg, out_dir)?;

    let folds_needed: BTreeSet<usize> = pending.iter().map(|p| p.fold).collect();

    let mut sets_by_fold: BTreeMap<usize, Arc<FoldSets>> = BTreeMap::new();
    let mut teachers: HashMap<(usize, usize), Arc<Model>> = HashMap::new();
    if !folds_needed.is_empty() {
        let data = prepare_data(cfg)?;
        for &fold in &folds_needed {
            sets_by_fold.insert(fold, Arc::new(fold_sets(&data, cfg, fold)?));
        }
        let teacher_keys: BTreeSet<(usize, usize)> = pending
            .iter()
            .filter_map(|p| p.teacher_blocks.map(|t| (p.fold, t)))
            .collect();
        for &(fold, blocks) in &teacher_keys {
            println!("teacher resnet{blocks} fold {fold}: resolving");
            let model = get_or_train_teacher(
                &ModelSpec::resnet(blocks),
                &sets_by_fold[&fold],
                cfg,
                out_dir,
                None,
            )?;
            teachers.insert((fold, blocks), Arc::new(model));
        }
    }

    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&results_path)
        .with_context(|| format!("opening {}", results_path.display()))?;
    let sink = Arc::new(ResultsSink {
        file: Mutex::new(file),
        records: Mutex::new(Vec::new()),
    });

    let queue: Mutex<VecDeque<CellPlan>> = Mutex::new(pending.iter().cloned().collect());
    let total = pending.len();
    let done_counter = AtomicUsize::new(0);
    let workers = jobs.max(1).min(total.max(1));

    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for _ in 0..workers {
            let queue = &queue;
            let sink = Arc::clone(&sink);
            let sets_by_fold = &sets_by_fold;
            let teachers = &teachers;
            let done_counter = &done_counter;
            handles.push(scope.spawn(move || -> Result<()> {
                loop {
                    let plan = match queue.lock().expect("queue lock").pop_front() {
                        Some(p) => p,
                        None => return Ok(()),
                    };
                    let sets = &sets_by_fold[&plan.fold];
                    let teacher = plan
                        .teacher_blocks
                        .map(|t| teachers[&(plan.fold, t)].as_ref());
                    let outcome = train_one_cell(&plan, cfg, sets, teacher);
                    let record = match outcome {
                        Ok((mae, n_test, final_loss)) => CellRecord {
                            cell_id: plan.cell_id.clone(),
                            kind: plan.kind,
                            strategy: plan.strategy.as_str().to_string(),
                            teacher_blocks: plan.teacher_blocks,
                            student_blocks: plan.student_blocks,
                            fold: plan.fold,
                            seed: cfg.seed,
                            status: CellStatus::Ok,
                            mae_bpm: Some(mae),
                            n_test_windows: Some(n_test),
                            final_train_loss: Some(final_loss),
                            error: None,
                        },
                        Err(e) => CellRecord {
                            cell_id: plan.cell_id.clone(),
                            kind: plan.kind,
                            strategy: plan.strategy.as_str().to_string(),
                            teacher_blocks: plan.teacher_blocks,
                            student_blocks: plan.student_blocks,
                            fold: plan.fold,
                            seed: cfg.seed,
                            status: CellStatus::Failed,
                            mae_bpm: None,
                            n_test_windows: None,
                            final_train_loss: None,
                            error: Some(format!("{e:#}")),
                        },
                    };
                    let finished = done_counter.fetch_add(1, Ordering::Relaxed) + 1;
                    match (&record.status, &record.mae_bpm, &record.error) {
                        (CellStatus::Ok, Some(mae), _) => {
                            println!(
                                "cell {} [{}/{}]: MAE {:.3} BPM",
                                record.cell_id, finished, total, mae
                            )
                        }
                        (_, _, err) => println!(
                            "cell {} [{}/{}]: FAILED ({})",
                            record.cell_id,
                            finished,
                            total,
                            err.as_deref().unwrap_or("unknown")
                        ),
                    }
                    sink.append(record)?;
                }
            }));
        }
        for h in handles {
            h.join().expect("worker thread panicked")?;
        }
        Ok(())
    })?;

    let newly_run = Arc::try_unwrap(sink)
        .map_err(|_| anyhow::anyhow!("a worker still holds the results sink"))?
        .records
        .into_inner()
        .expect("records lock");
    let mut records = existing;
    records.extend(newly_run.iter().cloned());
    let failed_total = records
        .iter()
        .filter(|r| r.status == CellStatus::Failed)
        .count();
    Ok(SweepOutcome {
        newly_run: newly_run.len(),
        skipped,
        failed_total,
        records,
    })
}

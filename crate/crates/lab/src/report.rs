//! Report emission: pure, deterministic views over raw cell records.
//!
//! Every file is recomputable from `results.jsonl` alone — reports carry no
//! state of their own. Matrices use the paper-style orientation: one row per
//! student size, a `from_scratch` column for the baseline, then one column
//! per teacher size. MAE aggregates come in two flavors because the
//! underlying convention is ambiguous: `foldmean` averages the per-fold
//! MAEs, `pooled` weights each fold by its test-window count.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pulsekd_core::model::{param_count_comparison, Model, ModelSpec};
use pulsekd_core::scaling::fit_exponential;

use crate::bench::BenchResult;
use crate::error::validation;
use crate::experiment::spec_slug;
use crate::sweep::{CellRecord, CellStatus};

/// Capacity axis used for scaling fits and series files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SizeAxis {
    /// Residual block count — the sweep's native unit.
    #[default]
    Blocks,
    /// Trainable parameter count of the student architecture.
    Params,
}

impl SizeAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "blocks" => Ok(SizeAxis::Blocks),
            "params" => Ok(SizeAxis::Params),
            other => Err(validation(format!(
                "unknown size axis \"{other}\" (expected \"blocks\" or \"params\")"
            ))),
        }
    }

    fn value(&self, blocks: usize, cache: &mut BTreeMap<usize, f64>) -> f64 {
        match self {
            SizeAxis::Blocks => blocks as f64,
            SizeAxis::Params => *cache.entry(blocks).or_insert_with(|| {
                Model::build(&ModelSpec::resnet(blocks), 0)
                    .expect("sweep sizes build by construction")
                    .count_params() as f64
            }),
        }
    }
}

/// (fold, mae, n_test) observations for one matrix position.
type Observations = Vec<(usize, f64, usize)>;

fn fold_mean(obs: &Observations) -> f64 {
    obs.iter().map(|(_, mae, _)| mae).sum::<f64>() / obs.len() as f64
}

fn pooled(obs: &Observations) -> f64 {
    let (num, den) = obs.iter().fold((0.0, 0.0), |(num, den), &(_, mae, n)| {
        (num + mae * n as f64, den + n as f64)
    });
    num / den
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct Aggregated {
    /// strategy → (teacher, student) → observations. Baselines live under
    /// the "scratch" strategy with teacher = None.
    by_strategy: BTreeMap<String, BTreeMap<(Option<usize>, usize), Observations>>,
    student_sizes: BTreeSet<usize>,
}

fn aggregate(records: &[CellRecord]) -> Aggregated {
    let mut by_strategy: BTreeMap<String, BTreeMap<(Option<usize>, usize), Observations>> =
        BTreeMap::new();
    let mut student_sizes = BTreeSet::new();
    for r in records {
        if r.status != CellStatus::Ok {
            continue;
        }
        let (mae, n) = match (r.mae_bpm, r.n_test_windows) {
            (Some(mae), Some(n)) => (mae, n),
            _ => continue,
        };
        student_sizes.insert(r.student_blocks);
        by_strategy
            .entry(r.strategy.clone())
            .or_default()
            .entry((r.teacher_blocks, r.student_blocks))
            .or_default()
            .push((r.fold, mae, n));
    }
    Aggregated {
        by_strategy,
        student_sizes,
    }
}

fn write(path: &Path, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    written.push(path.to_path_buf());
    Ok(())
}

fn matrix_csv(
    cells: &BTreeMap<(Option<usize>, usize), Observations>,
    scratch: Option<&BTreeMap<(Option<usize>, usize), Observations>>,
    student_sizes: &BTreeSet<usize>,
    agg: fn(&Observations) -> f64,
) -> String {
    let teacher_sizes: BTreeSet<usize> =
        cells.keys().filter_map(|(t, _)| *t).collect();
    let mut out = String::from("student_blocks,from_scratch");
    for t in &teacher_sizes {
        out.push_str(&format!(",teacher_{t}"));
    }
    out.push('\n');
    for &s in student_sizes {
        out.push_str(&s.to_string());
        let base = scratch
            .and_then(|m| m.get(&(None, s)))
            .map(|obs| agg(obs));
        out.push(',');
        out.push_str(&fmt_opt(base));
        for &t in &teacher_sizes {
            out.push(',');
            out.push_str(&fmt_opt(cells.get(&(Some(t), s)).map(|obs| agg(obs))));
        }
        out.push('\n');
    }
    out
}

fn fits_csv(
    cells: &BTreeMap<(Option<usize>, usize), Observations>,
    axis: SizeAxis,
    param_cache: &mut BTreeMap<usize, f64>,
) -> String {
    let mut out = String::from("teacher_blocks,n_points,a,b,c,rmse,r_squared,status\n");
    let teacher_sizes: BTreeSet<Option<usize>> = cells.keys().map(|(t, _)| *t).collect();
    for t in teacher_sizes {
        let mut points: BTreeMap<usize, f64> = BTreeMap::new();
        for ((tb, sb), obs) in cells {
            if *tb == t {
                points.insert(*sb, fold_mean(obs));
            }
        }
        let teacher_label = t.map(|v| v.to_string()).unwrap_or_default();
        if points.len() < 4 {
            out.push_str(&format!(
                "{teacher_label},{},,,,,,insufficient_data\n",
                points.len()
            ));
            continue;
        }
        let sizes: Vec<f64> = points
            .keys()
            .map(|&b| axis.value(b, param_cache))
            .collect();
        let maes: Vec<f64> = points.values().copied().collect();
        let fit = fit_exponential(&sizes, &maes)
            .expect("≥4 strictly increasing sizes is guaranteed here");
        out.push_str(&format!(
            "{teacher_label},{},{},{},{},{},{},ok\n",
            fit.n_points, fit.a, fit.b, fit.c, fit.rmse, fit.r_squared
        ));
    }
    out
}

fn series_csv(
    strategy: &str,
    cells: &BTreeMap<(Option<usize>, usize), Observations>,
    axis: SizeAxis,
    param_cache: &mut BTreeMap<usize, f64>,
) -> String {
    let mut out =
        String::from("strategy,teacher_blocks,student_blocks,size_axis,fold,mae_bpm,n_test_windows\n");
    for ((t, s), obs) in cells {
        let teacher_label = t.map(|v| v.to_string()).unwrap_or_default();
        let size = axis.value(*s, param_cache);
        let mut sorted = obs.clone();
        sorted.sort_by_key(|&(fold, _, _)| fold);
        for (fold, mae, n) in sorted {
            out.push_str(&format!(
                "{strategy},{teacher_label},{s},{size},{fold},{mae},{n}\n"
            ));
        }
    }
    out
}

/// Renders `bench.csv` rows for the given measurements.
pub fn bench_csv(benches: &[BenchResult]) -> String {
    let mut out = String::from(
        "model,batch_size,reps,warmup,mean_s,std_s,param_count,param_bytes,peak_activation_bytes\n",
    );
    for b in benches {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            spec_slug(&b.spec),
            b.batch_size,
            b.reps,
            b.warmup,
            b.mean_s,
            b.std_s,
            b.param_count,
            b.param_bytes,
            b.peak_activation_bytes
        ));
    }
    out
}

fn param_counts_csv() -> String {
    let mut out = String::from("num_blocks,built_params,reference_params,agreement_factor\n");
    for row in param_count_comparison() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.num_blocks, row.built, row.reference, row.factor
        ));
    }
    out
}

/// Writes the full report family under `out_dir` and returns the files
/// written: per-strategy capacity matrices (fold-mean and pooled), scaling
/// fits, plot-ready series, the architecture parameter-count comparison,
/// and — when measurements are supplied — the benchmark table.
///
/// Requires at least one completed cell; emits nothing otherwise.
pub fn emit_report(
    records: &[CellRecord],
    benches: &[BenchResult],
    axis: SizeAxis,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let agg = aggregate(records);
    if agg.by_strategy.is_empty() {
        return Err(validation(
            "no completed cells to report; run a sweep (or fix its failures) first",
        ));
    }
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let mut written = Vec::new();
    let mut param_cache = BTreeMap::new();
    let scratch_cells = agg.by_strategy.get("scratch");

    for (strategy, cells) in &agg.by_strategy {
        if strategy == "scratch" {
            // The baseline appears as the from_scratch column of every
            // distilled matrix; it still gets its own series and fit files.
            write(
                &out_dir.join("series_scratch.csv"),
                &series_csv(strategy, cells, axis, &mut param_cache),
                &mut written,
            )?;
            write(
                &out_dir.join("fits_scratch.csv"),
                &fits_csv(cells, axis, &mut param_cache),
                &mut written,
            )?;
            continue;
        }
        for (suffix, reduce) in [
            ("foldmean", fold_mean as fn(&Observations) -> f64),
            ("pooled", pooled as fn(&Observations) -> f64),
        ] {
            write(
                &out_dir.join(format!("matrix_{strategy}_{suffix}.csv")),
                &matrix_csv(cells, scratch_cells, &agg.student_sizes, reduce),
                &mut written,
            )?;
        }
        write(
            &out_dir.join(format!("fits_{strategy}.csv")),
            &fits_csv(cells, axis, &mut param_cache),
            &mut written,
        )?;
        write(
            &out_dir.join(format!("series_{strategy}.csv")),
            &series_csv(strategy, cells, axis, &mut param_cache),
            &mut written,
        )?;
    }

    write(&out_dir.join("param_counts.csv"), &param_counts_csv(), &mut written)?;
    if !benches.is_empty() {
        write(&out_dir.join("bench.csv"), &bench_csv(benches), &mut written)?;
    }
    Ok(written)
}

//! `pulsekd` — the heart-rate distillation laboratory.
//!
//! Verbs: `train` one student per fold; `sweep` a strategy × teacher ×
//! student capacity matrix (resumable); `bench` inference time/memory;
//! `fit` an exponential scaling curve to CSV points; `report` re-emits
//! report files from a results log; `synth` generates a recording corpus;
//! `inspect` prints a checkpoint's contents.
//!
//! Exit codes: 0 success, 2 validation failure, 3 sweep finished with
//! failed cells, 1 anything else.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pulsekd_core::model::{Model, ModelSpec};
use pulsekd_core::scaling::fit_exponential;

use pulsekd_lab::bench::{benchmark, BenchResult};
use pulsekd_lab::checkpoint::read_header;
use pulsekd_lab::config::{
    resolve_out_dir, DataSection, DataSource, ExperimentConfig,
};
use pulsekd_lab::corpus::synth_corpus;
use pulsekd_lab::dataset::write_recordings;
use pulsekd_lab::error::{exit_code_for, validation};
use pulsekd_lab::experiment::{run_train, spec_slug};
use pulsekd_lab::report::{bench_csv, emit_report, SizeAxis};
use pulsekd_lab::sweep::{load_records, run_sweep, CellStatus};

#[derive(Parser)]
#[command(
    name = "pulsekd",
    version,
    about = "Knowledge-distillation laboratory for PPG heart-rate estimation"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Train one student per configured fold and evaluate it.
    Train(TrainArgs),
    /// Run the strategy × teacher × student capacity matrix (resumable).
    Sweep(SweepArgs),
    /// Measure inference wall-clock and memory across model sizes.
    Bench(BenchArgs),
    /// Fit an exponential scaling curve to a two-column CSV of size,mae.
    Fit(FitArgs),
    /// Re-emit report files from an existing results log.
    Report(ReportArgs),
    /// Generate a synthetic recording corpus as .ppg files.
    Synth(SynthArgs),
    /// Print a checkpoint's architecture and training progress.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root (defaults: config `out_dir`, then $PULSEKD_OUT, then ./pulsekd_out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment description (TOML) with a [sweep] section.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root (defaults: config `out_dir`, then $PULSEKD_OUT, then ./pulsekd_out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Continue an interrupted sweep, skipping recorded cells.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Output root for bench.csv (defaults: $PULSEKD_OUT, then ./pulsekd_out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input batch size.
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// Timed repetitions per model (minimum 10).
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Residual block counts to measure.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 4, 8, 12])]
    blocks: Vec<usize>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with one point per line: size,mae (a header line is tolerated).
    #[arg(long)]
    csv: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory holding results.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Capacity axis for fits and series: "blocks" or "params".
    #[arg(long, default_value = "blocks")]
    size_axis: String,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory to write .ppg recordings into.
    #[arg(long, default_value = "synth_data")]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    participants: usize,
    /// Recording length per participant, seconds.
    #[arg(long, default_value_t = 80.0)]
    duration_s: f64,
    #[arg(long, default_value_t = 25.0)]
    sample_rate_hz: f64,
    /// Additive Gaussian noise amplitude relative to the unit-scale pulse.
    #[arg(long, default_value_t = 0.3)]
    noise_level: f64,
    /// Heart-rate profile band, BPM.
    #[arg(long, default_value_t = 50.0)]
    hr_min: f64,
    #[arg(long, default_value_t = 180.0)]
    hr_max: f64,
    /// Piecewise-linear profile control points per participant.
    #[arg(long, default_value_t = 5)]
    control_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct InspectArgs {
    /// Checkpoint file to describe.
    path: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn load_config(path: &PathBuf, seed_override: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.verb {
        Verb::Train(args) => {
            let cfg = load_config(&args.config, args.seed)?;
            let out = resolve_out_dir(args.out, Some(&cfg));
            run_train(&cfg, &out)?;
            println!("results: {}", out.join("train").display());
            Ok(ExitCode::SUCCESS)
        }
        Verb::Sweep(args) => {
            let cfg = load_config(&args.config, args.seed)?;
            let out = resolve_out_dir(args.out, Some(&cfg));
            let outcome = run_sweep(&cfg, &out, args.jobs, args.resume)?;
            println!(
                "sweep complete: {} cells run, {} skipped, {} failed",
                outcome.newly_run, outcome.skipped, outcome.failed_total
            );
            if outcome
                .records
                .iter()
                .any(|r| r.status == CellStatus::Ok)
            {
                let written = emit_report(&outcome.records, &[], SizeAxis::Blocks, &out)?;
                println!("report: {} files under {}", written.len(), out.display());
            } else {
                eprintln!("no completed cells; skipping report emission");
            }
            if outcome.failed_total > 0 {
                Ok(ExitCode::from(3))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Verb::Bench(args) => {
            let out = resolve_out_dir(args.out, None);
            let mut results: Vec<BenchResult> = Vec::new();
            // Benchmark cells run strictly serially: concurrent training or
            // measurement would contaminate the timings.
            for &blocks in &args.blocks {
                let model = Model::build(&ModelSpec::resnet(blocks), 0)?;
                let result = benchmark(&model, args.batch, args.reps)?;
                println!(
                    "resnet{blocks}: {:.6} ± {:.6} s/pass, {} params, {} activation bytes",
                    result.mean_s,
                    result.std_s,
                    result.param_count,
                    result.peak_activation_bytes
                );
                results.push(result);
            }
            fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            let path = out.join("bench.csv");
            fs::write(&path, bench_csv(&results))
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Verb::Fit(args) => {
            let (sizes, maes) = read_fit_csv(&args.csv)?;
            let fit = fit_exponential(&sizes, &maes)?;
            println!("n_points: {}", fit.n_points);
            println!("a: {}", fit.a);
            println!("b: {}", fit.b);
            println!("c: {}", fit.c);
            println!("rmse: {}", fit.rmse);
            println!("r_squared: {}", fit.r_squared);
            Ok(ExitCode::SUCCESS)
        }
        Verb::Report(args) => {
            let axis = SizeAxis::parse(&args.size_axis)?;
            let log = args.out.join("results.jsonl");
            if !log.exists() {
                return Err(validation(format!(
                    "{} not found; point --out at a sweep run directory",
                    log.display()
                )));
            }
            let records = load_records(&log)?;
            let written = emit_report(&records, &[], axis, &args.out)?;
            for path in &written {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Verb::Synth(args) => {
            let section = DataSection {
                source: DataSource::Synthetic,
                path: None,
                participants: args.participants,
                duration_s: args.duration_s,
                sample_rate_hz: args.sample_rate_hz,
                noise_level: args.noise_level,
                hr_min: args.hr_min,
                hr_max: args.hr_max,
                control_points: args.control_points,
            };
            section.validate()?;
            let recordings = synth_corpus(&section, args.seed)?;
            write_recordings(&args.out, &recordings)?;
            println!(
                "wrote {} recordings to {}",
                recordings.len(),
                args.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Verb::Inspect(args) => {
            let header = read_header(&args.path)?;
            println!("spec: {}", spec_slug(&header.spec));
            println!(
                "input: {} channel(s) x {} samples, {} classes",
                header.spec.input_channels, header.spec.input_length, header.spec.num_classes
            );
            println!("parameters: {}", header.param_count());
            println!("completed_epochs: {}", header.completed_epochs);
            println!("optimizer_steps: {}", header.adam.step);
            match &header.projector {
                Some(p) => println!(
                    "projector: {} -> {} (optimizer_steps: {})",
                    p.student_dim, p.teacher_dim, p.adam.step
                ),
                None => println!("projector: none"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Reads a two-column `size,mae` CSV; a non-numeric first line is treated
/// as a header. Points are sorted by size; duplicate sizes are rejected.
fn read_fit_csv(path: &PathBuf) -> Result<(Vec<f64>, Vec<f64>)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let (a, b) = (cols.next().unwrap_or(""), cols.next().unwrap_or(""));
        match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(x), Ok(y)) => points.push((x, y)),
            _ if i == 0 => continue, // header row
            _ => {
                return Err(validation(format!(
                    "{} line {}: expected two numeric columns, got {line:?}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    points.sort_by(|p, q| p.0.total_cmp(&q.0));
    for pair in points.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(validation(format!(
                "duplicate size {} in {}; sizes must be distinct",
                pair[0].0,
                path.display()
            )));
        }
    }
    Ok((
        points.iter().map(|p| p.0).collect(),
        points.iter().map(|p| p.1).collect(),
    ))
}

//! fovex: gaze-driven attribution maps for image classifiers.
//!
//! Subcommands: `explain` renders attribution maps for a dataset manifest,
//! `evaluate` scores stored maps, `sweep` ablates config parameters, and
//! `stub-predictor` serves the builtin predictors over the wire protocol.
//! Exit codes: 0 success, 1 total failure, 2 invalid arguments.

mod args;
mod evaluate;
mod explain;
mod heatmap;
mod manifest;
mod pool;
mod report;
mod stub;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fovex::{Error, Result};

use crate::args::{resolve_seed, ConfigArgs, PredictorArgs};
use crate::evaluate::{cmd_evaluate, EvaluateParams, Metric};
use crate::explain::{cmd_explain, ExplainParams};
use crate::manifest::Dataset;
use crate::stub::{cmd_stub, StubParams};
use crate::sweep::{cmd_sweep, parse_axis, SweepParams};

#[derive(Parser, Debug)]
#[command(name = "fovex", version, about = "Gaze-driven attribution maps for image classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an attribution map, sidecar, and overlay per manifest entry.
    Explain(ExplainArgs),
    /// Score stored attribution maps against a manifest.
    Evaluate(EvaluateArgs),
    /// Run explain + evaluate across a parameter grid.
    Sweep(SweepArgs),
    /// Serve a builtin predictor over the wire protocol.
    StubPredictor(StubArgs),
}

#[derive(clap::Args, Debug)]
struct ExplainArgs {
    /// Dataset manifest (JSON).
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Output directory for maps, sidecars, overlays, and run.json.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Run seed; falls back to FOVEX_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel workers over manifest entries.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Fallback target class for entries without one (argmax when absent).
    #[arg(long, value_name = "CLASS")]
    target_class: Option<usize>,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    predictor: PredictorArgs,
}

#[derive(clap::Args, Debug)]
struct EvaluateArgs {
    /// Dataset manifest (JSON).
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Directory holding `<label>_map.png` files from an explain run.
    #[arg(long, value_name = "DIR")]
    maps: PathBuf,
    /// Report directory; defaults to the maps directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated metrics: drop,increase,delete,insert,ebpg,nss,aucj or all.
    #[arg(long, default_value = "all", value_name = "LIST")]
    metrics: String,
    /// Pixel fraction each deletion/insertion step flips.
    #[arg(long, default_value_t = 0.1, value_name = "FRACTION")]
    step_fraction: f64,
    /// Also write per-entry deletion/insertion curves as CSV.
    #[arg(long)]
    dump_curves: bool,
    /// Run seed; falls back to FOVEX_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel workers over manifest entries.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Fallback target class for entries without one (argmax when absent).
    #[arg(long, value_name = "CLASS")]
    target_class: Option<usize>,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    predictor: PredictorArgs,
}

#[derive(clap::Args, Debug)]
struct SweepArgs {
    /// Dataset manifest (JSON).
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Output directory; one subdirectory per run under runs/.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Parameter axis, repeatable: name=v1,v2,.. (see sweepable names).
    #[arg(long = "param", value_name = "NAME=VALUES", required = true)]
    params: Vec<String>,
    /// one-at-a-time | cross
    #[arg(long, default_value = "one-at-a-time", value_name = "MODE")]
    sweep_mode: String,
    /// Comma-separated metrics to aggregate per run.
    #[arg(long, default_value = "all", value_name = "LIST")]
    metrics: String,
    /// Pixel fraction each deletion/insertion step flips.
    #[arg(long, default_value_t = 0.1, value_name = "FRACTION")]
    step_fraction: f64,
    /// Run seed; falls back to FOVEX_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel workers over manifest entries.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Fallback target class for entries without one (argmax when absent).
    #[arg(long, value_name = "CLASS")]
    target_class: Option<usize>,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    predictor: PredictorArgs,
}

#[derive(clap::Args, Debug)]
struct StubArgs {
    /// Builtin predictor to serve: linear | planted | constant.
    #[arg(long, default_value = "linear")]
    kind: String,
    /// stdio | tcp:<host:port> (port 0 picks one; it is announced on stdout).
    #[arg(long, default_value = "stdio")]
    listen: String,
    /// Class count.
    #[arg(long, default_value_t = 2, value_name = "K")]
    classes: usize,
    /// Declared input height.
    #[arg(long, default_value_t = 16, value_name = "PIXELS")]
    input_height: usize,
    /// Declared input width.
    #[arg(long, default_value_t = 16, value_name = "PIXELS")]
    input_width: usize,
    /// Declared input channels.
    #[arg(long, default_value_t = 3, value_name = "C")]
    input_channels: usize,
    /// Seed for the predictor's weights.
    #[arg(long, default_value_t = 0)]
    predictor_seed: u64,
}

fn check_workers(workers: usize) -> Result<()> {
    if workers == 0 {
        return Err(Error::invalid("--workers must be at least 1"));
    }
    Ok(())
}

fn run_explain(a: &ExplainArgs) -> Result<bool> {
    check_workers(a.workers)?;
    let dataset = Dataset::load(&a.manifest)?;
    let seed = resolve_seed(a.seed)?;
    let config = a.config.build(seed)?;
    let record = cmd_explain(&ExplainParams {
        dataset: &dataset,
        config: &config,
        predictor_spec: &a.predictor.predictor,
        builtin: a.predictor.builtin_options(dataset.input_size),
        out_dir: &a.out,
        seed,
        workers: a.workers,
        default_target: a.target_class,
    })?;
    println!(
        "explain: {}/{} entries ok, mean {:.3} s/map -> {}",
        record.succeeded,
        record.total,
        record.mean_wall_clock_s,
        a.out.join("run.json").display()
    );
    Ok(record.succeeded > 0)
}

fn run_evaluate(a: &EvaluateArgs) -> Result<bool> {
    check_workers(a.workers)?;
    let dataset = Dataset::load(&a.manifest)?;
    let seed = resolve_seed(a.seed)?;
    let config = a.config.build(seed)?;
    let metrics = Metric::parse_list(&a.metrics)?;
    let out_dir = a.out.clone().unwrap_or_else(|| a.maps.clone());
    let record = cmd_evaluate(&EvaluateParams {
        dataset: &dataset,
        config: &config,
        predictor_spec: &a.predictor.predictor,
        builtin: a.predictor.builtin_options(dataset.input_size),
        maps_dir: &a.maps,
        out_dir: &out_dir,
        metrics: &metrics,
        step_fraction: a.step_fraction,
        seed,
        workers: a.workers,
        default_target: a.target_class,
        dump_curves: a.dump_curves,
    })?;
    let mut summary: Vec<String> = Vec::new();
    for m in &metrics {
        if let Some(s) = record.summary.get(m.name()) {
            match s.mean {
                Some(v) => summary.push(format!("{}={v:.4} (excl {})", m.name(), s.excluded)),
                None => summary.push(format!("{}=n/a (excl {})", m.name(), s.excluded)),
            }
        }
    }
    println!(
        "evaluate: {}/{} entries ok; {} -> {}",
        record.succeeded,
        record.total,
        summary.join(", "),
        out_dir.join("report.csv").display()
    );
    Ok(record.succeeded > 0)
}

fn run_sweep(a: &SweepArgs) -> Result<bool> {
    check_workers(a.workers)?;
    let dataset = Dataset::load(&a.manifest)?;
    let seed = resolve_seed(a.seed)?;
    let base_config = a.config.build(seed)?;
    let metrics = Metric::parse_list(&a.metrics)?;
    let mode = a.sweep_mode.parse()?;
    let axes: Vec<_> = a.params.iter().map(|p| parse_axis(p)).collect::<Result<_>>()?;
    let rows = cmd_sweep(&SweepParams {
        dataset: &dataset,
        base_config: &base_config,
        axes: &axes,
        mode,
        predictor_spec: &a.predictor.predictor,
        builtin: a.predictor.builtin_options(dataset.input_size),
        out_dir: &a.out,
        metrics: &metrics,
        step_fraction: a.step_fraction,
        seed,
        workers: a.workers,
        default_target: a.target_class,
    })?;
    println!(
        "sweep: {} rows over {} runs -> {}",
        rows.len(),
        rows.len() / metrics.len().max(1),
        a.out.join("sweep.csv").display()
    );
    Ok(true)
}

fn run_stub(a: &StubArgs) -> Result<bool> {
    cmd_stub(&StubParams {
        kind: a.kind.clone(),
        listen: a.listen.clone(),
        options: fovex::predictor::BuiltinOptions {
            num_classes: a.classes,
            input_height: a.input_height,
            input_width: a.input_width,
            input_channels: a.input_channels,
            seed: a.predictor_seed,
        },
    })?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Explain(a) => run_explain(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Sweep(a) => run_sweep(a),
        Command::StubPredictor(a) => run_stub(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: every entry failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

//! The sweep command: run explain + evaluate once per parameter setting and
//! collect metric means into a long-format CSV (parameter, value, metric,
//! mean) for ablation plots.

use std::path::Path;

use fovex::foveation::FovexConfig;
use fovex::imaging::io;
use fovex::predictor::BuiltinOptions;
use fovex::{Error, Result};

use crate::evaluate::{cmd_evaluate, EvaluateParams, Metric};
use crate::explain::{cmd_explain, ExplainParams};
use crate::manifest::Dataset;

/// Parameters eligible for sweeping, by their flag names.
pub const SWEEPABLE: [&str; 8] = [
    "random-restarts",
    "sigma-fovea",
    "beta",
    "scanpath-length",
    "opt-steps",
    "sigma-blur",
    "blur-filter-size",
    "lr",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    OneAtATime,
    Cross,
}

impl std::str::FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-at-a-time" => Ok(SweepMode::OneAtATime),
            "cross" => Ok(SweepMode::Cross),
            other => Err(Error::invalid(format!(
                "unknown sweep mode {other:?}, expected one-at-a-time or cross"
            ))),
        }
    }
}

/// One parameter axis: a name from [`SWEEPABLE`] and its raw values.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<String>,
}

/// Parses a `--param name=v1,v2,..` occurrence.
pub fn parse_axis(text: &str) -> Result<Axis> {
    let (name, rest) = text
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("--param wants name=v1,v2,.. got {text:?}")))?;
    if !SWEEPABLE.contains(&name) {
        return Err(Error::invalid(format!(
            "parameter {name:?} is not sweepable; choose from {}",
            SWEEPABLE.join(", ")
        )));
    }
    let values: Vec<String> =
        rest.split(',').map(str::trim).filter(|v| !v.is_empty()).map(str::to_string).collect();
    if values.is_empty() {
        return Err(Error::invalid(format!("parameter {name:?} has no values")));
    }
    Ok(Axis { name: name.to_string(), values })
}

fn apply(config: &FovexConfig, name: &str, value: &str) -> Result<FovexConfig> {
    let mut c = config.clone();
    let bad = |what: &str| Error::invalid(format!("{name}={value:?} is not a valid {what}"));
    match name {
        "random-restarts" => c.random_restarts = value.parse().map_err(|_| bad("bool"))?,
        "sigma-fovea" => c.sigma_fovea = Some(value.parse().map_err(|_| bad("number"))?),
        "beta" => c.forgetting = value.parse().map_err(|_| bad("number"))?,
        "scanpath-length" => c.scanpath_length = value.parse().map_err(|_| bad("count"))?,
        "opt-steps" => c.optimization_steps = value.parse().map_err(|_| bad("count"))?,
        "sigma-blur" => c.sigma_blur = value.parse().map_err(|_| bad("number"))?,
        "blur-filter-size" => c.blur_filter_size = value.parse().map_err(|_| bad("count"))?,
        "lr" => c.step_size = value.parse().map_err(|_| bad("number"))?,
        other => return Err(Error::invalid(format!("parameter {other:?} is not sweepable"))),
    }
    c.validate()?;
    Ok(c)
}

/// One run of the sweep: the (name, value) assignments and the resulting
/// config. Labels like `lr=0.05+beta=0.9` name the run directory.
#[derive(Debug, Clone)]
pub struct RunPoint {
    pub assignments: Vec<(String, String)>,
    pub config: FovexConfig,
}

impl RunPoint {
    pub fn label(&self) -> String {
        self.assignments
            .iter()
            .map(|(n, v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join("+")
    }

    fn parameter_column(&self) -> String {
        self.assignments.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>().join("+")
    }

    fn value_column(&self) -> String {
        self.assignments.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>().join("+")
    }
}

/// Expands the grid into run points, validating every configuration before
/// anything runs.
pub fn plan(base: &FovexConfig, axes: &[Axis], mode: SweepMode) -> Result<Vec<RunPoint>> {
    if axes.is_empty() {
        return Err(Error::invalid("sweep needs at least one --param axis"));
    }
    let mut points = Vec::new();
    match mode {
        SweepMode::OneAtATime => {
            for axis in axes {
                for value in &axis.values {
                    points.push(RunPoint {
                        assignments: vec![(axis.name.clone(), value.clone())],
                        config: apply(base, &axis.name, value)?,
                    });
                }
            }
        }
        SweepMode::Cross => {
            let mut partial: Vec<(Vec<(String, String)>, FovexConfig)> =
                vec![(Vec::new(), base.clone())];
            for axis in axes {
                let mut next = Vec::new();
                for (assignments, config) in &partial {
                    for value in &axis.values {
                        let mut a = assignments.clone();
                        a.push((axis.name.clone(), value.clone()));
                        next.push((a, apply(config, &axis.name, value)?));
                    }
                }
                partial = next;
            }
            points.extend(
                partial.into_iter().map(|(assignments, config)| RunPoint { assignments, config }),
            );
        }
    }
    Ok(points)
}

pub struct SweepParams<'a> {
    pub dataset: &'a Dataset,
    pub base_config: &'a FovexConfig,
    pub axes: &'a [Axis],
    pub mode: SweepMode,
    pub predictor_spec: &'a str,
    pub builtin: BuiltinOptions,
    pub out_dir: &'a Path,
    pub metrics: &'a [Metric],
    pub step_fraction: f64,
    pub seed: u64,
    pub workers: usize,
    pub default_target: Option<usize>,
}

/// Runs the whole sweep and returns the long-format rows
/// (parameter, value, metric, mean or empty).
pub fn cmd_sweep(p: &SweepParams) -> Result<Vec<(String, String, String, Option<f64>)>> {
    let points = plan(p.base_config, p.axes, p.mode)?;
    std::fs::create_dir_all(p.out_dir)?;
    let mut rows = Vec::new();
    for point in &points {
        let run_dir = p.out_dir.join("runs").join(point.label());
        let explain_params = ExplainParams {
            dataset: p.dataset,
            config: &point.config,
            predictor_spec: p.predictor_spec,
            builtin: p.builtin,
            out_dir: &run_dir,
            seed: p.seed,
            workers: p.workers,
            default_target: p.default_target,
        };
        cmd_explain(&explain_params)?;
        let evaluate_params = EvaluateParams {
            dataset: p.dataset,
            config: &point.config,
            predictor_spec: p.predictor_spec,
            builtin: p.builtin,
            maps_dir: &run_dir,
            out_dir: &run_dir,
            metrics: p.metrics,
            step_fraction: p.step_fraction,
            seed: p.seed,
            workers: p.workers,
            default_target: p.default_target,
            dump_curves: false,
        };
        let record = cmd_evaluate(&evaluate_params)?;
        for metric in p.metrics {
            let mean = record.summary.get(metric.name()).and_then(|s| s.mean);
            rows.push((
                point.parameter_column(),
                point.value_column(),
                metric.name().to_string(),
                mean,
            ));
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["parameter", "value", "metric", "mean"]).expect("header");
    for (parameter, value, metric, mean) in &rows {
        w.write_record([
            parameter.clone(),
            value.clone(),
            metric.clone(),
            mean.map(|m| m.to_string()).unwrap_or_default(),
        ])
        .expect("row");
    }
    let csv_bytes = w.into_inner().expect("csv buffer");
    io::atomic_write(&p.out_dir.join("sweep.csv"), &csv_bytes)?;
    Ok(rows)
}

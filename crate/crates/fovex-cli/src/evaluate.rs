//! The evaluate command: score stored attribution maps against a manifest
//! with the faithfulness, localization, and gaze metrics, excluding entries
//! that lack the ground truth a metric needs.

use std::path::Path;
use std::time::Instant;

use fovex::foveation::FovexConfig;
use fovex::imaging::{io, ScalarField};
use fovex::metrics::{
    aucj, deletion_curve, ebpg, insertion_curve, masked_eval, nss, pct_drop, Curve, GazeData,
};
use fovex::predictor::{BuiltinOptions, ExternalOptions, Predictor, PredictorRegistry};
use fovex::{Error, Result};

use crate::explain::{adapt_image, load_entry_image, map_file};
use crate::manifest::{rescale_gaze_point, Dataset, ResolvedEntry};
use crate::pool;
use crate::report::{MetricValues, RowRecord, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Drop,
    Increase,
    Delete,
    Insert,
    Ebpg,
    Nss,
    Aucj,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Drop,
        Metric::Increase,
        Metric::Delete,
        Metric::Insert,
        Metric::Ebpg,
        Metric::Nss,
        Metric::Aucj,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Drop => "drop",
            Metric::Increase => "increase",
            Metric::Delete => "delete",
            Metric::Insert => "insert",
            Metric::Ebpg => "ebpg",
            Metric::Nss => "nss",
            Metric::Aucj => "aucj",
        }
    }

    /// Parses a comma-separated metric list; `all` expands to every metric.
    pub fn parse_list(text: &str) -> Result<Vec<Metric>> {
        let mut out = Vec::new();
        for raw in text.split(',') {
            let token = raw.trim();
            match token {
                "" => continue,
                "all" => out.extend(Metric::ALL),
                "drop" => out.push(Metric::Drop),
                "increase" => out.push(Metric::Increase),
                "delete" => out.push(Metric::Delete),
                "insert" => out.push(Metric::Insert),
                "ebpg" => out.push(Metric::Ebpg),
                "nss" => out.push(Metric::Nss),
                "aucj" => out.push(Metric::Aucj),
                other => {
                    return Err(Error::invalid(format!(
                        "unknown metric {other:?}; expected drop, increase, delete, insert, ebpg, nss, aucj, or all"
                    )))
                }
            }
        }
        out.dedup();
        if out.is_empty() {
            return Err(Error::invalid("metric list is empty"));
        }
        Ok(out)
    }
}

pub struct EvaluateParams<'a> {
    pub dataset: &'a Dataset,
    pub config: &'a FovexConfig,
    pub predictor_spec: &'a str,
    pub builtin: BuiltinOptions,
    pub maps_dir: &'a Path,
    pub out_dir: &'a Path,
    pub metrics: &'a [Metric],
    pub step_fraction: f64,
    pub seed: u64,
    pub workers: usize,
    pub default_target: Option<usize>,
    pub dump_curves: bool,
}

fn curve_csv(curve: &Curve) -> String {
    let mut s = String::from("fraction,probability\n");
    for (f, p) in curve.fractions.iter().zip(&curve.probabilities) {
        s.push_str(&format!("{f},{p}\n"));
    }
    s
}

/// Gaze points of an entry mapped onto the map's pixel grid.
fn gaze_on_map(entry: &ResolvedEntry, dataset: &Dataset, map: &ScalarField) -> Result<GazeData> {
    let points = entry
        .gaze_fixations
        .as_ref()
        .expect("caller checked presence")
        .iter()
        .map(|&p| rescale_gaze_point(p, dataset.input_size, map.height(), map.width()))
        .collect();
    GazeData::new(points)
}

/// `UndefinedMetric` means the metric has no value here; that excludes the
/// row from the metric's mean rather than failing it.
fn excluding_undefined(result: Result<f64>) -> Result<Option<f64>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn evaluate_entry(
    predictor: &mut dyn Predictor,
    entry: &ResolvedEntry,
    p: &EvaluateParams,
) -> Result<RowRecord> {
    let started = Instant::now();
    let image = load_entry_image(entry, p.dataset.input_size)?;
    let desc = predictor.descriptor().clone();
    let prepared = adapt_image(&image, desc.input_height, desc.input_width, desc.input_channels)?;

    let map_name = map_file(&entry.label);
    let map_path = p.maps_dir.join(&map_name);
    if !map_path.is_file() {
        return Err(Error::invalid(format!("no map for entry: {}", map_path.display())));
    }
    let map = io::load_map_png(&map_path)?;
    if map.height() != desc.input_height || map.width() != desc.input_width {
        return Err(Error::invalid(format!(
            "map {} is {}x{} but the predictor wants {}x{}",
            map_path.display(),
            map.height(),
            map.width(),
            desc.input_height,
            desc.input_width
        )));
    }

    let target = match entry.target_class.or(p.default_target) {
        Some(t) if t < desc.num_classes => t,
        Some(t) => {
            return Err(Error::invalid(format!(
                "target class {t} out of range for {} classes",
                desc.num_classes
            )))
        }
        None => {
            let out = predictor.predict(&prepared, None, false)?;
            out.scores
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k)
                .expect("at least two classes")
        }
    };

    let mut values = MetricValues::default();
    let wants = |m: Metric| p.metrics.contains(&m);

    if wants(Metric::Drop) || wants(Metric::Increase) {
        let eval = masked_eval(predictor, &prepared, &map, target)?;
        values.p_full = Some(eval.p_full);
        values.p_masked = Some(eval.p_masked);
        if wants(Metric::Drop) {
            values.pct_drop = pct_drop(&eval);
        }
        if wants(Metric::Increase) {
            values.increased = Some(eval.p_masked > eval.p_full);
        }
    }
    if wants(Metric::Delete) {
        let (curve, auc) = deletion_curve(predictor, &prepared, &map, target, p.step_fraction)?;
        values.delete_auc = Some(auc);
        if p.dump_curves {
            let name = format!("{}_delete.csv", entry.label);
            io::atomic_write(&p.out_dir.join(name), curve_csv(&curve).as_bytes())?;
        }
    }
    if wants(Metric::Insert) {
        let (curve, auc) =
            insertion_curve(predictor, &prepared, &map, target, p.step_fraction, p.config)?;
        values.insert_auc = Some(auc);
        if p.dump_curves {
            let name = format!("{}_insert.csv", entry.label);
            io::atomic_write(&p.out_dir.join(name), curve_csv(&curve).as_bytes())?;
        }
    }
    if wants(Metric::Ebpg) {
        if let Some(bbox) = &entry.bbox {
            let scaled = bbox.rescale(
                p.dataset.input_size.height,
                p.dataset.input_size.width,
                map.height(),
                map.width(),
            );
            values.ebpg = excluding_undefined(ebpg(&map, &scaled))?;
        }
    }
    if entry.gaze_fixations.is_some() && (wants(Metric::Nss) || wants(Metric::Aucj)) {
        let gaze = gaze_on_map(entry, p.dataset, &map)?;
        if wants(Metric::Nss) {
            values.nss = Some(nss(&map, &gaze)?);
        }
        if wants(Metric::Aucj) {
            // Degenerate gaze (every pixel fixated) has no ROC; exclude.
            values.aucj = match aucj(&map, &gaze) {
                Ok(v) => Some(v),
                Err(Error::InvalidArgument(m)) if m.contains("every pixel") => None,
                Err(e) => return Err(e),
            };
        }
    }

    Ok(RowRecord {
        index: entry.index,
        image: entry.path.display().to_string(),
        label: entry.label.clone(),
        target_class: Some(target),
        map_path: Some(map_name),
        sidecar_path: None,
        overlay_path: None,
        fixations: None,
        wall_clock_s: started.elapsed().as_secs_f64(),
        metrics: values,
        error: None,
    })
}

pub fn cmd_evaluate(p: &EvaluateParams) -> Result<RunRecord> {
    p.config.validate()?;
    if !(p.step_fraction > 0.0 && p.step_fraction <= 1.0) {
        return Err(Error::invalid("step_fraction must lie in (0, 1]"));
    }
    std::fs::create_dir_all(p.out_dir)?;
    let registry = PredictorRegistry::with_builtins();
    let external = ExternalOptions::default();
    let descriptor =
        registry.resolve(p.predictor_spec, &p.builtin, &external)?.descriptor().clone();

    let rows = pool::run_indexed(
        p.dataset.entries.len(),
        p.workers,
        |_| registry.resolve(p.predictor_spec, &p.builtin, &external),
        |ctx, i| {
            let entry = &p.dataset.entries[i];
            let started = Instant::now();
            let result = match ctx {
                Ok(predictor) => evaluate_entry(predictor.as_mut(), entry, p),
                Err(e) => Err(Error::invalid(format!("predictor init: {e}"))),
            };
            result.unwrap_or_else(|e| RowRecord {
                index: entry.index,
                image: entry.path.display().to_string(),
                label: entry.label.clone(),
                target_class: None,
                map_path: None,
                sidecar_path: None,
                overlay_path: None,
                fixations: None,
                wall_clock_s: started.elapsed().as_secs_f64(),
                metrics: MetricValues::default(),
                error: Some(e.to_string()),
            })
        },
    );

    let mut record = RunRecord::new(
        "evaluate",
        p.config.clone(),
        descriptor,
        p.seed,
        p.workers,
        Some(p.step_fraction),
        rows,
    );
    let names: Vec<&str> = p.metrics.iter().map(Metric::name).collect();
    record.summarize(&names);
    io::atomic_write(&p.out_dir.join("report.json"), record.to_json_pretty().as_bytes())?;
    io::atomic_write(&p.out_dir.join("report.csv"), crate::report::to_csv(&record).as_bytes())?;
    Ok(record)
}

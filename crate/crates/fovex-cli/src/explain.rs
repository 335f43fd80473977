//! The explain command: run the full pipeline over a manifest, writing a
//! 16-bit PNG map, a JSON sidecar, and a color overlay per entry, plus a
//! run record accounting for every entry.

use std::path::Path;
use std::time::Instant;

use fovex::attribution::{explain, Sidecar};
use fovex::foveation::FovexConfig;
use fovex::imaging::{io, resize_bilinear, Image};
use fovex::predictor::{BuiltinOptions, ExternalOptions, Predictor, PredictorRegistry};
use fovex::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::manifest::{Dataset, InputSize, ResolvedEntry};
use crate::pool;
use crate::report::{MetricValues, RowRecord, RunRecord};

pub struct ExplainParams<'a> {
    pub dataset: &'a Dataset,
    pub config: &'a FovexConfig,
    pub predictor_spec: &'a str,
    pub builtin: BuiltinOptions,
    pub out_dir: &'a Path,
    pub seed: u64,
    pub workers: usize,
    /// Fallback target for entries without one; `None` means argmax.
    pub default_target: Option<usize>,
}

/// Adapts a stored image to an `h×w×c` predictor input: channel conversion
/// first, then bilinear resize. Must stay in sync with what the pipeline
/// does internally so saved overlays and evaluation forwards line up.
pub fn adapt_image(image: &Image, height: usize, width: usize, channels: usize) -> Result<Image> {
    let mut prepared = image.clone();
    if prepared.channels() != channels {
        prepared = prepared.to_channels(channels)?;
    }
    if prepared.height() != height || prepared.width() != width {
        prepared = resize_bilinear(&prepared, height, width)?;
    }
    Ok(prepared)
}

/// Loads an entry's image and enforces the manifest's declared size.
pub fn load_entry_image(entry: &ResolvedEntry, declared: InputSize) -> Result<Image> {
    let image = io::load_image(&entry.path)?;
    if image.height() != declared.height || image.width() != declared.width {
        return Err(Error::invalid(format!(
            "image {} is {}x{} but the manifest declares {}x{}",
            entry.path.display(),
            image.height(),
            image.width(),
            declared.height,
            declared.width
        )));
    }
    Ok(image)
}

/// Per-entry generator deterministic in (seed, index): stream `index` of the
/// seeded ChaCha8 keystream, so worker scheduling cannot shift draws.
pub fn entry_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn failed_row(entry: &ResolvedEntry, started: Instant, error: Error) -> RowRecord {
    RowRecord {
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
        error: Some(error.to_string()),
    }
}

pub fn map_file(label: &str) -> String {
    format!("{label}_map.png")
}

pub fn sidecar_file(label: &str) -> String {
    format!("{label}_sidecar.json")
}

pub fn overlay_file(label: &str) -> String {
    format!("{label}_overlay.png")
}

fn explain_entry(
    predictor: &mut dyn Predictor,
    entry: &ResolvedEntry,
    p: &ExplainParams,
) -> Result<RowRecord> {
    let image = load_entry_image(entry, p.dataset.input_size)?;
    let target = entry.target_class.or(p.default_target);
    let mut rng = entry_rng(p.seed, entry.index);
    let explanation = explain(&image, target, predictor, p.config, &mut rng)?;

    let desc = predictor.descriptor();
    let map_name = map_file(&entry.label);
    let sidecar_name = sidecar_file(&entry.label);
    let overlay_name = overlay_file(&entry.label);
    io::save_map_png(&p.out_dir.join(&map_name), &explanation.map)?;
    let sidecar = Sidecar::new(&explanation, p.config);
    io::atomic_write(&p.out_dir.join(&sidecar_name), sidecar.to_json_pretty().as_bytes())?;
    let base = adapt_image(&image, desc.input_height, desc.input_width, 3)?;
    let overlay = crate::heatmap::overlay(&base, &explanation.map, &explanation.fixations)?;
    io::save_image(&p.out_dir.join(&overlay_name), &overlay)?;

    Ok(RowRecord {
        index: entry.index,
        image: entry.path.display().to_string(),
        label: entry.label.clone(),
        target_class: Some(explanation.target_class),
        map_path: Some(map_name),
        sidecar_path: Some(sidecar_name),
        overlay_path: Some(overlay_name),
        fixations: Some(explanation.fixations.clone()),
        wall_clock_s: explanation.wall_clock_s,
        metrics: MetricValues::default(),
        error: None,
    })
}

pub fn cmd_explain(p: &ExplainParams) -> Result<RunRecord> {
    p.config.validate()?;
    std::fs::create_dir_all(p.out_dir)?;
    let registry = PredictorRegistry::with_builtins();
    let external = ExternalOptions::default();
    // Fail fast on an unreachable endpoint and capture the descriptor.
    let descriptor =
        registry.resolve(p.predictor_spec, &p.builtin, &external)?.descriptor().clone();

    let rows = pool::run_indexed(
        p.dataset.entries.len(),
        p.workers,
        |_| registry.resolve(p.predictor_spec, &p.builtin, &external),
        |ctx, i| {
            let entry = &p.dataset.entries[i];
            let started = Instant::now();
            match ctx {
                Ok(predictor) => explain_entry(predictor.as_mut(), entry, p)
                    .unwrap_or_else(|e| failed_row(entry, started, e)),
                Err(e) => {
                    failed_row(entry, started, Error::invalid(format!("predictor init: {e}")))
                }
            }
        },
    );

    let record = RunRecord::new(
        "explain",
        p.config.clone(),
        descriptor,
        p.seed,
        p.workers,
        None,
        rows,
    );
    io::atomic_write(&p.out_dir.join("run.json"), record.to_json_pretty().as_bytes())?;
    Ok(record)
}

//! Attribution-map synthesis and the end-to-end `explain` entry point.
//!
//! The explanation is a convex mixture of the scanpath's fixation blobs,
//! min-max normalized to [0,1]: E = minmax(Σ_i α_i ε_i) with each ε_i a
//! Gaussian blob at fixation f_i whose σ equals the foveation σ_f. Weights
//! come from either a uniform rule or each fixation's loss-gain.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foveation::{AlphaMode, Fixation, FovexConfig};
use crate::imaging::{gaussian_blob, min_max_normalize, Image, ScalarField};
use crate::optimizer::{generate_scanpath, OptimizationTrace};
use crate::predictor::Predictor;

/// Everything `explain` produces: the map lives at the predictor's input
/// resolution, fixations stay in normalized coordinates.
#[derive(Debug, Clone)]
pub struct Explanation {
    pub map: ScalarField,
    pub fixations: Vec<Fixation>,
    pub alphas: Vec<f64>,
    pub loss_gains: Vec<f64>,
    pub target_class: usize,
    pub traces: Vec<OptimizationTrace>,
    pub wall_clock_s: f64,
}

/// The JSON sidecar written next to a saved attribution map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub fixations: Vec<Fixation>,
    pub alphas: Vec<f64>,
    pub target_class: usize,
    pub config: FovexConfig,
    pub wall_clock_s: f64,
}

impl Sidecar {
    pub fn new(explanation: &Explanation, config: &FovexConfig) -> Self {
        Sidecar {
            fixations: explanation.fixations.clone(),
            alphas: explanation.alphas.clone(),
            target_class: explanation.target_class,
            config: config.clone(),
            wall_clock_s: explanation.wall_clock_s,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sidecar serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("malformed sidecar: {e}")))
    }
}

/// Mixture weights for the fixation blobs. Uniform gives every fixation
/// 1/N; loss-gain distributes by each fixation's share of the total gain,
/// falling back to uniform when no fixation gained anything.
pub fn compute_alphas(loss_gains: &[f64], mode: AlphaMode) -> Vec<f64> {
    let n = loss_gains.len();
    let uniform = || vec![1.0 / n as f64; n];
    match mode {
        AlphaMode::Uniform => uniform(),
        AlphaMode::LossGain => {
            let total: f64 = loss_gains.iter().map(|g| g.max(0.0)).sum();
            if total > 0.0 {
                loss_gains.iter().map(|g| g.max(0.0) / total).collect()
            } else {
                uniform()
            }
        }
    }
}

/// E = minmax(Σ_i α_i · blob(f_i, σ)). A constant mixture (possible only
/// with degenerate weights) normalizes to all zeros.
pub fn synthesize_map(
    fixations: &[Fixation],
    alphas: &[f64],
    height: usize,
    width: usize,
    sigma_px: f64,
) -> Result<ScalarField> {
    if fixations.is_empty() {
        return Err(Error::invalid("attribution needs at least one fixation"));
    }
    if fixations.len() != alphas.len() {
        return Err(Error::invalid(format!(
            "{} fixations but {} weights",
            fixations.len(),
            alphas.len()
        )));
    }
    if !(sigma_px.is_finite() && sigma_px > 0.0) {
        return Err(Error::invalid("blob sigma must be positive"));
    }
    if alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::invalid("blob weights must be finite and non-negative"));
    }
    if height == 0 || width == 0 {
        return Err(Error::invalid("map dimensions must be positive"));
    }
    let mut sum = ScalarField::zeros(height, width);
    for (f, a) in fixations.iter().zip(alphas) {
        if *a == 0.0 {
            continue;
        }
        let blob = gaussian_blob(f.x, f.y, sigma_px, height, width)?;
        for (dst, src) in sum.data_mut().iter_mut().zip(blob.data()) {
            *dst += a * src;
        }
    }
    Ok(min_max_normalize(&sum))
}

/// Smooth random map for sanity-check baselines: `num_blobs` Gaussian blobs
/// at uniform random centers, σ drawn uniformly from `sigma_range` (pixels),
/// summed and min-max normalized.
pub fn random_baseline_map<R: Rng>(
    height: usize,
    width: usize,
    num_blobs: usize,
    sigma_range: (f64, f64),
    rng: &mut R,
) -> Result<ScalarField> {
    if height == 0 || width == 0 {
        return Err(Error::invalid("map dimensions must be positive"));
    }
    if num_blobs == 0 {
        return Err(Error::invalid("baseline needs at least one blob"));
    }
    let (lo, hi) = sigma_range;
    if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
        return Err(Error::invalid(format!("bad sigma range [{lo}, {hi}]")));
    }
    let mut sum = ScalarField::zeros(height, width);
    for _ in 0..num_blobs {
        let cx = rng.gen_range(0.0..=1.0);
        let cy = rng.gen_range(0.0..=1.0);
        let sigma = if lo == hi { lo } else { rng.gen_range(lo..hi) };
        let blob = gaussian_blob(cx, cy, sigma, height, width)?;
        for (dst, src) in sum.data_mut().iter_mut().zip(blob.data()) {
            *dst += src;
        }
    }
    Ok(min_max_normalize(&sum))
}

/// Runs the whole pipeline on one image: adapt it to the predictor's input
/// shape, resolve the target (argmax of one forward pass when absent),
/// generate the scanpath, and synthesize the map at input resolution.
pub fn explain<R: Rng>(
    image: &Image,
    target: Option<usize>,
    predictor: &mut dyn Predictor,
    config: &FovexConfig,
    rng: &mut R,
) -> Result<Explanation> {
    config.validate()?;
    let started = Instant::now();
    let desc = predictor.descriptor().clone();

    let mut prepared = image.clone();
    if prepared.channels() != desc.input_channels {
        prepared = prepared.to_channels(desc.input_channels)?;
    }
    if prepared.height() != desc.input_height || prepared.width() != desc.input_width {
        prepared =
            crate::imaging::resize_bilinear(&prepared, desc.input_height, desc.input_width)?;
    }

    let target_class = match target {
        Some(t) => {
            if t >= desc.num_classes {
                return Err(Error::invalid(format!(
                    "target class {t} out of range for {} classes",
                    desc.num_classes
                )));
            }
            t
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

    let result = generate_scanpath(&prepared, target_class, predictor, config, rng)?;
    let alphas = compute_alphas(&result.scanpath.loss_gains, config.alpha_mode);
    let map = synthesize_map(
        &result.scanpath.fixations,
        &alphas,
        desc.input_height,
        desc.input_width,
        config.sigma_fovea_px(desc.input_height, desc.input_width),
    )?;

    Ok(Explanation {
        map,
        fixations: result.scanpath.fixations,
        alphas,
        loss_gains: result.scanpath.loss_gains,
        target_class,
        traces: result.traces,
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

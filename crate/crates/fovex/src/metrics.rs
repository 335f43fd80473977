//! Evaluation suite for attribution maps: faithfulness (average % drop,
//! average % increase, deletion/insertion curves), localization (energy-
//! based pointing game), and gaze correlation (NSS, AUC-Judd).
//!
//! Every metric has a brute-force-checkable definition: curves rank pixels
//! by (map value descending, row-major index ascending), deletion fills
//! with black, insertion restores from the σ_b-blurred baseline, AUCs are
//! trapezoids over the fraction axis with both endpoints included.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foveation::FovexConfig;
use crate::imaging::{blur, make_gaussian_kernel, Image, Rect, ScalarField};
use crate::predictor::Predictor;

/// Human fixation ground truth: pixel coordinates as (row, col), plus an
/// optional empirical attention map kept for report plotting.
#[derive(Debug, Clone)]
pub struct GazeData {
    points: Vec<(usize, usize)>,
    pub attention: Option<ScalarField>,
}

impl GazeData {
    pub fn new(points: Vec<(usize, usize)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("gaze data needs at least one fixation"));
        }
        Ok(GazeData { points, attention: None })
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    fn validate_for(&self, height: usize, width: usize) -> Result<()> {
        for &(r, c) in &self.points {
            if r >= height || c >= width {
                return Err(Error::invalid(format!(
                    "fixation ({r}, {c}) outside a {height}x{width} grid"
                )));
            }
        }
        Ok(())
    }

    /// Distinct fixated pixels; repeated fixations of the same pixel count
    /// once for NSS and AUC-Judd.
    fn distinct_pixels(&self) -> BTreeSet<(usize, usize)> {
        self.points.iter().copied().collect()
    }
}

/// Target probability on the full input and on the map-masked input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskedEval {
    pub p_full: f64,
    pub p_masked: f64,
}

fn check_map_shape(image: &Image, map: &ScalarField) -> Result<()> {
    if image.height() != map.height() || image.width() != map.width() {
        return Err(Error::invalid(format!(
            "map {}x{} does not match image {}x{}",
            map.height(),
            map.width(),
            image.height(),
            image.width()
        )));
    }
    Ok(())
}

/// Multiplicative masking: every channel of pixel p scaled by E[p].
fn masked_image(image: &Image, map: &ScalarField) -> Image {
    let ch = image.channels();
    let mut out = image.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v *= map.data()[i / ch];
    }
    out
}

/// Two forward passes: p_target on x and on E ⊙ x.
pub fn masked_eval(
    predictor: &mut dyn Predictor,
    image: &Image,
    map: &ScalarField,
    target: usize,
) -> Result<MaskedEval> {
    check_map_shape(image, map)?;
    let p_full = predictor.predict(image, None, false)?.probabilities[target];
    let masked = masked_image(image, map);
    let p_masked = predictor.predict(&masked, None, false)?.probabilities[target];
    Ok(MaskedEval { p_full, p_masked })
}

/// Per-image confidence drop: 100·max(0, p_full − p_masked)/p_full.
/// `None` when p_full is zero (nothing to normalize by).
pub fn pct_drop(eval: &MaskedEval) -> Option<f64> {
    if eval.p_full == 0.0 {
        None
    } else {
        Some(100.0 * (eval.p_full - eval.p_masked).max(0.0) / eval.p_full)
    }
}

/// Mean per-image drop and the number of images skipped for p_full = 0.
/// `None` when every image was skipped.
pub fn avg_pct_drop(evals: &[MaskedEval]) -> (Option<f64>, usize) {
    let drops: Vec<f64> = evals.iter().filter_map(pct_drop).collect();
    let skipped = evals.len() - drops.len();
    if drops.is_empty() {
        (None, skipped)
    } else {
        (Some(drops.iter().sum::<f64>() / drops.len() as f64), skipped)
    }
}

/// Percentage of images whose masked confidence strictly rises; the
/// denominator is the whole dataset.
pub fn avg_pct_increase(evals: &[MaskedEval]) -> Option<f64> {
    if evals.is_empty() {
        return None;
    }
    let risers = evals.iter().filter(|e| e.p_masked > e.p_full).count();
    Some(100.0 * risers as f64 / evals.len() as f64)
}

/// Probability trajectory over the fraction of pixels removed or inserted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub fractions: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Pixel indices ordered by (map value descending, row-major ascending).
/// The stable sort keeps the row-major order inside value ties.
pub fn ranked_pixels(map: &ScalarField) -> Vec<usize> {
    let mut order: Vec<usize> = (0..map.data().len()).collect();
    order.sort_by(|&a, &b| map.data()[b].total_cmp(&map.data()[a]));
    order
}

/// Trapezoidal area under the curve over its fraction axis.
fn trapezoid_auc(curve: &Curve) -> f64 {
    curve
        .fractions
        .windows(2)
        .zip(curve.probabilities.windows(2))
        .map(|(f, p)| (f[1] - f[0]) * (p[0] + p[1]) / 2.0)
        .sum()
}

fn batch_size(step_fraction: f64, pixel_count: usize) -> Result<usize> {
    if !(step_fraction.is_finite() && 0.0 < step_fraction && step_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "step fraction must be in (0, 1], got {step_fraction}"
        )));
    }
    Ok(((step_fraction * pixel_count as f64).ceil() as usize).clamp(1, pixel_count))
}

/// Walks the ranked pixels in batches, overwriting each batch in `work`
/// with the matching pixels of `source`, recording p_target after every
/// batch. Shared body of the deletion and insertion curves.
fn trajectory(
    predictor: &mut dyn Predictor,
    work: &mut Image,
    source: &Image,
    order: &[usize],
    target: usize,
    batch: usize,
) -> Result<Curve> {
    let total = order.len();
    let ch = work.channels();
    let mut fractions = vec![0.0];
    let mut probabilities = vec![predictor.predict(work, None, false)?.probabilities[target]];
    let mut done = 0;
    while done < total {
        let next = (done + batch).min(total);
        for &pix in &order[done..next] {
            for c in 0..ch {
                work.data_mut()[pix * ch + c] = source.data()[pix * ch + c];
            }
        }
        done = next;
        fractions.push(done as f64 / total as f64);
        probabilities.push(predictor.predict(work, None, false)?.probabilities[target]);
    }
    Ok(Curve { fractions, probabilities })
}

/// Removes pixels in importance order (fill = black), tracking p_target
/// from the intact image (fraction 0) to the fully erased one (fraction 1).
pub fn deletion_curve(
    predictor: &mut dyn Predictor,
    image: &Image,
    map: &ScalarField,
    target: usize,
    step_fraction: f64,
) -> Result<(Curve, f64)> {
    check_map_shape(image, map)?;
    let batch = batch_size(step_fraction, map.data().len())?;
    let order = ranked_pixels(map);
    let black = Image::filled(image.height(), image.width(), image.channels(), 0.0)?;
    let mut work = image.clone();
    let curve = trajectory(predictor, &mut work, &black, &order, target, batch)?;
    let auc = trapezoid_auc(&curve);
    Ok((curve, auc))
}

/// Restores pixels in importance order starting from the σ_b-blurred
/// baseline, tracking p_target up to the fully restored image.
pub fn insertion_curve(
    predictor: &mut dyn Predictor,
    image: &Image,
    map: &ScalarField,
    target: usize,
    step_fraction: f64,
    config: &FovexConfig,
) -> Result<(Curve, f64)> {
    check_map_shape(image, map)?;
    let batch = batch_size(step_fraction, map.data().len())?;
    let order = ranked_pixels(map);
    let kernel = make_gaussian_kernel(config.sigma_blur, config.blur_filter_size)?;
    let mut work = blur(image, &kernel);
    let curve = trajectory(predictor, &mut work, image, &order, target, batch)?;
    let auc = trapezoid_auc(&curve);
    Ok((curve, auc))
}

/// Energy-based pointing game: share of total map mass inside the box,
/// in percent. The box is clipped to the grid.
pub fn ebpg(map: &ScalarField, bbox: &Rect) -> Result<f64> {
    if map.data().iter().any(|v| *v < 0.0) {
        return Err(Error::invalid("attribution map has negative mass"));
    }
    if !bbox.intersects_grid(map.height(), map.width()) {
        return Err(Error::invalid("bounding box does not touch the grid"));
    }
    let total = map.sum();
    if total == 0.0 {
        return Err(Error::UndefinedMetric(
            "energy share of an all-zero map".into(),
        ));
    }
    let mut inside = 0.0;
    for r in bbox.y..(bbox.y + bbox.h).min(map.height()) {
        for c in bbox.x..(bbox.x + bbox.w).min(map.width()) {
            inside += map.get(r, c);
        }
    }
    Ok(100.0 * inside / total)
}

/// Normalized scanpath saliency: the map is z-scored with the population
/// standard deviation, then averaged over the distinct fixated pixels.
/// A constant map scores 0.
pub fn nss(map: &ScalarField, gaze: &GazeData) -> Result<f64> {
    gaze.validate_for(map.height(), map.width())?;
    // An exactly constant map has σ = 0 by definition; testing the values
    // avoids the rounding drift of a computed σ.
    if map.data().windows(2).all(|w| w[0] == w[1]) {
        return Ok(0.0);
    }
    let n = map.data().len() as f64;
    let mean = map.data().iter().sum::<f64>() / n;
    let var = map.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 {
        return Ok(0.0);
    }
    let pixels = gaze.distinct_pixels();
    let z_sum: f64 = pixels.iter().map(|&(r, c)| (map.get(r, c) - mean) / sd).sum();
    Ok(z_sum / pixels.len() as f64)
}

/// AUC-Judd: positives are the distinct fixated pixels, negatives all
/// others; one ROC point per distinct positive value with TPR/FPR counting
/// values ≥ the threshold, plus the (0,0) and (1,1) endpoints; trapezoidal
/// area.
pub fn aucj(map: &ScalarField, gaze: &GazeData) -> Result<f64> {
    gaze.validate_for(map.height(), map.width())?;
    let fixated = gaze.distinct_pixels();
    let total = map.data().len();
    if fixated.len() >= total {
        return Err(Error::invalid("every pixel is fixated; no negatives left"));
    }
    let mut positives = Vec::with_capacity(fixated.len());
    let mut negatives = Vec::with_capacity(total - fixated.len());
    for r in 0..map.height() {
        for c in 0..map.width() {
            if fixated.contains(&(r, c)) {
                positives.push(map.get(r, c));
            } else {
                negatives.push(map.get(r, c));
            }
        }
    }
    let mut thresholds = positives.clone();
    thresholds.sort_by(|a, b| a.total_cmp(b));
    thresholds.dedup();

    let mut points = vec![(0.0, 0.0), (1.0, 1.0)];
    for t in &thresholds {
        let tpr = positives.iter().filter(|v| *v >= t).count() as f64 / positives.len() as f64;
        let fpr = negatives.iter().filter(|v| *v >= t).count() as f64 / negatives.len() as f64;
        points.push((fpr, tpr));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let area = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(area)
}

/// Per-image faithfulness numbers backing the dataset aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessRow {
    pub p_full: f64,
    pub p_masked: f64,
    pub pct_drop: Option<f64>,
    pub increased: bool,
    pub delete_auc: f64,
    pub insert_auc: f64,
}

/// All four faithfulness numbers for one (image, map, target) triple.
pub fn faithfulness_row(
    predictor: &mut dyn Predictor,
    image: &Image,
    map: &ScalarField,
    target: usize,
    step_fraction: f64,
    config: &FovexConfig,
) -> Result<FaithfulnessRow> {
    let eval = masked_eval(predictor, image, map, target)?;
    let (_, delete_auc) = deletion_curve(predictor, image, map, target, step_fraction)?;
    let (_, insert_auc) = insertion_curve(predictor, image, map, target, step_fraction, config)?;
    Ok(FaithfulnessRow {
        p_full: eval.p_full,
        p_masked: eval.p_masked,
        pct_drop: pct_drop(&eval),
        increased: eval.p_masked > eval.p_full,
        delete_auc,
        insert_auc,
    })
}

/// Dataset-level aggregates; every field is the arithmetic mean of its
/// per-row values (drop skips rows with p_full = 0, counted separately).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub avg_pct_drop: Option<f64>,
    pub avg_pct_increase: Option<f64>,
    pub delete_auc: Option<f64>,
    pub insert_auc: Option<f64>,
    pub drop_skipped: usize,
    pub rows: Vec<FaithfulnessRow>,
}

impl FaithfulnessReport {
    pub fn from_rows(rows: Vec<FaithfulnessRow>) -> Self {
        let mean = |values: Vec<f64>| {
            if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            }
        };
        let drops: Vec<f64> = rows.iter().filter_map(|r| r.pct_drop).collect();
        let drop_skipped = rows.len() - drops.len();
        let avg_pct_increase = if rows.is_empty() {
            None
        } else {
            Some(100.0 * rows.iter().filter(|r| r.increased).count() as f64 / rows.len() as f64)
        };
        FaithfulnessReport {
            avg_pct_drop: mean(drops),
            avg_pct_increase,
            delete_auc: mean(rows.iter().map(|r| r.delete_auc).collect()),
            insert_auc: mean(rows.iter().map(|r| r.insert_auc).collect()),
            drop_skipped,
            rows,
        }
    }
}

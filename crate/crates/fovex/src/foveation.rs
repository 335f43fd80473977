//! Differentiable foveation: single-fixation rendering, the cumulative
//! acuity state across a scanpath, and the analytic derivative of the
//! rendered state with respect to a candidate fixation.
//!
//! A rendered state blends the original image `x` with its peripherally
//! blurred version `x̄` through a per-pixel acuity weight in `[0, 1]`:
//! `s = acuity·x + (1 − acuity)·x̄`. Acuity is the clamped sum of
//! fixation-centered Gaussian blobs with exponential forgetting, the newest
//! fixation always at full weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{gaussian_blob, Image, ScalarField};

/// How per-fixation weights α_i are chosen when synthesizing the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMode {
    Uniform,
    LossGain,
}

impl std::str::FromStr for AlphaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "loss-gain" => Ok(Self::LossGain),
            other => Err(Error::invalid(format!(
                "unknown alpha mode {other:?}, expected uniform or loss-gain"
            ))),
        }
    }
}

/// How δL/δf is obtained during fixation optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    Analytic,
    FiniteDifference,
}

impl std::str::FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "finite-difference" => Ok(Self::FiniteDifference),
            other => Err(Error::invalid(format!(
                "unknown gradient mode {other:?}, expected analytic or finite-difference"
            ))),
        }
    }
}

/// All tunables of the explanation pipeline. `sigma_fovea` and `fd_step`
/// default to resolution-dependent values when unset (`0.1·min(H,W)` pixels
/// and `1/max(H,W)` normalized units respectively).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FovexConfig {
    /// Peripheral blur σ_b in pixels.
    pub sigma_blur: f64,
    /// Odd tap count of the separable blur kernel.
    pub blur_filter_size: usize,
    /// Fovea σ_f in pixels; `None` resolves per image.
    pub sigma_fovea: Option<f64>,
    /// Forgetting factor β in [0, 1]; older fixations decay as β^age.
    pub forgetting: f64,
    /// Gradient step λ in normalized-coordinate units.
    pub step_size: f64,
    /// Descent steps per fixation.
    pub optimization_steps: usize,
    /// Re-seed the candidate at a random location when progress stalls.
    pub random_restarts: bool,
    /// Steps without improvement before a restart triggers.
    pub restart_patience: usize,
    /// Scanpath length N.
    pub scanpath_length: usize,
    pub alpha_mode: AlphaMode,
    pub gradient_mode: GradientMode,
    /// Finite-difference probe step in normalized units; `None` resolves per
    /// image.
    pub fd_step: Option<f64>,
    pub seed: u64,
}

impl Default for FovexConfig {
    fn default() -> Self {
        Self {
            sigma_blur: 5.0,
            blur_filter_size: 21,
            sigma_fovea: None,
            forgetting: 1.0,
            step_size: 0.1,
            optimization_steps: 20,
            random_restarts: false,
            restart_patience: 5,
            scanpath_length: 10,
            alpha_mode: AlphaMode::Uniform,
            gradient_mode: GradientMode::Analytic,
            fd_step: None,
            seed: 0,
        }
    }
}

impl FovexConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_blur > 0.0) || !self.sigma_blur.is_finite() {
            return Err(Error::invalid("sigma_blur must be positive"));
        }
        if self.blur_filter_size == 0 || self.blur_filter_size % 2 == 0 {
            return Err(Error::invalid("blur_filter_size must be odd"));
        }
        if let Some(s) = self.sigma_fovea {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::invalid("sigma_fovea must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.forgetting) || !self.forgetting.is_finite() {
            return Err(Error::invalid("forgetting must lie in [0,1]"));
        }
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err(Error::invalid("step_size must be non-negative"));
        }
        if self.optimization_steps == 0 {
            return Err(Error::invalid("optimization_steps must be at least 1"));
        }
        if self.restart_patience == 0 {
            return Err(Error::invalid("restart_patience must be at least 1"));
        }
        if self.scanpath_length == 0 {
            return Err(Error::invalid("scanpath_length must be at least 1"));
        }
        if let Some(h) = self.fd_step {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::invalid("fd_step must be positive"));
            }
        }
        Ok(())
    }

    /// Fovea σ in pixels for a given grid, resolving the auto default.
    pub fn sigma_fovea_px(&self, height: usize, width: usize) -> f64 {
        self.sigma_fovea
            .unwrap_or_else(|| 0.1 * height.min(width) as f64)
    }

    /// Finite-difference step in normalized units for a given grid.
    pub fn fd_step_for(&self, height: usize, width: usize) -> f64 {
        self.fd_step
            .unwrap_or_else(|| 1.0 / height.max(width) as f64)
    }
}

/// A gaze location in normalized `[0,1]²` coordinates (x across columns,
/// y down rows), with the loss value it converged to as a diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub x: f64,
    pub y: f64,
    pub loss_at_convergence: f64,
}

impl Fixation {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, loss_at_convergence: 0.0 }
    }

    /// Clamps coordinates into `[0,1]²`, the invariant for stored fixations.
    /// Candidates during optimization may transiently exit before clamping.
    pub fn clamped(&self) -> Self {
        Self {
            x: self.x.clamp(0.0, 1.0),
            y: self.y.clamp(0.0, 1.0),
            loss_at_convergence: self.loss_at_convergence,
        }
    }
}

/// Immutable snapshot of the scanpath so far: the clamped acuity field, the
/// rendered blend, the accepted fixations, and the cached blurred base.
///
/// The pre-clamp accumulator is kept alongside the clamped acuity so that
/// adding a fixation is a single recurrence (`raw_t = β·raw_{t−1} + blob_t`)
/// and so the gradient can tell exactly where the clamp saturates.
#[derive(Debug, Clone)]
pub struct FoveationState {
    raw: ScalarField,
    acuity: ScalarField,
    rendered: Image,
    fixation_history: Vec<Fixation>,
    blurred_base: Image,
}

impl FoveationState {
    /// State before any fixation: zero acuity, rendered equals the blur.
    pub fn empty(image: &Image, blurred: &Image) -> Result<Self> {
        check_pair(image, blurred)?;
        Ok(Self {
            raw: ScalarField::zeros(image.height(), image.width()),
            acuity: ScalarField::zeros(image.height(), image.width()),
            rendered: blurred.clone(),
            fixation_history: Vec::new(),
            blurred_base: blurred.clone(),
        })
    }

    /// Clamped cumulative acuity G_t, values in `[0, 1]`.
    pub fn acuity(&self) -> &ScalarField {
        &self.acuity
    }

    /// The foveated rendering s_t.
    pub fn rendered(&self) -> &Image {
        &self.rendered
    }

    pub fn fixation_history(&self) -> &[Fixation] {
        &self.fixation_history
    }

    pub fn blurred_base(&self) -> &Image {
        &self.blurred_base
    }
}

fn check_pair(image: &Image, blurred: &Image) -> Result<()> {
    if !image.same_shape(blurred) {
        return Err(Error::invalid(format!(
            "image {}x{}x{} and blur {}x{}x{} differ in shape",
            image.height(),
            image.width(),
            image.channels(),
            blurred.height(),
            blurred.width(),
            blurred.channels()
        )));
    }
    Ok(())
}

fn blend(image: &Image, blurred: &Image, weight: &ScalarField) -> Image {
    let ch = image.channels();
    let mut data = Vec::with_capacity(image.data().len());
    for (i, (&x, &xb)) in image.data().iter().zip(blurred.data()).enumerate() {
        let w = weight.data()[i / ch];
        data.push((w * x + (1.0 - w) * xb).clamp(0.0, 1.0));
    }
    Image::new(image.height(), image.width(), ch, data)
        .expect("convex blend of valid images stays in range")
}

/// Single-fixation rendering: `x_Φ = W·x + (1−W)·x̄` with `W` an
/// amplitude-normalized Gaussian blob centered at `f`.
pub fn foveate(image: &Image, blurred: &Image, f: &Fixation, sigma_fovea_px: f64) -> Result<Image> {
    check_pair(image, blurred)?;
    let w = gaussian_blob(f.x, f.y, sigma_fovea_px, image.height(), image.width())?;
    Ok(blend(image, blurred, &w))
}

/// Extends the scanpath by one fixation. Existing blob weights decay by β,
/// the new blob enters at weight 1, and acuity is the accumulator clamped
/// to `[0, 1]`:
///
/// `acuity_t = clamp(Σ_j β^{t−j} · blob(f_j))`,  `s_t = acuity_t·x + (1−acuity_t)·x̄`
pub fn accumulate_state(
    prev: Option<&FoveationState>,
    image: &Image,
    blurred: &Image,
    f_new: &Fixation,
    config: &FovexConfig,
) -> Result<FoveationState> {
    check_pair(image, blurred)?;
    let (h, w) = (image.height(), image.width());
    if let Some(p) = prev {
        if p.raw.height() != h || p.raw.width() != w {
            return Err(Error::invalid("state and image dimensions differ"));
        }
    }
    let sigma = config.sigma_fovea_px(h, w);
    let blob = gaussian_blob(f_new.x, f_new.y, sigma, h, w)?;
    let beta = config.forgetting;

    let mut raw = Vec::with_capacity(h * w);
    match prev {
        Some(p) => {
            for (u, b) in p.raw.data().iter().zip(blob.data()) {
                raw.push(beta * u + b);
            }
        }
        None => raw.extend_from_slice(blob.data()),
    }
    let acuity: Vec<f64> = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let raw = ScalarField::new(h, w, raw)?;
    let acuity = ScalarField::new(h, w, acuity)?;
    let rendered = blend(image, blurred, &acuity);

    let mut fixation_history = prev.map(|p| p.fixation_history.clone()).unwrap_or_default();
    fixation_history.push(*f_new);

    Ok(FoveationState { raw, acuity, rendered, fixation_history, blurred_base: blurred.clone() })
}

/// `∂rendered/∂(f.x, f.y)` for a candidate fixation appended to `prev`,
/// flattened row-major over `(row, col, channel)` like `Image` data.
#[derive(Debug, Clone)]
pub struct RenderGradient {
    pub d_fx: Vec<f64>,
    pub d_fy: Vec<f64>,
}

/// Analytic derivative of the rendered state with respect to the candidate
/// fixation coordinates. Where the cumulative acuity saturates the clamp
/// (pre-clamp value ≥ 1) the derivative is zero (projection subgradient);
/// elsewhere it is
///
/// `∂s/∂f.x = (x − x̄) · blob · (c+0.5 − f.x·W) · W / σ²`
///
/// and symmetrically in y. The blob peak itself contributes zero (critical
/// point of the Gaussian).
pub fn state_gradient_wrt_fixation(
    image: &Image,
    blurred: &Image,
    prev: Option<&FoveationState>,
    f_candidate: &Fixation,
    config: &FovexConfig,
) -> Result<RenderGradient> {
    check_pair(image, blurred)?;
    let (h, w, ch) = (image.height(), image.width(), image.channels());
    let sigma = config.sigma_fovea_px(h, w);
    let blob = gaussian_blob(f_candidate.x, f_candidate.y, sigma, h, w)?;
    let beta = config.forgetting;
    let inv_sigma2 = 1.0 / (sigma * sigma);
    let cx = f_candidate.x * w as f64;
    let cy = f_candidate.y * h as f64;

    let mut d_fx = vec![0.0; h * w * ch];
    let mut d_fy = vec![0.0; h * w * ch];
    for row in 0..h {
        let dy = row as f64 + 0.5 - cy;
        for col in 0..w {
            let pix = row * w + col;
            let pre_clamp = match prev {
                Some(p) => beta * p.raw.data()[pix] + blob.data()[pix],
                None => blob.data()[pix],
            };
            if pre_clamp >= 1.0 {
                continue;
            }
            let dx = col as f64 + 0.5 - cx;
            let gx = blob.data()[pix] * dx * w as f64 * inv_sigma2;
            let gy = blob.data()[pix] * dy * h as f64 * inv_sigma2;
            for channel in 0..ch {
                let idx = pix * ch + channel;
                let contrast = image.data()[idx] - blurred.data()[idx];
                d_fx[idx] = contrast * gx;
                d_fy[idx] = contrast * gy;
            }
        }
    }
    Ok(RenderGradient { d_fx, d_fy })
}

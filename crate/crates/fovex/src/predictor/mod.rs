//! The black-box classifier boundary: a uniform `Predictor` trait, built-in
//! analytically differentiable reference predictors for desk-scale work, an
//! external client speaking a newline-delimited JSON protocol, and a by-name
//! registry for runtime selection.
//!
//! Logits (pre-softmax scores) are the only quantity that crosses the
//! boundary; softmax is applied once, centrally, so metrics and the
//! optimizer can never double-normalize.

mod constant;
mod counting;
mod external;
mod linear;
mod planted;
pub mod protocol;
mod registry;

pub use constant::ConstantPredictor;
pub use counting::CountingPredictor;
pub use external::{ExternalOptions, ExternalPredictor, LineTransport};
pub use linear::{make_linear_reference, LinearPredictor};
pub use planted::PlantedPatchPredictor;
pub use registry::{BuiltinOptions, PredictorRegistry};

use crate::error::{Error, Result};
use crate::imaging::Image;

/// One forward pass: logits, their softmax, and optionally the gradient of
/// the requested target logit with respect to the input (row-major H·W·C).
#[derive(Debug, Clone)]
pub struct PredictorOutput {
    pub scores: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub input_gradient: Option<Vec<f64>>,
}

/// Shape and capability contract a predictor declares up front. Weights and
/// internals never cross this boundary.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PredictorDescriptor {
    pub name: String,
    pub num_classes: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    pub supports_gradient: bool,
}

impl PredictorDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("predictor must have at least 2 classes"));
        }
        if self.input_height == 0 || self.input_width == 0 {
            return Err(Error::invalid("predictor input dimensions must be positive"));
        }
        if self.input_channels != 1 && self.input_channels != 3 {
            return Err(Error::invalid("predictor input channels must be 1 or 3"));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.input_height * self.input_width * self.input_channels
    }
}

/// Numerically stable softmax (max-shifted exponentials).
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Shared request validation: shape match, target range, capability gate.
pub(crate) fn check_request(
    desc: &PredictorDescriptor,
    image: &Image,
    target: Option<usize>,
    want_gradient: bool,
) -> Result<()> {
    if image.height() != desc.input_height
        || image.width() != desc.input_width
        || image.channels() != desc.input_channels
    {
        return Err(Error::invalid(format!(
            "input {}x{}x{} does not match predictor {}x{}x{}",
            image.height(),
            image.width(),
            image.channels(),
            desc.input_height,
            desc.input_width,
            desc.input_channels
        )));
    }
    if let Some(t) = target {
        if t >= desc.num_classes {
            return Err(Error::invalid(format!(
                "target class {t} out of range for {} classes",
                desc.num_classes
            )));
        }
    }
    if want_gradient && !desc.supports_gradient {
        return Err(Error::Capability(format!(
            "predictor {:?} does not expose input gradients",
            desc.name
        )));
    }
    if want_gradient && target.is_none() {
        return Err(Error::invalid("gradient request needs a target class"));
    }
    Ok(())
}

/// A classifier seen as a black box. `predict` is the only required entry
/// point; `loss_input_gradient` has a generic (K-pass) default that concrete
/// predictors override in closed form.
pub trait Predictor: Send {
    fn descriptor(&self) -> &PredictorDescriptor;

    /// Scores the image. `input_gradient` in the output is
    /// `∂score[target]/∂input` and is present iff `want_gradient` was set
    /// (which requires declared gradient capability and a target).
    fn predict(
        &mut self,
        image: &Image,
        target: Option<usize>,
        want_gradient: bool,
    ) -> Result<PredictorOutput>;

    /// Gradient of the cross-entropy loss `−ln p_target` with respect to the
    /// input: `Σ_k (p_k − 1[k = target]) · ∂score_k/∂input`. The default
    /// assembles it from one logit-gradient pass per class.
    fn loss_input_gradient(&mut self, image: &Image, target: usize) -> Result<Vec<f64>> {
        let desc = self.descriptor();
        check_request(desc, image, Some(target), true)?;
        let k = desc.num_classes;
        let n = desc.input_len();
        let mut acc = vec![0.0; n];
        let mut probs: Option<Vec<f64>> = None;
        for class in 0..k {
            let out = self.predict(image, Some(class), true)?;
            let grad = out
                .input_gradient
                .as_ref()
                .ok_or_else(|| Error::Capability("predictor returned no gradient".into()))?;
            if grad.len() != n {
                return Err(Error::invalid(format!(
                    "gradient length {} does not match input length {n}",
                    grad.len()
                )));
            }
            let p = probs.get_or_insert_with(|| out.probabilities.clone());
            let coeff = p[class] - if class == target { 1.0 } else { 0.0 };
            for (a, g) in acc.iter_mut().zip(grad) {
                *a += coeff * g;
            }
        }
        Ok(acc)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Central-difference audit of `∂score[target]/∂input`. Returns the
    /// maximum relative error (with an absolute floor) over all input
    /// components. `image` values must leave headroom `h` to both bounds.
    pub fn logit_gradient_fd_audit(
        predictor: &mut dyn Predictor,
        image: &Image,
        target: usize,
        h: f64,
    ) -> f64 {
        let analytic = predictor
            .predict(image, Some(target), true)
            .unwrap()
            .input_gradient
            .unwrap();
        let mut worst: f64 = 0.0;
        let base = image.data().to_vec();
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let mut score = |data: Vec<f64>| {
                let img =
                    Image::new(image.height(), image.width(), image.channels(), data).unwrap();
                predictor.predict(&img, None, false).unwrap().scores[target]
            };
            let fd = (score(plus) - score(minus)) / (2.0 * h);
            let scale = fd.abs().max(1e-8);
            worst = worst.max((analytic[i] - fd).abs() / scale);
        }
        worst
    }
}

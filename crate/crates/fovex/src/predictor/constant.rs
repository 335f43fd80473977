//! Input-independent predictor for tests and baselines: fixed logits, and
//! (when gradient-capable) an all-zero input gradient, since a constant is
//! insensitive to its input.

use super::{check_request, softmax, Predictor, PredictorDescriptor, PredictorOutput};
use crate::error::{Error, Result};
use crate::imaging::Image;

#[derive(Debug, Clone)]
pub struct ConstantPredictor {
    descriptor: PredictorDescriptor,
    scores: Vec<f64>,
}

impl ConstantPredictor {
    /// `supports_gradient` on the descriptor decides whether zero gradients
    /// are offered or gradient requests fail with a capability error.
    pub fn new(descriptor: PredictorDescriptor, scores: Vec<f64>) -> Result<Self> {
        descriptor.validate()?;
        if scores.len() != descriptor.num_classes {
            return Err(Error::invalid("score vector length must equal class count"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("scores must be finite"));
        }
        Ok(Self { descriptor, scores })
    }
}

impl Predictor for ConstantPredictor {
    fn descriptor(&self) -> &PredictorDescriptor {
        &self.descriptor
    }

    fn predict(
        &mut self,
        image: &Image,
        target: Option<usize>,
        want_gradient: bool,
    ) -> Result<PredictorOutput> {
        check_request(&self.descriptor, image, target, want_gradient)?;
        let input_gradient = want_gradient.then(|| vec![0.0; self.descriptor.input_len()]);
        Ok(PredictorOutput {
            scores: self.scores.clone(),
            probabilities: softmax(&self.scores),
            input_gradient,
        })
    }
}

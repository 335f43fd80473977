//! Linear-softmax reference predictor: `scores = W · flatten(x) + b` with
//! seeded pseudo-random weights. Its logit gradients are the weight rows, so
//! it doubles as the ground truth for gradient plumbing tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{check_request, softmax, Predictor, PredictorDescriptor, PredictorOutput};
use crate::error::{Error, Result};
use crate::imaging::Image;

#[derive(Debug, Clone)]
pub struct LinearPredictor {
    descriptor: PredictorDescriptor,
    /// Row-major `K × D` weight matrix, D = H·W·C.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearPredictor {
    pub fn new(
        mut descriptor: PredictorDescriptor,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        descriptor.supports_gradient = true;
        descriptor.validate()?;
        let d = descriptor.input_len();
        if weights.len() != descriptor.num_classes * d {
            return Err(Error::invalid(format!(
                "weight matrix length {} does not match {}x{d}",
                weights.len(),
                descriptor.num_classes
            )));
        }
        if bias.len() != descriptor.num_classes {
            return Err(Error::invalid("bias length does not match class count"));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::invalid("weights and bias must be finite"));
        }
        Ok(Self { descriptor, weights, bias })
    }

    pub fn weight_row(&self, class: usize) -> &[f64] {
        let d = self.descriptor.input_len();
        &self.weights[class * d..(class + 1) * d]
    }
}

/// Seeded random linear predictor. Weight scale shrinks with input size so
/// logits keep an order-one spread for unit-interval inputs.
pub fn make_linear_reference(descriptor: PredictorDescriptor, seed: u64) -> Result<LinearPredictor> {
    let d = descriptor.input_len();
    let k = descriptor.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight_dist = Normal::new(0.0, 3.0 / (d as f64).sqrt())
        .map_err(|e| Error::invalid(e.to_string()))?;
    let bias_dist = Normal::new(0.0, 0.1).map_err(|e| Error::invalid(e.to_string()))?;
    let weights = (0..k * d).map(|_| weight_dist.sample(&mut rng)).collect();
    let bias = (0..k).map(|_| bias_dist.sample(&mut rng)).collect();
    LinearPredictor::new(descriptor, weights, bias)
}

impl Predictor for LinearPredictor {
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
        let d = self.descriptor.input_len();
        let scores: Vec<f64> = (0..self.descriptor.num_classes)
            .map(|k| {
                let row = &self.weights[k * d..(k + 1) * d];
                self.bias[k]
                    + row
                        .iter()
                        .zip(image.data())
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            })
            .collect();
        let probabilities = softmax(&scores);
        let input_gradient = if want_gradient {
            Some(self.weight_row(target.unwrap()).to_vec())
        } else {
            None
        };
        Ok(PredictorOutput { scores, probabilities, input_gradient })
    }

    fn loss_input_gradient(&mut self, image: &Image, target: usize) -> Result<Vec<f64>> {
        check_request(&self.descriptor, image, Some(target), true)?;
        let out = self.predict(image, None, false)?;
        let d = self.descriptor.input_len();
        let mut grad = vec![0.0; d];
        for k in 0..self.descriptor.num_classes {
            let coeff = out.probabilities[k] - if k == target { 1.0 } else { 0.0 };
            for (g, w) in grad.iter_mut().zip(self.weight_row(k)) {
                *g += coeff * w;
            }
        }
        Ok(grad)
    }
}

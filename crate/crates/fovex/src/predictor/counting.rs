//! Forward-call counting decorator, used to enforce the optimizer's
//! evaluation budget in tests and to report per-run call counts.

use super::{Predictor, PredictorDescriptor, PredictorOutput};
use crate::error::Result;
use crate::imaging::Image;

pub struct CountingPredictor<P> {
    inner: P,
    forward_calls: u64,
    loss_gradient_calls: u64,
}

impl<P: Predictor> CountingPredictor<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, forward_calls: 0, loss_gradient_calls: 0 }
    }

    /// Total `predict` invocations crossing the boundary.
    pub fn forward_calls(&self) -> u64 {
        self.forward_calls
    }

    /// Total `loss_input_gradient` invocations (delegated to the inner
    /// predictor's own implementation, typically closed-form).
    pub fn loss_gradient_calls(&self) -> u64 {
        self.loss_gradient_calls
    }

    pub fn reset(&mut self) {
        self.forward_calls = 0;
        self.loss_gradient_calls = 0;
    }

    pub fn into_inner(self) -> P {
        self.inner
    }
}

impl<P: Predictor> Predictor for CountingPredictor<P> {
    fn descriptor(&self) -> &PredictorDescriptor {
        self.inner.descriptor()
    }

    fn predict(
        &mut self,
        image: &Image,
        target: Option<usize>,
        want_gradient: bool,
    ) -> Result<PredictorOutput> {
        self.forward_calls += 1;
        self.inner.predict(image, target, want_gradient)
    }

    /// Delegates so the inner closed-form path is preserved; counted
    /// separately from plain forwards.
    fn loss_input_gradient(&mut self, image: &Image, target: usize) -> Result<Vec<f64>> {
        self.loss_gradient_calls += 1;
        self.inner.loss_input_gradient(image, target)
    }
}

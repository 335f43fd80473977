//! Scanpath generation: per-fixation gradient descent on the classification
//! loss of the foveated rendering.
//!
//! Each fixation gets `optimization_steps` evaluations of the loss gradient
//! with respect to the candidate coordinates, via either the analytic chain
//! rule (predictor input gradient · foveation render gradient) or central
//! finite differences of the scalar loss (4 forward passes per step, the
//! entire evaluation budget in that mode). The best-loss candidate ever
//! visited wins; optional random restarts resample the candidate when the
//! best loss stalls.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foveation::{
    accumulate_state, state_gradient_wrt_fixation, Fixation, FoveationState, FovexConfig,
    GradientMode,
};
use crate::imaging::{blur, make_gaussian_kernel, Image};
use crate::predictor::{Predictor, PredictorOutput};

/// Floor for the target probability inside the log, keeping the loss finite.
const PROB_FLOOR: f64 = 1e-12;

/// Cross-entropy against the one-hot target: `−ln p_target`.
pub fn loss(output: &PredictorOutput, target: usize) -> f64 {
    -output.probabilities[target].max(PROB_FLOOR).ln()
}

/// One loss evaluation during fixation optimization. In finite-difference
/// mode the recorded loss is the mean of the step's four probe losses (an
/// O(h²) estimate of the loss at the candidate, free of extra calls).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub candidate: Fixation,
    pub loss: f64,
}

/// Full diagnostic of one `optimize_fixation` call. Restart re-evaluations
/// append extra records, so `steps.len() = optimization_steps + restarts`.
#[derive(Debug, Clone)]
pub struct OptimizationTrace {
    pub steps: Vec<StepRecord>,
    pub restarts_taken: usize,
    pub converged_fixation: Fixation,
    pub wall_clock_s: f64,
}

/// The accepted fixation sequence F = (f_1, …, f_N) with each fixation's
/// loss-gain: first evaluated loss of its round minus the loss it converged
/// to (never negative).
#[derive(Debug, Clone)]
pub struct Scanpath {
    pub fixations: Vec<Fixation>,
    pub loss_gains: Vec<f64>,
}

/// Everything one scanpath run produces.
#[derive(Debug, Clone)]
pub struct ScanpathResult {
    pub scanpath: Scanpath,
    pub state: FoveationState,
    pub traces: Vec<OptimizationTrace>,
}

struct Evaluator<'a> {
    image: &'a Image,
    blurred: &'a Image,
    prev: Option<&'a FoveationState>,
    target: usize,
    config: &'a FovexConfig,
}

impl Evaluator<'_> {
    fn loss_at(&self, predictor: &mut dyn Predictor, f: &Fixation) -> Result<f64> {
        let state = accumulate_state(self.prev, self.image, self.blurred, f, self.config)?;
        let out = predictor.predict(state.rendered(), None, false)?;
        Ok(loss(&out, self.target))
    }

    /// Loss and its gradient at a candidate, by the configured mode.
    fn evaluate(
        &self,
        predictor: &mut dyn Predictor,
        f: &Fixation,
    ) -> Result<(f64, [f64; 2])> {
        match self.config.gradient_mode {
            GradientMode::Analytic => {
                let state =
                    accumulate_state(self.prev, self.image, self.blurred, f, self.config)?;
                let out = predictor.predict(state.rendered(), None, false)?;
                let l = loss(&out, self.target);
                let dl_ds = predictor.loss_input_gradient(state.rendered(), self.target)?;
                let rg = state_gradient_wrt_fixation(
                    self.image,
                    self.blurred,
                    self.prev,
                    f,
                    self.config,
                )?;
                let gx = dl_ds.iter().zip(&rg.d_fx).map(|(a, b)| a * b).sum();
                let gy = dl_ds.iter().zip(&rg.d_fy).map(|(a, b)| a * b).sum();
                Ok((l, [gx, gy]))
            }
            GradientMode::FiniteDifference => {
                let h = self
                    .config
                    .fd_step_for(self.image.height(), self.image.width());
                let lxp = self.loss_at(predictor, &Fixation::new(f.x + h, f.y))?;
                let lxm = self.loss_at(predictor, &Fixation::new(f.x - h, f.y))?;
                let lyp = self.loss_at(predictor, &Fixation::new(f.x, f.y + h))?;
                let lym = self.loss_at(predictor, &Fixation::new(f.x, f.y - h))?;
                let grad = [(lxp - lxm) / (2.0 * h), (lyp - lym) / (2.0 * h)];
                Ok(((lxp + lxm + lyp + lym) / 4.0, grad))
            }
        }
    }
}

/// δL/δf at a candidate fixation, by the configured gradient mode.
pub fn fixation_gradient(
    image: &Image,
    blurred: &Image,
    prev: Option<&FoveationState>,
    candidate: &Fixation,
    target: usize,
    predictor: &mut dyn Predictor,
    config: &FovexConfig,
) -> Result<[f64; 2]> {
    if config.gradient_mode == GradientMode::Analytic
        && !predictor.descriptor().supports_gradient
    {
        return Err(Error::Capability(
            "analytic gradient mode needs a gradient-capable predictor".into(),
        ));
    }
    let eval = Evaluator { image, blurred, prev, target, config };
    Ok(eval.evaluate(predictor, candidate)?.1)
}

/// Optimizes one fixation from `init`: `optimization_steps` evaluations of
/// loss and gradient, descent updates `f ← clamp(f − λ·∇)` between them,
/// and (when enabled) a uniform resample after `restart_patience`
/// evaluations without best-loss improvement. Returns the best candidate
/// ever evaluated.
pub fn optimize_fixation<R: Rng>(
    image: &Image,
    blurred: &Image,
    prev: Option<&FoveationState>,
    init: Fixation,
    target: usize,
    predictor: &mut dyn Predictor,
    config: &FovexConfig,
    rng: &mut R,
) -> Result<(Fixation, OptimizationTrace)> {
    config.validate()?;
    if config.gradient_mode == GradientMode::Analytic
        && !predictor.descriptor().supports_gradient
    {
        return Err(Error::Capability(
            "analytic gradient mode needs a gradient-capable predictor".into(),
        ));
    }
    let started = Instant::now();
    let eval = Evaluator { image, blurred, prev, target, config };

    let mut candidate = init;
    let mut steps = Vec::with_capacity(config.optimization_steps);
    let mut best: Option<(Fixation, f64)> = None;
    let mut stall = 0usize;
    let mut restarts_taken = 0usize;

    let record = |steps: &mut Vec<StepRecord>,
                      best: &mut Option<(Fixation, f64)>,
                      stall: &mut usize,
                      candidate: Fixation,
                      l: f64| {
        steps.push(StepRecord { step: steps.len(), candidate, loss: l });
        match best {
            Some((_, b)) if l >= *b => *stall += 1,
            _ => {
                *best = Some((candidate, l));
                *stall = 0;
            }
        }
    };

    for _ in 0..config.optimization_steps {
        let (l, mut grad) = eval.evaluate(predictor, &candidate)?;
        if !l.is_finite() || !grad[0].is_finite() || !grad[1].is_finite() {
            return Err(Error::invalid("non-finite loss or gradient"));
        }
        record(&mut steps, &mut best, &mut stall, candidate, l);

        if config.random_restarts && stall >= config.restart_patience {
            candidate = Fixation::new(rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
            restarts_taken += 1;
            stall = 0;
            // Immediate re-evaluation of the restart sample; an extra record
            // outside the step budget, and its gradient drives the next
            // update.
            let (l, g) = eval.evaluate(predictor, &candidate)?;
            if !l.is_finite() || !g[0].is_finite() || !g[1].is_finite() {
                return Err(Error::invalid("non-finite loss or gradient"));
            }
            record(&mut steps, &mut best, &mut stall, candidate, l);
            grad = g;
        }

        // The descent update may leave [0,1]² transiently; the clamp
        // restores the invariant before the next evaluation.
        candidate = Fixation::new(
            candidate.x - config.step_size * grad[0],
            candidate.y - config.step_size * grad[1],
        )
        .clamped();
    }

    let (mut fix, best_loss) = best.expect("at least one evaluation");
    fix.loss_at_convergence = best_loss;
    Ok((
        fix,
        OptimizationTrace {
            steps,
            restarts_taken,
            converged_fixation: fix,
            wall_clock_s: started.elapsed().as_secs_f64(),
        },
    ))
}

/// Generates the full scanpath: N rounds of fixation optimization, each
/// against the state accumulated so far (history blobs plus the live
/// candidate blob). The first round starts at the grid center, later rounds
/// at the previously accepted fixation. Partial scanpaths are never
/// returned.
pub fn generate_scanpath<R: Rng>(
    image: &Image,
    target: usize,
    predictor: &mut dyn Predictor,
    config: &FovexConfig,
    rng: &mut R,
) -> Result<ScanpathResult> {
    config.validate()?;
    let desc = predictor.descriptor();
    if target >= desc.num_classes {
        return Err(Error::invalid(format!(
            "target class {target} out of range for {} classes",
            desc.num_classes
        )));
    }
    if image.height() != desc.input_height
        || image.width() != desc.input_width
        || image.channels() != desc.input_channels
    {
        return Err(Error::invalid("image does not match predictor input shape"));
    }

    let kernel = make_gaussian_kernel(config.sigma_blur, config.blur_filter_size)?;
    let blurred = blur(image, &kernel);

    let mut state: Option<FoveationState> = None;
    let mut fixations = Vec::with_capacity(config.scanpath_length);
    let mut loss_gains = Vec::with_capacity(config.scanpath_length);
    let mut traces = Vec::with_capacity(config.scanpath_length);
    let mut init = Fixation::new(0.5, 0.5);

    for _ in 0..config.scanpath_length {
        let (accepted, trace) = optimize_fixation(
            image,
            &blurred,
            state.as_ref(),
            init,
            target,
            predictor,
            config,
            rng,
        )?;
        let first_loss = trace.steps.first().expect("non-empty trace").loss;
        loss_gains.push((first_loss - accepted.loss_at_convergence).max(0.0));
        state = Some(accumulate_state(
            state.as_ref(),
            image,
            &blurred,
            &accepted,
            config,
        )?);
        init = Fixation::new(accepted.x, accepted.y);
        fixations.push(accepted);
        traces.push(trace);
    }

    Ok(ScanpathResult {
        scanpath: Scanpath { fixations, loss_gains },
        state: state.expect("scanpath_length >= 1"),
        traces,
    })
}

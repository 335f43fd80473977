//! Shared flag groups: the FovexConfig override set, predictor endpoint
//! selection, and seed resolution. Every flag maps to exactly one config
//! field or command option.

use std::path::PathBuf;

use fovex::foveation::FovexConfig;
use fovex::predictor::BuiltinOptions;
use fovex::{Error, Result};

use crate::manifest::InputSize;

/// Configuration flags. `--config` loads a complete config JSON (the
/// snapshot embedded in any run record reproduces its run); individual
/// flags override single fields on top of it.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Complete config JSON file to start from.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Peripheral blur sigma in pixels.
    #[arg(long, value_name = "PIXELS")]
    pub sigma_blur: Option<f64>,
    /// Odd tap count of the blur kernel.
    #[arg(long, value_name = "TAPS")]
    pub blur_filter_size: Option<usize>,
    /// Fovea sigma in pixels (default: resolution-dependent).
    #[arg(long, value_name = "PIXELS")]
    pub sigma_fovea: Option<f64>,
    /// Forgetting factor in [0, 1].
    #[arg(long, value_name = "BETA")]
    pub beta: Option<f64>,
    /// Gradient step size.
    #[arg(long, value_name = "LAMBDA")]
    pub lr: Option<f64>,
    /// Descent steps per fixation.
    #[arg(long, value_name = "STEPS")]
    pub opt_steps: Option<usize>,
    /// Re-seed the candidate when progress stalls (true/false).
    #[arg(long, value_name = "BOOL")]
    pub random_restarts: Option<bool>,
    /// Stalled steps before a restart.
    #[arg(long, value_name = "STEPS")]
    pub restart_patience: Option<usize>,
    /// Fixations per scanpath.
    #[arg(long, value_name = "N")]
    pub scanpath_length: Option<usize>,
    /// uniform | loss-gain
    #[arg(long, value_name = "MODE")]
    pub alpha_mode: Option<String>,
    /// analytic | finite-difference
    #[arg(long, value_name = "MODE")]
    pub grad_mode: Option<String>,
    /// Finite-difference probe step in normalized units.
    #[arg(long, value_name = "STEP")]
    pub fd_step: Option<f64>,
}

impl ConfigArgs {
    pub fn build(&self, seed: u64) -> Result<FovexConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::invalid(format!("cannot read config {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    Error::invalid(format!("config {} is not valid: {e}", path.display()))
                })?
            }
            None => FovexConfig::default(),
        };
        if let Some(v) = self.sigma_blur {
            config.sigma_blur = v;
        }
        if let Some(v) = self.blur_filter_size {
            config.blur_filter_size = v;
        }
        if let Some(v) = self.sigma_fovea {
            config.sigma_fovea = Some(v);
        }
        if let Some(v) = self.beta {
            config.forgetting = v;
        }
        if let Some(v) = self.lr {
            config.step_size = v;
        }
        if let Some(v) = self.opt_steps {
            config.optimization_steps = v;
        }
        if let Some(v) = self.random_restarts {
            config.random_restarts = v;
        }
        if let Some(v) = self.restart_patience {
            config.restart_patience = v;
        }
        if let Some(v) = self.scanpath_length {
            config.scanpath_length = v;
        }
        if let Some(v) = &self.alpha_mode {
            config.alpha_mode = v.parse()?;
        }
        if let Some(v) = &self.grad_mode {
            config.gradient_mode = v.parse()?;
        }
        if let Some(v) = self.fd_step {
            config.fd_step = Some(v);
        }
        config.seed = seed;
        config.validate()?;
        Ok(config)
    }
}

/// Predictor endpoint flags. The shape options only matter for `builtin:`
/// endpoints; external ones declare their own shape in the handshake.
#[derive(clap::Args, Debug, Clone)]
pub struct PredictorArgs {
    /// builtin:<name> | exec:<command> | tcp:<host:port>
    #[arg(long, default_value = "builtin:planted", value_name = "SPEC")]
    pub predictor: String,
    /// Class count a builtin predictor serves.
    #[arg(long, default_value_t = 2, value_name = "K")]
    pub classes: usize,
    /// Builtin input height; defaults to the manifest's declared size.
    #[arg(long, value_name = "PIXELS")]
    pub input_height: Option<usize>,
    /// Builtin input width; defaults to the manifest's declared size.
    #[arg(long, value_name = "PIXELS")]
    pub input_width: Option<usize>,
    /// Builtin input channels; defaults to the manifest's declared count.
    #[arg(long, value_name = "C")]
    pub input_channels: Option<usize>,
    /// Seed for builtin predictor weights (independent of --seed).
    #[arg(long, default_value_t = 0, value_name = "SEED")]
    pub predictor_seed: u64,
}

impl PredictorArgs {
    pub fn builtin_options(&self, declared: InputSize) -> BuiltinOptions {
        BuiltinOptions {
            num_classes: self.classes,
            input_height: self.input_height.unwrap_or(declared.height),
            input_width: self.input_width.unwrap_or(declared.width),
            input_channels: self.input_channels.unwrap_or(declared.channels),
            seed: self.predictor_seed,
        }
    }
}

/// Seed precedence: `--seed`, then the FOVEX_SEED environment variable,
/// then 0.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("FOVEX_SEED") {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("FOVEX_SEED {text:?} is not a u64"))),
        Err(_) => Ok(0),
    }
}

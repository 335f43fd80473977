//! Foveated-vision explanation engine for image classifiers.
//!
//! The pipeline simulates a human scanpath over an input image: each fixation
//! is placed by gradient descent on the classifier's loss computed over a
//! foveated rendering (sharp around past fixations, blurred elsewhere), and
//! the resulting fixation sequence is rendered into a normalized attribution
//! map. A metrics module scores maps for faithfulness, localization, and
//! agreement with recorded human gaze.

pub mod attribution;
pub mod error;
pub mod foveation;
pub mod imaging;
pub mod metrics;
pub mod optimizer;
pub mod predictor;

pub use error::{Error, Result};

//! Core numerics for comparing transformer attention with human gaze:
//! tensor interchange, fixation density maps, attention rollout, saliency
//! metrics, COCO mask analytics, bias analyses and parity statistics.

pub mod bias;
pub mod error;
pub mod fixation;
pub mod masks;
pub mod metrics;
pub mod rollout;
pub mod scalar;
pub mod stats;
pub mod tensor_io;

pub use error::{Error, Result};
pub use scalar::Real;
pub use tensor_io::{AttentionStack, Grid2D};

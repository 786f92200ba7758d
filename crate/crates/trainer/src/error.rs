use thiserror::Error;

use crate::train::EvalRecord;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Core(#[from] gaze_align_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("need at least {needed} items, got {found}")]
    TooFewItems { needed: usize, found: usize },
    #[error("batch size {batch} exceeds the {train} training items")]
    BatchTooLarge { batch: usize, train: usize },
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("loss became non-finite at step {step}")]
    Diverged { step: usize, history: Vec<EvalRecord> },
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

//! Desk-scale fine-tuning of a tiny vision transformer so that its attention
//! rollout matches target densities, with only the attention projections
//! trainable.

pub mod data;
pub mod error;
pub mod loss;
pub mod model;
pub mod optim;
pub mod tape;
pub mod train;

pub use error::{Result, TrainError};
pub use loss::{composite_loss, LossConfig, LossTerms};
pub use model::{forward, forward_f64, ParamKind, ParamSet, ParamTensor, TinyViTConfig};
pub use optim::{AdamW, AdamWConfig};
pub use tape::{Tape, Var};
pub use train::{
    evaluate, loss_and_gradients, train, ControlMode, EvalRecord, EvalSummary, Sample, TrainConfig, TrainOutcome,
};

//! Composite objective: class-token distillation plus λ · KL between the
//! rollout map and the target density.

use serde::{Deserialize, Serialize};

use gaze_align_core::fixation::{to_probability, PROBABILITY_EPSILON};
use gaze_align_core::metrics::KlDirection;
use gaze_align_core::rollout::{rollout_values, NormaliseOrder, RolloutOptions};
use gaze_align_core::scalar::{kl_divergence, probability_normalise};
use gaze_align_core::{Grid2D, Real};

use crate::error::{Result, TrainError};
use crate::model::{forward, ForwardOutput, TinyViTConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub epsilon: f64,
    pub kl_direction: KlDirection,
    pub order: NormaliseOrder,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            epsilon: PROBABILITY_EPSILON,
            kl_direction: KlDirection::ModelToHuman,
            order: NormaliseOrder::AfterUpsample,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossTerms<T> {
    pub total: T,
    pub distill: T,
    pub kl: T,
}

impl<T: Real> LossTerms<T> {
    pub fn values(&self) -> LossTerms<f64> {
        LossTerms { total: self.total.value(), distill: self.distill.value(), kl: self.kl.value() }
    }
}

/// Target density in probability form at the model's image resolution.
pub fn target_probability(config: &TinyViTConfig, target: &Grid2D, epsilon: f64) -> Result<Vec<f64>> {
    if target.dims() != (config.image_size, config.image_size) {
        return Err(TrainError::Shape(format!(
            "target is {:?}, rollout resolution is {}x{}",
            target.dims(),
            config.image_size,
            config.image_size
        )));
    }
    Ok(to_probability(target, epsilon)?.grid.into_values())
}

/// Min-max rollout map at image resolution, from recorded attention.
pub fn rollout_map<T: Real>(config: &TinyViTConfig, attention: &[T], order: NormaliseOrder) -> Result<Vec<T>> {
    let opts = RolloutOptions { target: (config.image_size, config.image_size), order };
    Ok(rollout_values(attention, config.layers, config.heads, config.tokens(), opts)?.upsampled)
}

/// Loss terms given a completed forward pass.
pub fn loss_from_forward<T: Real>(
    config: &TinyViTConfig,
    out: &ForwardOutput<T>,
    teacher_cls: &[f64],
    target_prob: &[f64],
    loss: &LossConfig,
) -> Result<LossTerms<T>> {
    if loss.lambda < 0.0 || !loss.lambda.is_finite() {
        return Err(TrainError::Config(format!("lambda must be finite and ≥ 0, got {}", loss.lambda)));
    }
    if teacher_cls.len() != out.cls.len() {
        return Err(TrainError::Shape(format!("teacher hidden {} vs student {}", teacher_cls.len(), out.cls.len())));
    }
    let residual: Vec<T> = out.cls.iter().zip(teacher_cls).map(|(&s, &t)| s - t).collect();
    let distill = T::dot(&residual, &residual) / residual.len() as f64;

    let map = rollout_map(config, &out.attention, loss.order)?;
    let p_model = probability_normalise(&map, loss.epsilon);
    let p_target: Vec<T> = target_prob.iter().map(|&v| T::constant(v)).collect();
    if p_model.len() != p_target.len() {
        return Err(TrainError::Shape(format!("rollout {} vs target {}", p_model.len(), p_target.len())));
    }
    let kl = match loss.kl_direction {
        KlDirection::ModelToHuman => kl_divergence(&p_model, &p_target),
        KlDirection::HumanToModel => kl_divergence(&p_target, &p_model),
    };
    let total = distill + kl * loss.lambda;
    if !total.value().is_finite() {
        return Err(TrainError::NonFiniteLoss);
    }
    Ok(LossTerms { total, distill, kl })
}

/// `L = MSE(student class hidden, teacher class hidden) + λ · KL`.
pub fn composite_loss<T: Real, P: AsRef<[T]>>(
    config: &TinyViTConfig,
    student: &[P],
    teacher_cls: &[f64],
    image: &[f64],
    target_prob: &[f64],
    loss: &LossConfig,
) -> Result<LossTerms<T>> {
    let out = forward(config, student, image)?;
    loss_from_forward(config, &out, teacher_cls, target_prob, loss)
}

//! AdamW with decoupled weight decay, applied before the moment update.

use serde::{Deserialize, Serialize};

use crate::model::{ParamKind, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-5, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 0.01 }
    }
}

/// One AdamW update of a single tensor. `step` counts from 1.
pub fn adamw_update(
    cfg: &AdamWConfig,
    step: u64,
    decay: bool,
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
) {
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..param.len() {
        if decay {
            param[i] -= cfg.learning_rate * cfg.weight_decay * param[i];
        }
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// Optimizer state over the trainable tensors of a [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    /// Tensor indices, in the order of `first` and `second`.
    pub indices: Vec<usize>,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamSet) -> Self {
        let indices = params.trainable_indices();
        let zeros: Vec<Vec<f64>> = indices.iter().map(|&i| vec![0.0; params.tensors[i].data.len()]).collect();
        Self { config, step: 0, indices, first: zeros.clone(), second: zeros }
    }

    /// `grads[k]` belongs to tensor `self.indices[k]`. Weight decay applies
    /// to attention weights only, never to biases.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>]) {
        debug_assert_eq!(grads.len(), self.indices.len());
        self.step += 1;
        for (k, &idx) in self.indices.iter().enumerate() {
            let tensor = &mut params.tensors[idx];
            let decay = tensor.kind == ParamKind::AttentionWeight;
            adamw_update(
                &self.config,
                self.step,
                decay,
                &mut tensor.data,
                &grads[k],
                &mut self.first[k],
                &mut self.second[k],
            );
        }
    }
}

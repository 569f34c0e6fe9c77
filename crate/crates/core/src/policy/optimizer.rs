//! Adaptive-moment optimizer with a cosine-decayed learning rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PolicyGrads, PolicyParams, PolicyShape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    /// Steps over which the rate decays to zero.
    pub total_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn new(learning_rate: f64, total_steps: u64) -> Self {
        OptimizerConfig {
            learning_rate,
            total_steps,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Cosine decay from the base rate at step 0 to zero at `total_steps`.
pub fn cosine_lr(config: &OptimizerConfig, step: u64) -> f64 {
    if config.total_steps == 0 {
        return config.learning_rate;
    }
    let progress = (step.min(config.total_steps) as f64) / config.total_steps as f64;
    config.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    shape: PolicyShape,
}

impl OptimizerState {
    pub fn new(shape: PolicyShape, config: OptimizerConfig) -> Self {
        let n = shape.parameter_count();
        OptimizerState {
            config,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
            shape,
        }
    }

    /// Rate the next step will use.
    pub fn current_lr(&self) -> f64 {
        cosine_lr(&self.config, self.step)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OptimizerError {
    #[error("gradient shape differs from parameter shape")]
    ShapeMismatch,
}

/// One adaptive-moment update. Zero gradients leave the parameters unchanged
/// (only the schedule state advances).
pub fn optimize_step(
    params: &mut PolicyParams,
    grads: &PolicyGrads,
    state: &mut OptimizerState,
) -> Result<(), OptimizerError> {
    if params.shape != grads.shape || params.shape != state.shape {
        return Err(OptimizerError::ShapeMismatch);
    }
    let lr = cosine_lr(&state.config, state.step);
    let t = (state.step + 1) as i32;
    let (b1, b2, eps) = (state.config.beta1, state.config.beta2, state.config.eps);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);

    let mut offset = 0usize;
    let grad_tensors = grads.tensors();
    for (tensor_idx, tensor) in params.tensors_mut().into_iter().enumerate() {
        let g_tensor = grad_tensors[tensor_idx];
        for (i, p) in tensor.iter_mut().enumerate() {
            let g = g_tensor[i];
            let slot = offset + i;
            state.m[slot] = b1 * state.m[slot] + (1.0 - b1) * g;
            state.v[slot] = b2 * state.v[slot] + (1.0 - b2) * g * g;
            let m_hat = state.m[slot] / bias1;
            let v_hat = state.v[slot] / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        offset += g_tensor.len();
    }
    state.step += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyParams;

    fn shape() -> PolicyShape {
        PolicyShape {
            vocab: 3,
            dim: 2,
            hidden: 2,
            window: 2,
        }
    }

    #[test]
    fn schedule_starts_at_base_rate_and_decays_to_zero() {
        let config = OptimizerConfig::new(1e-3, 100);
        assert_eq!(cosine_lr(&config, 0), 1e-3);
        assert!(cosine_lr(&config, 100).abs() < 1e-18);
        assert!(cosine_lr(&config, 50) < 1e-3);
        assert!(cosine_lr(&config, 150).abs() < 1e-18); // clamped past the end
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut params = PolicyParams::init(shape(), 1);
        let before = params.clone();
        let grads = PolicyGrads::zeros(shape());
        let mut state = OptimizerState::new(shape(), OptimizerConfig::new(1e-2, 10));
        optimize_step(&mut params, &grads, &mut state).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn quadratic_toy_problem_converges() {
        // Minimize f(x) = x^2 by driving a single parameter with df/dx = 2x.
        // Abuse the first embedding entry as the lone variable.
        let mut params = PolicyParams::init(shape(), 2);
        params.embed[0] = 3.0;
        let mut state = OptimizerState::new(shape(), OptimizerConfig::new(0.05, 1_000));
        for _ in 0..800 {
            let mut grads = PolicyGrads::zeros(shape());
            grads.embed[0] = 2.0 * params.embed[0];
            optimize_step(&mut params, &grads, &mut state).unwrap();
        }
        assert!(params.embed[0].abs() < 0.05, "x = {}", params.embed[0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = PolicyParams::init(shape(), 3);
        let other = PolicyShape {
            vocab: 4,
            ..shape()
        };
        let grads = PolicyGrads::zeros(other);
        let mut state = OptimizerState::new(shape(), OptimizerConfig::new(1e-2, 10));
        assert_eq!(
            optimize_step(&mut params, &grads, &mut state),
            Err(OptimizerError::ShapeMismatch)
        );
    }
}

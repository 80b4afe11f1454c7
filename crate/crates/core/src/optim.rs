//! Adam with bias correction.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer state. Moments are allocated lazily on the first step and are
/// positionally matched to the parameter list passed to [`Adam::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), TensorError> {
        if params.len() != grads.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                detail: alloc::format!("{} params, {} grads", params.len(), grads.len()),
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    detail: alloc::format!("param {:?} vs grad {:?}", p.shape(), g.shape()),
                });
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = params.iter().map(|p| vec![0.0; p.len()]).collect();
        } else if self.first.len() != params.len()
            || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
        {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                detail: "parameter list changed between steps".into(),
            });
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let bc1 = 1.0 - math::powi(beta1, t);
        let bc2 = 1.0 - math::powi(beta2, t);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (math::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::row(vec![1.0, -2.0, 3.5]);
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..10 {
            adam.step(&mut [&mut p], &[Tensor::zeros(1, 3)]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(adam.steps(), 10);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        // With constant g the bias-corrected moments are exactly g and g^2, so
        // each step moves by lr * |g| / (|g| + eps).
        let lr = 1e-3;
        let g = 0.37;
        let expected = lr * g / (g + 1e-8);
        let mut p = Tensor::scalar(0.0);
        let mut adam = Adam::new(AdamConfig::with_lr(lr));
        let mut last = 0.0;
        for _ in 0..1000 {
            let before = p.data()[0];
            adam.step(&mut [&mut p], &[Tensor::scalar(g)]).unwrap();
            last = before - p.data()[0];
        }
        assert!((last - expected).abs() / expected < 0.01, "step {last} vs {expected}");
        assert!((last - lr).abs() / lr < 0.01);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::zeros(2, 2);
        let mut adam = Adam::new(AdamConfig::default());
        let err = adam.step(&mut [&mut p], &[Tensor::zeros(1, 3)]).unwrap_err();
        assert!(matches!(err, TensorError::ShapeMismatch { .. }));
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut p = Tensor::row(vec![0.5, -0.25]);
            let mut adam = Adam::new(AdamConfig::with_lr(0.01));
            let mut traj = Vec::new();
            for k in 0..50 {
                let x = k as f64;
                let g = Tensor::row(vec![p.data()[0] - x.sin(), p.data()[1] * 2.0]);
                adam.step(&mut [&mut p], &[g]).unwrap();
                traj.push(p.clone());
            }
            traj
        };
        assert_eq!(run(), run());
    }
}

//! Adaptive-moment (Adam) first-order optimizer over a list of parameter tensors.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for each tensor, allocated on the first step.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. `params[i]` and `grads[i]` must have equal
    /// lengths, and the tensor layout must not change between calls.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        check_len("OptimizerState::step tensor count", params.len(), grads.len())?;
        for (p, g) in params.iter().zip(grads) {
            check_len("OptimizerState::step tensor", p.len(), g.len())?;
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        } else {
            check_len("OptimizerState::step accumulators", self.first.len(), params.len())?;
            for (m, p) in self.first.iter().zip(params.iter()) {
                check_len("OptimizerState::step accumulator", m.len(), p.len())?;
            }
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("optimizer gradient"));
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as f64;
        let bias1 = 1.0 - libm::pow(beta1, t);
        let bias2 = 1.0 - libm::pow(beta2, t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut opt = OptimizerState::new(AdamConfig::default());
        let mut w = [1.0, -2.0];
        for _ in 0..5 {
            opt.step(&mut [&mut w[..]], &[&[0.0, 0.0]]).unwrap();
        }
        assert_eq!(w, [1.0, -2.0]);
        assert_eq!(opt.steps_taken(), 5);
    }

    #[test]
    fn one_step_descends_on_square() {
        let mut opt = OptimizerState::new(AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        });
        let mut w = [1.0];
        let g = [2.0 * w[0]];
        opt.step(&mut [&mut w[..]], &[&g]).unwrap();
        assert!(w[0] < 1.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut opt = OptimizerState::new(AdamConfig::default());
        let mut w = [1.0, 2.0];
        assert!(opt.step(&mut [&mut w[..]], &[&[1.0]]).is_err());
        opt.step(&mut [&mut w[..]], &[&[1.0, 1.0]]).unwrap();
        let mut w3 = [0.0; 3];
        assert!(opt.step(&mut [&mut w3[..]], &[&[1.0, 1.0, 1.0]]).is_err());
    }

    #[test]
    fn converges_on_convex_quadratic() {
        // f(w) = (w0 - 1)^2 + 10 (w1 + 2)^2, minimum 0 at (1, -2).
        let f = |w: &[f64; 2]| (w[0] - 1.0).powi(2) + 10.0 * (w[1] + 2.0).powi(2);
        let mut opt = OptimizerState::new(AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        });
        let mut w = [0.0, 0.0];
        let start = f(&w);
        for _ in 0..2000 {
            let g = [2.0 * (w[0] - 1.0), 20.0 * (w[1] + 2.0)];
            opt.step(&mut [&mut w[..]], &[&g]).unwrap();
        }
        assert!(f(&w) < 1e-6 * start);
    }
}

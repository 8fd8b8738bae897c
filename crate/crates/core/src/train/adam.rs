use serde::{Deserialize, Serialize};

use crate::math::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: Real,
    pub beta2: Real,
    /// Epsilon for Gaussian attributes.
    pub eps_gaussian: Real,
    /// Epsilon for offset parameters.
    pub eps_network: Real,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps_gaussian: 1e-15,
            eps_network: 1e-8,
        }
    }
}

/// First and second moments for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<Real>,
    pub v: Vec<Real>,
}

impl AdamMoments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected update at 1-based `step`; `lr(k)` gives the rate of element `k`.
    pub fn update(
        &mut self,
        params: &mut [Real],
        grads: &[Real],
        step: u64,
        lr: impl Fn(usize) -> Real,
        eps: Real,
        cfg: &AdamConfig,
    ) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grads.len(), self.m.len());
        let t = step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g;
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] -= lr(k) * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut m = AdamMoments::zeros(3);
        let mut p = vec![1.0, 1.0, 1.0];
        m.update(&mut p, &[0.5, -2.0, 0.0], 1, |_| 0.1, 1e-15, &AdamConfig::default());
        assert!((p[0] - 0.9).abs() < 1e-12);
        assert!((p[1] - 1.1).abs() < 1e-12);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut m = AdamMoments::zeros(1);
        let mut p = vec![3.0];
        for step in 1..=2000 {
            let g = [2.0 * (p[0] - 1.0)];
            m.update(&mut p, &g, step, |_| 0.01, 1e-8, &AdamConfig::default());
        }
        assert!((p[0] - 1.0).abs() < 1e-3);
    }
}

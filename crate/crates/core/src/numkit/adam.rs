use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Outcome of one [`AdamState::step`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// Gradient contained NaN/inf; parameters and moments left untouched.
    SkippedNonFinite,
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<StepOutcome> {
        check_dim("adam parameters", self.m.len(), params.len())?;
        check_dim("adam gradients", self.m.len(), grads.len())?;
        if grads.iter().any(|g| !g.is_finite()) {
            return Ok(StepOutcome::SkippedNonFinite);
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(StepOutcome::Applied)
    }
}

/// Rescale `grads` in place so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm.is_finite() && norm > max_norm && max_norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_state_is_zero() {
        let s = AdamState::new(3, AdamConfig::default());
        assert_eq!(s.steps(), 0);
        assert!(s.first_moment().iter().chain(s.second_moment()).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(2, AdamConfig::default());
        let mut p = vec![1.5, -2.0];
        s.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn first_step_magnitude() {
        // m_hat = 1, v_hat = 1 -> dp = -lr / (1 + eps)
        let mut s = AdamState::new(1, AdamConfig::default());
        let mut p = vec![0.0];
        s.step(&mut p, &[1.0]).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-18);
        assert!((p[0] + 9.99999e-4).abs() < 1e-9);
    }

    #[test]
    fn constant_gradient_steps_shrink() {
        // Hand-iterated: step 1 m_hat = v_hat = g exactly (|dp| = lr/(1+eps)).
        // Step 2: m = 0.19, v = 0.001999, m_hat = 1, v_hat = 1 again, so |dp|
        // equals lr/(1+eps) up to rounding; with eps the second step can only
        // be equal or smaller in magnitude.
        let mut s = AdamState::new(1, AdamConfig::default());
        let mut p = vec![0.0];
        s.step(&mut p, &[1.0]).unwrap();
        let d1 = p[0].abs();
        let before = p[0];
        s.step(&mut p, &[1.0]).unwrap();
        let d2 = (p[0] - before).abs();
        assert!(d2 <= d1 + 1e-18, "{d1} {d2}");
        assert_eq!(s.steps(), 2);
    }

    #[test]
    fn non_finite_gradient_skipped() {
        let mut s = AdamState::new(2, AdamConfig::default());
        let mut p = vec![1.0, 1.0];
        let out = s.step(&mut p, &[f64::NAN, 1.0]).unwrap();
        assert_eq!(out, StepOutcome::SkippedNonFinite);
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(s.steps(), 0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut s = AdamState::new(2, AdamConfig::default());
        let mut p = vec![1.0];
        assert!(s.step(&mut p, &[1.0]).is_err());
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![3.0, 4.0];
        let n = clip_grad_norm(&mut g, 1.0);
        assert_eq!(n, 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut small = vec![0.1, 0.1];
        clip_grad_norm(&mut small, 10.0);
        assert_eq!(small, vec![0.1, 0.1]);
    }
}

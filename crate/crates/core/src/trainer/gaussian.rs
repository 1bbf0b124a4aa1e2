//! Diagonal-Gaussian latent policy: the tractable-likelihood reference.

use std::f64::consts::PI;

use crate::error::{check_dim, check_finite, FpoError, Result};
use crate::numkit::{Activation, Mlp, Rng, Trace};

/// `x ~ N(mu(s), diag(exp(log_std))^2)` with a state-independent std.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianActor {
    mean: Mlp,
    log_std: Vec<f64>,
}

impl GaussianActor {
    pub fn new(state_dim: usize, latent_dim: usize, hidden: &[usize], init_std: f64, rng: &mut Rng) -> Result<Self> {
        if !(init_std > 0.0) {
            return Err(FpoError::invalid("gppo_init_std", init_std, "(0, inf)"));
        }
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(latent_dim);
        Ok(Self {
            mean: Mlp::new(&sizes, Activation::Tanh, rng)?,
            log_std: vec![init_std.ln(); latent_dim],
        })
    }

    pub fn from_parts(mean: Mlp, log_std: Vec<f64>) -> Result<Self> {
        check_dim("gaussian log_std", mean.output_dim(), log_std.len())?;
        check_finite("gaussian log_std", &log_std)?;
        Ok(Self { mean, log_std })
    }

    pub fn mean_net(&self) -> &Mlp {
        &self.mean
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn state_dim(&self) -> usize {
        self.mean.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.log_std.len()
    }

    /// Mean-network parameters followed by `log_std`.
    pub fn num_params(&self) -> usize {
        self.mean.num_params() + self.log_std.len()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.mean.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        check_dim("gaussian params", self.num_params(), p.len())?;
        let n = self.mean.num_params();
        self.mean.params_mut().copy_from_slice(&p[..n]);
        self.log_std.copy_from_slice(&p[n..]);
        Ok(())
    }

    pub fn mean(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.mean.forward(s)
    }

    pub fn sample(&self, s: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let mut x = self.mean(s)?;
        for (xi, ls) in x.iter_mut().zip(&self.log_std) {
            *xi += ls.exp() * rng.normal();
        }
        Ok(x)
    }

    pub fn log_prob(&self, s: &[f64], x: &[f64]) -> Result<f64> {
        check_dim("gaussian latent", self.latent_dim(), x.len())?;
        let mu = self.mean(s)?;
        Ok(log_density(&mu, &self.log_std, x))
    }

    /// Returns `log p(x|s)` and accumulates `weight * d log p / d params`.
    pub fn log_prob_grad(&self, s: &[f64], x: &[f64], weight: f64, grad: &mut [f64]) -> Result<f64> {
        check_dim("gaussian latent", self.latent_dim(), x.len())?;
        check_dim("gaussian gradient buffer", self.num_params(), grad.len())?;
        let mut trace = Trace::default();
        check_dim("gaussian state", self.state_dim(), s.len())?;
        self.mean.forward_trace(s, &mut trace);
        let mu = trace.output().to_vec();
        let lp = log_density(&mu, &self.log_std, x);
        let n = self.mean.num_params();
        let mut upstream = vec![0.0; mu.len()];
        for j in 0..mu.len() {
            let var = (2.0 * self.log_std[j]).exp();
            let d = x[j] - mu[j];
            upstream[j] = weight * d / var;
            grad[n + j] += weight * (d * d / var - 1.0);
        }
        self.mean.backward_trace(&trace, &upstream, &mut grad[..n], None);
        Ok(lp)
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
    }
}

fn log_density(mu: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    mu.iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, ls), xi)| {
            let z = (xi - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

//! Conditional flow-matching actor.
//!
//! The actor is a velocity field `v(x, tau | s)` over the latent space.
//! Sampling integrates `dx/du = v(x, u | s)` from Gaussian noise at `u = 0`
//! to `u = 1` with forward Euler. The per-sample loss that stands in for a
//! log-likelihood is the straight-line conditional flow-matching loss
//! evaluated on a fixed set of Monte-Carlo draws `(x0, tau)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, FpoError, Result};
use crate::numkit::{Activation, Mlp, Rng, Trace};

/// Range the CFM flow time is drawn from. The endpoints are excluded so the
/// interpolant never collapses onto `x0` or `x1`.
pub const TAU_RANGE: (f64, f64) = (0.02, 0.98);

/// One frozen Monte-Carlo draw of the CFM loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfmSample {
    x0: Vec<f64>,
    tau: f64,
}

impl CfmSample {
    pub fn new(x0: Vec<f64>, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(FpoError::invalid("tau", tau, "[0, 1]"));
        }
        check_finite("cfm draw x0", &x0)?;
        Ok(Self { x0, tau })
    }

    pub fn draw(latent_dim: usize, rng: &mut Rng) -> Self {
        let x0 = rng.normal_vec(latent_dim);
        let tau = rng.uniform(TAU_RANGE.0, TAU_RANGE.1);
        Self { x0, tau }
    }

    pub fn draw_many(count: usize, latent_dim: usize, rng: &mut Rng) -> Vec<Self> {
        (0..count).map(|_| Self::draw(latent_dim, rng)).collect()
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Multi-step latent exploration applied after sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    /// Number of Euler perturbation steps `K`.
    pub steps: usize,
    /// Step size `eta`.
    pub eta: f64,
    /// Std of the Gaussian noise added per step.
    pub noise: f64,
    /// Flow time at which the velocity field is queried during exploration.
    pub flow_time: f64,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            steps: 4,
            eta: 0.05,
            noise: 0.05,
            flow_time: 1.0,
        }
    }
}

impl ExploreConfig {
    /// Exploration disabled: evaluation rollouts measure the policy itself.
    pub fn off() -> Self {
        Self {
            steps: 0,
            noise: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(FpoError::invalid("eta", self.eta, "(0, inf)"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(FpoError::invalid("explore_noise", self.noise, "[0, inf)"));
        }
        if !(0.0..=1.0).contains(&self.flow_time) {
            return Err(FpoError::invalid("explore_flow_time", self.flow_time, "[0, 1]"));
        }
        Ok(())
    }
}

/// One element of an actor update: a stored `(s, x)` pair, its frozen draws
/// and the scalar `dL/d loss_cfm` supplied by the ratio engine.
#[derive(Debug, Clone, Copy)]
pub struct WeightedSample<'a> {
    pub state: &'a [f64],
    pub latent: &'a [f64],
    pub draws: &'a [CfmSample],
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowActor {
    net: Mlp,
    state_dim: usize,
    latent_dim: usize,
    flow_steps: usize,
    pub explore: ExploreConfig,
}

impl FlowActor {
    pub fn new(
        state_dim: usize,
        latent_dim: usize,
        hidden: &[usize],
        flow_steps: usize,
        explore: ExploreConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim + latent_dim + 1];
        sizes.extend_from_slice(hidden);
        sizes.push(latent_dim);
        let net = Mlp::new(&sizes, Activation::Tanh, rng)?;
        Self::from_net(net, state_dim, latent_dim, flow_steps, explore)
    }

    pub fn from_net(
        net: Mlp,
        state_dim: usize,
        latent_dim: usize,
        flow_steps: usize,
        explore: ExploreConfig,
    ) -> Result<Self> {
        check_dim("velocity net input", state_dim + latent_dim + 1, net.input_dim())?;
        check_dim("velocity net output", latent_dim, net.output_dim())?;
        if flow_steps == 0 {
            return Err(FpoError::invalid("flow_steps", 0, ">= 1"));
        }
        explore.validate()?;
        Ok(Self {
            net,
            state_dim,
            latent_dim,
            flow_steps,
            explore,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn params(&self) -> &[f64] {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn flow_steps(&self) -> usize {
        self.flow_steps
    }

    fn net_input(&self, s: &[f64], x: &[f64], tau: f64, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend_from_slice(s);
        buf.extend_from_slice(x);
        buf.push(tau.clamp(0.0, 1.0));
    }

    fn check_state(&self, s: &[f64]) -> Result<()> {
        check_dim("actor state", self.state_dim, s.len())
    }

    fn check_latent(&self, x: &[f64]) -> Result<()> {
        check_dim("actor latent", self.latent_dim, x.len())
    }

    /// `v(x, tau | s)`.
    pub fn velocity(&self, s: &[f64], x: &[f64], tau: f64) -> Result<Vec<f64>> {
        self.check_state(s)?;
        self.check_latent(x)?;
        let mut input = Vec::with_capacity(self.net.input_dim());
        self.net_input(s, x, tau, &mut input);
        self.net.forward(&input)
    }

    /// Mean over `draws` of `|v(x_tau, tau | s) - (x1 - x0)|^2` with
    /// `x_tau = (1 - tau) x0 + tau x1`.
    pub fn cfm_loss(&self, s: &[f64], x1: &[f64], draws: &[CfmSample]) -> Result<f64> {
        self.cfm_loss_impl(s, x1, draws, None)
    }

    /// Loss as in [`FlowActor::cfm_loss`]; additionally accumulates
    /// `weight * d loss / d params` into `grad`.
    pub fn cfm_loss_grad(
        &self,
        s: &[f64],
        x1: &[f64],
        draws: &[CfmSample],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        check_dim("actor gradient buffer", self.num_params(), grad.len())?;
        self.cfm_loss_impl(s, x1, draws, Some((weight, grad)))
    }

    fn cfm_loss_impl(
        &self,
        s: &[f64],
        x1: &[f64],
        draws: &[CfmSample],
        mut grad: Option<(f64, &mut [f64])>,
    ) -> Result<f64> {
        if draws.is_empty() {
            return Err(FpoError::Empty("cfm draw list"));
        }
        self.check_state(s)?;
        self.check_latent(x1)?;
        let n = draws.len() as f64;
        let mut input = Vec::with_capacity(self.net.input_dim());
        let mut xt = vec![0.0; self.latent_dim];
        let mut resid = vec![0.0; self.latent_dim];
        let mut trace = Trace::default();
        let mut total = 0.0;
        for draw in draws {
            self.check_latent(&draw.x0)?;
            let tau = draw.tau;
            for ((xt, a), b) in xt.iter_mut().zip(&draw.x0).zip(x1) {
                *xt = (1.0 - tau) * a + tau * b;
            }
            self.net_input(s, &xt, tau, &mut input);
            self.net.forward_trace(&input, &mut trace);
            let v = trace.output();
            let mut sq = 0.0;
            for (((r, vi), a), b) in resid.iter_mut().zip(v).zip(&draw.x0).zip(x1) {
                *r = vi - (b - a);
                sq += *r * *r;
            }
            total += sq;
            if let Some((weight, g)) = grad.as_mut() {
                if *weight != 0.0 {
                    let scale = 2.0 * *weight / n;
                    for r in resid.iter_mut() {
                        *r *= scale;
                    }
                    self.net.backward_trace(&trace, &resid, g, None);
                }
            }
        }
        let loss = total / n;
        if !loss.is_finite() {
            return Err(FpoError::NonFinite("cfm loss".into()));
        }
        Ok(loss)
    }

    /// Integrate the flow from a given `x0` with `flow_steps` Euler steps.
    pub fn integrate(&self, s: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
        self.check_state(s)?;
        self.check_latent(x0)?;
        let h = 1.0 / self.flow_steps as f64;
        let mut x = x0.to_vec();
        let mut input = Vec::with_capacity(self.net.input_dim());
        let mut trace = Trace::default();
        for k in 0..self.flow_steps {
            let u = k as f64 * h;
            self.net_input(s, &x, u, &mut input);
            self.net.forward_trace(&input, &mut trace);
            for (xi, vi) in x.iter_mut().zip(trace.output()) {
                *xi += h * vi;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(FpoError::Sampling { step: k });
            }
        }
        Ok(x)
    }

    /// Draw `x0 ~ N(0, I)` and integrate it to `u = 1`. Returns `(x1, x0)`.
    pub fn sample_latent(&self, s: &[f64], rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
        let x0 = rng.normal_vec(self.latent_dim);
        let x1 = self.integrate(s, &x0)?;
        Ok((x1, x0))
    }

    /// `x <- x + eta v(x, tau_k | s) + noise * xi` repeated `K` times using
    /// this actor's exploration settings.
    pub fn explore_steps(&self, x: &[f64], s: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self.explore_steps_with(&self.explore, x, s, rng)
    }

    pub fn explore_steps_with(
        &self,
        cfg: &ExploreConfig,
        x: &[f64],
        s: &[f64],
        rng: &mut Rng,
    ) -> Result<Vec<f64>> {
        self.check_state(s)?;
        self.check_latent(x)?;
        let mut x = x.to_vec();
        let mut input = Vec::with_capacity(self.net.input_dim());
        let mut trace = Trace::default();
        for _ in 0..cfg.steps {
            self.net_input(s, &x, cfg.flow_time, &mut input);
            self.net.forward_trace(&input, &mut trace);
            for (xi, vi) in x.iter_mut().zip(trace.output()) {
                *xi += cfg.eta * vi;
            }
            if cfg.noise > 0.0 {
                for xi in x.iter_mut() {
                    *xi += cfg.noise * rng.normal();
                }
            }
        }
        check_finite("explored latent", &x)?;
        Ok(x)
    }

    /// `sum_i weight_i * d loss_cfm(x_i | s_i) / d params`, on the frozen draws.
    pub fn actor_grad_from_ratio(&self, batch: &[WeightedSample<'_>]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.num_params()];
        for item in batch {
            if item.draws.is_empty() {
                return Err(FpoError::Empty("transition is missing its cached cfm draws"));
            }
            if item.weight == 0.0 {
                continue;
            }
            self.cfm_loss_grad(item.state, item.latent, item.draws, item.weight, &mut grad)?;
        }
        Ok(grad)
    }
}

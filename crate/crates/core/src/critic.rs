//! Q-ensemble over `(state, latent)` with Polyak-averaged targets,
//! conservative TD targets, and GAE.

use crate::error::{check_dim, check_finite, FpoError, Result};
use crate::flow_actor::FlowActor;
use crate::numkit::{Activation, Mlp, Rng, Trace};

/// Anything that can draw an on-policy latent for a state.
pub trait LatentSampler {
    fn sample_policy_latent(&self, s: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;
}

impl LatentSampler for FlowActor {
    fn sample_policy_latent(&self, s: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        Ok(self.sample_latent(s, rng)?.0)
    }
}

/// One regression example for the critics; `target` is a constant.
#[derive(Debug, Clone, Copy)]
pub struct CriticSample<'a> {
    pub state: &'a [f64],
    pub latent: &'a [f64],
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticLoss {
    pub loss: f64,
    /// Gradient of the loss with respect to each online member's parameters.
    pub grads: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueEnsemble {
    online: Vec<Mlp>,
    target: Vec<Mlp>,
    state_dim: usize,
    latent_dim: usize,
    pub gamma: f64,
    pub lambda: f64,
}

impl ValueEnsemble {
    /// `members` critics, each initialized from its own fork of `rng`. Targets
    /// start as exact copies of the online critics.
    pub fn new(
        members: usize,
        state_dim: usize,
        latent_dim: usize,
        hidden: &[usize],
        gamma: f64,
        lambda: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if members == 0 {
            return Err(FpoError::invalid("ensemble_size", 0, ">= 1"));
        }
        let mut sizes = vec![state_dim + latent_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let online = (0..members)
            .map(|_| Mlp::new(&sizes, Activation::Tanh, &mut rng.fork()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(online.clone(), online, state_dim, latent_dim, gamma, lambda)
    }

    pub fn from_parts(
        online: Vec<Mlp>,
        target: Vec<Mlp>,
        state_dim: usize,
        latent_dim: usize,
        gamma: f64,
        lambda: f64,
    ) -> Result<Self> {
        if online.is_empty() {
            return Err(FpoError::invalid("ensemble_size", 0, ">= 1"));
        }
        check_dim("target critic count", online.len(), target.len())?;
        for (o, t) in online.iter().zip(&target) {
            if o.sizes() != t.sizes() {
                return Err(FpoError::Checkpoint("online/target critic shapes differ".into()));
            }
            check_dim("critic input", state_dim + latent_dim, o.input_dim())?;
            check_dim("critic output", 1, o.output_dim())?;
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(FpoError::invalid("gamma", gamma, "(0, 1)"));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(FpoError::invalid("gae_lambda", lambda, "[0, 1]"));
        }
        Ok(Self {
            online,
            target,
            state_dim,
            latent_dim,
            gamma,
            lambda,
        })
    }

    pub fn len(&self) -> usize {
        self.online.len()
    }

    pub fn is_empty(&self) -> bool {
        self.online.is_empty()
    }

    pub fn online(&self) -> &[Mlp] {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut [Mlp] {
        &mut self.online
    }

    pub fn targets(&self) -> &[Mlp] {
        &self.target
    }

    fn input(&self, s: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_dim("critic state", self.state_dim, s.len())?;
        check_dim("critic latent", self.latent_dim, x.len())?;
        let mut v = Vec::with_capacity(s.len() + x.len());
        v.extend_from_slice(s);
        v.extend_from_slice(x);
        Ok(v)
    }

    pub fn q_online(&self, member: usize, s: &[f64], x: &[f64]) -> Result<f64> {
        let input = self.input(s, x)?;
        Ok(self.online[member].forward(&input)?[0])
    }

    pub fn q_target(&self, member: usize, s: &[f64], x: &[f64]) -> Result<f64> {
        let input = self.input(s, x)?;
        Ok(self.target[member].forward(&input)?[0])
    }

    /// `min_i Qbar_i(s, x)`.
    pub fn min_target(&self, s: &[f64], x: &[f64]) -> Result<f64> {
        let input = self.input(s, x)?;
        let mut best = f64::INFINITY;
        for net in &self.target {
            best = best.min(net.forward(&input)?[0]);
        }
        if !best.is_finite() {
            return Err(FpoError::NonFinite("target critic output".into()));
        }
        Ok(best)
    }

    /// TD target for a known next latent: `r + gamma * min_i Qbar_i(s', x')`,
    /// or just `r` when `s'` is terminal.
    pub fn td_target_with_latent(&self, reward: f64, s_next: &[f64], x_next: &[f64], done: bool) -> Result<f64> {
        if done {
            return Ok(reward);
        }
        Ok(reward + self.gamma * self.min_target(s_next, x_next)?)
    }

    /// TD target with `x' ~ pi(.|s')` drawn from `policy` (no exploration).
    pub fn td_target<P: LatentSampler + ?Sized>(
        &self,
        reward: f64,
        s_next: &[f64],
        done: bool,
        policy: &P,
        rng: &mut Rng,
    ) -> Result<f64> {
        if done {
            return Ok(reward);
        }
        let x_next = policy.sample_policy_latent(s_next, rng)?;
        self.td_target_with_latent(reward, s_next, &x_next, false)
    }

    /// Conservative state value `min_i Qbar_i(s, x)`. Uses `latent` when
    /// given, otherwise samples one from `policy`.
    pub fn value_baseline<P: LatentSampler + ?Sized>(
        &self,
        s: &[f64],
        latent: Option<&[f64]>,
        policy: &P,
        rng: &mut Rng,
    ) -> Result<f64> {
        match latent {
            Some(x) => self.min_target(s, x),
            None => {
                let x = policy.sample_policy_latent(s, rng)?;
                self.min_target(s, &x)
            }
        }
    }

    /// Mean over batch and members of `(Q_i(s, x) - y)^2` plus per-member
    /// parameter gradients.
    pub fn critic_loss(&self, batch: &[CriticSample<'_>]) -> Result<CriticLoss> {
        if batch.is_empty() {
            return Err(FpoError::Empty("critic batch"));
        }
        let scale = 1.0 / (batch.len() * self.online.len()) as f64;
        let mut grads: Vec<Vec<f64>> = self.online.iter().map(|n| vec![0.0; n.num_params()]).collect();
        let mut loss = 0.0;
        let mut trace = Trace::default();
        for item in batch {
            let input = self.input(item.state, item.latent)?;
            for (net, g) in self.online.iter().zip(grads.iter_mut()) {
                net.forward_trace(&input, &mut trace);
                let err = trace.output()[0] - item.target;
                loss += err * err;
                net.backward_trace(&trace, &[2.0 * err * scale], g, None);
            }
        }
        let loss = loss * scale;
        if !loss.is_finite() {
            return Err(FpoError::NonFinite("critic loss".into()));
        }
        Ok(CriticLoss { loss, grads })
    }

    /// `phi_bar <- phi_bar + tau (phi - phi_bar)` for every member.
    pub fn polyak_update(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(FpoError::invalid("polyak_tau", tau, "(0, 1]"));
        }
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            for (tp, op) in t.params_mut().iter_mut().zip(o.params()) {
                *tp += tau * (op - *tp);
            }
        }
        Ok(())
    }
}

/// Generalized advantage estimation over one contiguous segment.
///
/// `values` carries one more entry than `rewards` (the bootstrap value).
/// A set `dones[t]` masks both the bootstrap term and the recursion.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    check_dim("gae values", rewards.len() + 1, values.len())?;
    check_dim("gae dones", rewards.len(), dones.len())?;
    check_finite("gae inputs", rewards)?;
    check_finite("gae values", values)?;
    let mut adv = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for t in (0..rewards.len()).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    Ok(adv)
}

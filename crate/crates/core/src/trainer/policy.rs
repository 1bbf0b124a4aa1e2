use crate::critic::LatentSampler;
use crate::error::Result;
use crate::flow_actor::{CfmSample, FlowActor};
use crate::numkit::{AdamState, Rng, StepOutcome};

use super::gaussian::GaussianActor;

/// Latent policy driven by a trainer.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Flow(FlowActor),
    Gaussian(GaussianActor),
}

impl Policy {
    pub fn state_dim(&self) -> usize {
        match self {
            Policy::Flow(a) => a.state_dim(),
            Policy::Gaussian(g) => g.state_dim(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Policy::Flow(a) => a.latent_dim(),
            Policy::Gaussian(g) => g.latent_dim(),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Policy::Flow(a) => a.num_params(),
            Policy::Gaussian(g) => g.num_params(),
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        match self {
            Policy::Flow(a) => a.params().to_vec(),
            Policy::Gaussian(g) => g.flat_params(),
        }
    }

    pub fn as_flow(&self) -> Option<&FlowActor> {
        match self {
            Policy::Flow(a) => Some(a),
            Policy::Gaussian(_) => None,
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianActor> {
        match self {
            Policy::Gaussian(g) => Some(g),
            Policy::Flow(_) => None,
        }
    }

    /// Behaviour latent. With `explore` off the flow actor skips the
    /// perturbation steps and the Gaussian returns its mean.
    pub fn act(&self, s: &[f64], explore: bool, rng: &mut Rng) -> Result<Vec<f64>> {
        match self {
            Policy::Flow(a) => {
                let (x, _) = a.sample_latent(s, rng)?;
                if explore {
                    a.explore_steps(&x, s, rng)
                } else {
                    Ok(x)
                }
            }
            Policy::Gaussian(g) => {
                if explore {
                    g.sample(s, rng)
                } else {
                    g.mean(s)
                }
            }
        }
    }

    /// Per-sample loss cached at rollout time: the CFM loss on the frozen
    /// draws, or `-log p(x|s)` for the Gaussian.
    pub fn cached_loss(&self, s: &[f64], x: &[f64], draws: &[CfmSample]) -> Result<f64> {
        match self {
            Policy::Flow(a) => a.cfm_loss(s, x, draws),
            Policy::Gaussian(g) => Ok(-g.log_prob(s, x)?),
        }
    }

    pub(crate) fn adam_step(&mut self, opt: &mut AdamState, grad: &[f64]) -> Result<StepOutcome> {
        match self {
            Policy::Flow(a) => opt.step(a.params_mut(), grad),
            Policy::Gaussian(g) => {
                let mut p = g.flat_params();
                let out = opt.step(&mut p, grad)?;
                g.set_flat_params(&p)?;
                Ok(out)
            }
        }
    }
}

impl LatentSampler for Policy {
    fn sample_policy_latent(&self, s: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        match self {
            Policy::Flow(a) => Ok(a.sample_latent(s, rng)?.0),
            Policy::Gaussian(g) => g.sample(s, rng),
        }
    }
}

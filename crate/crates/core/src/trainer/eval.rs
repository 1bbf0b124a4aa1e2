use crate::env::{BaseDecoder, EnvConfig, Environment};
use crate::error::Result;
use crate::numkit::rng::streams;
use crate::numkit::Rng;

use super::policy::Policy;

/// One closed-loop episode at policy-step granularity.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub states: Vec<Vec<f64>>,
    pub latents: Vec<Vec<f64>>,
    pub success: bool,
    pub total_return: f64,
    pub ticks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub success_rate: f64,
    pub mean_return: f64,
    pub mean_length: f64,
}

/// Run one episode from the environment's current (already reset) state.
pub fn run_episode(
    policy: &Policy,
    decoder: &BaseDecoder,
    env: &mut Environment,
    explore: bool,
    rng: &mut Rng,
) -> Result<EpisodeRecord> {
    let mut state = env.state();
    let mut rec = EpisodeRecord {
        states: Vec::new(),
        latents: Vec::new(),
        success: false,
        total_return: 0.0,
        ticks: 0,
    };
    if env.config().horizon == 0 {
        return Ok(rec);
    }
    loop {
        let x = policy.act(&state, explore, rng)?;
        let actions = decoder.decode(&state, &x)?;
        let out = env.run_chunk(&actions)?;
        rec.states.push(std::mem::replace(&mut state, out.next_state));
        rec.latents.push(x);
        rec.total_return += out.reward;
        rec.ticks += out.ticks;
        if out.terminal || out.truncated {
            rec.success = out.terminal;
            return Ok(rec);
        }
    }
}

/// Deterministic evaluation: exploration off, initial states and latent
/// noise drawn from the dedicated evaluation stream of `seed`, so every call
/// with the same arguments sees the same episodes.
pub fn evaluate(policy: &Policy, decoder: &BaseDecoder, env_cfg: &EnvConfig, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let records = eval_episodes(policy, decoder, env_cfg, episodes, seed)?;
    let n = records.len().max(1) as f64;
    Ok(EvalSummary {
        success_rate: records.iter().filter(|r| r.success).count() as f64 / n,
        mean_return: records.iter().map(|r| r.total_return).sum::<f64>() / n,
        mean_length: records.iter().map(|r| r.ticks as f64).sum::<f64>() / n,
    })
}

pub fn eval_episodes(
    policy: &Policy,
    decoder: &BaseDecoder,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    let mut env = Environment::new(env_cfg.clone())?;
    let mut reset_rng = Rng::stream(seed, streams::EVAL);
    let mut act_rng = reset_rng.fork();
    (0..episodes)
        .map(|_| {
            env.reset(&mut reset_rng);
            run_episode(policy, decoder, &mut env, false, &mut act_rng)
        })
        .collect()
}

use crate::buffer::{TrajectoryBuffer, Transition};
use crate::critic::{gae, CriticSample, LatentSampler, ValueEnsemble};
use crate::env::{BaseDecoder, Environment};
use crate::error::{FpoError, Result};
use crate::flow_actor::{CfmSample, WeightedSample};
use crate::numkit::rng::streams;
use crate::numkit::{clip_grad_norm, mean_std, AdamConfig, AdamState, Rng};
use crate::ratio::{
    clipped_surrogate, loss_drop, standardize_advantages, standardize_and_map, unclipped_surrogate, Surrogate,
    SIGMA_FLOOR,
};

use super::config::{Algo, BaselineLatent, TrainerConfig};
use super::eval::evaluate;
use super::metrics::{EvalRow, RunMetrics, UpdateRow};
use super::policy::Policy;
use super::pretrain::{build_prior, Prior};

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: TrainerConfig,
    pub metrics: RunMetrics,
    pub policy: Policy,
    pub critics: ValueEnsemble,
    pub decoder: BaseDecoder,
    pub buffer: TrajectoryBuffer,
    pub env_steps: u64,
}

/// Per-phase quantities computed once over the ordered buffer.
struct PhaseCache {
    advantages: Vec<f64>,
    /// On-policy latent at each next state; `None` for terminal transitions.
    next_latents: Vec<Option<Vec<f64>>>,
}

/// Alternating rollout/update loop. `rollout_policy` is the frozen copy that
/// generates experience; it is replaced by the learner after every update
/// phase, at which point the buffer's cached losses are recomputed.
#[derive(Debug)]
pub struct Trainer {
    config: TrainerConfig,
    policy: Policy,
    rollout_policy: Policy,
    critics: ValueEnsemble,
    decoder: BaseDecoder,
    decoder_hash: String,
    buffer: TrajectoryBuffer,
    env: Environment,
    state: Vec<f64>,
    actor_opt: AdamState,
    critic_opts: Vec<AdamState>,
    rollout_rng: Rng,
    update_rng: Rng,
    env_rng: Rng,
    env_steps: u64,
    next_rollout_id: u64,
    phases: u64,
    updates: u64,
    metrics: RunMetrics,
}

fn in_phase(phase: u64, what: &str) -> impl FnOnce(FpoError) -> FpoError + '_ {
    move |e| match e {
        FpoError::NonFinite(m) => FpoError::Diverged(format!("phase {phase}, {what}: non-finite {m}")),
        other => other,
    }
}

impl Trainer {
    pub fn new(config: TrainerConfig, prior: Prior) -> Result<Self> {
        config.validate()?;
        let mut policy = prior.policy;
        match (&mut policy, config.algo) {
            (Policy::Flow(a), Algo::Fpo | Algo::Rwfm) => {
                a.explore = config.explore();
                if a.flow_steps() != config.flow_steps {
                    return Err(FpoError::invalid("flow_steps", config.flow_steps, format!("{} (prior)", a.flow_steps())));
                }
            }
            (Policy::Gaussian(_), Algo::Gppo) => {}
            _ => return Err(FpoError::invalid("algo", config.algo, "a policy family matching the prior")),
        }
        let env_cfg = config.env_config();
        if policy.state_dim() != env_cfg.state_dim() || policy.latent_dim() != env_cfg.latent_dim() {
            return Err(FpoError::DimensionMismatch {
                context: "prior vs environment",
                expected: env_cfg.latent_dim(),
                got: policy.latent_dim(),
            });
        }
        let seed = config.seed;
        let critics = ValueEnsemble::new(
            config.effective_ensemble_size(),
            env_cfg.state_dim(),
            env_cfg.latent_dim(),
            &config.critic_hidden,
            config.gamma,
            config.lambda,
            &mut Rng::stream(seed, streams::CRITIC_INIT),
        )?;
        let critic_opts = critics
            .online()
            .iter()
            .map(|n| AdamState::new(n.num_params(), AdamConfig::with_lr(config.critic_lr)))
            .collect();
        let mut env = Environment::new(env_cfg)?;
        let mut env_rng = Rng::stream(seed, streams::ENV);
        let state = env.reset(&mut env_rng);
        Ok(Self {
            actor_opt: AdamState::new(policy.num_params(), AdamConfig::with_lr(config.actor_lr)),
            rollout_policy: policy.clone(),
            decoder_hash: prior.decoder.param_hash(),
            decoder: prior.decoder,
            buffer: TrajectoryBuffer::new(config.window)?,
            rollout_rng: Rng::stream(seed, streams::ROLLOUT),
            update_rng: Rng::stream(seed, streams::UPDATE),
            policy,
            critics,
            critic_opts,
            env,
            env_rng,
            state,
            env_steps: 0,
            next_rollout_id: 1,
            phases: 0,
            updates: 0,
            metrics: RunMetrics::default(),
            config,
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn rollout_policy(&self) -> &Policy {
        &self.rollout_policy
    }

    pub fn critics(&self) -> &ValueEnsemble {
        &self.critics
    }

    pub fn decoder(&self) -> &BaseDecoder {
        &self.decoder
    }

    pub fn buffer(&self) -> &TrajectoryBuffer {
        &self.buffer
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    /// Collect up to `rollout_steps` policy steps with the frozen rollout
    /// policy (fewer if the tick budget runs out) and push them as one
    /// rollout. Returns the number of policy steps taken.
    pub fn rollout_phase(&mut self) -> Result<usize> {
        let steps = self.config.rollout_steps;
        let id = self.next_rollout_id;
        let latent_dim = self.rollout_policy.latent_dim();
        let mut out = Vec::with_capacity(steps);
        while out.len() < steps && self.env_steps < self.config.budget {
            let s = self.state.clone();
            let x = self.rollout_policy.act(&s, true, &mut self.rollout_rng)?;
            let draws = match &self.rollout_policy {
                Policy::Flow(_) => CfmSample::draw_many(self.config.cfm_draws, latent_dim, &mut self.rollout_rng),
                Policy::Gaussian(_) => Vec::new(),
            };
            let loss_init = self.rollout_policy.cached_loss(&s, &x, &draws)?;
            let actions = self.decoder.decode(&s, &x)?;
            let chunk = self.env.run_chunk(&actions)?;
            self.env_steps += chunk.ticks as u64;
            self.state = if chunk.terminal || chunk.truncated {
                self.env.reset(&mut self.env_rng)
            } else {
                chunk.next_state.clone()
            };
            out.push(Transition {
                state: s,
                latent: x,
                action: actions.concat(),
                reward: chunk.reward,
                next_state: chunk.next_state,
                done: chunk.terminal,
                truncated: chunk.truncated,
                loss_init,
                draws,
                rollout_id: id,
                step_index: out.len(),
            });
        }
        let n = out.len();
        if n > 0 {
            self.buffer.push_rollout(out)?;
            self.next_rollout_id += 1;
        }
        Ok(n)
    }

    fn prepare_phase(&mut self) -> Result<PhaseCache> {
        let flat: Vec<&Transition> = self.buffer.transitions().collect();
        let n = flat.len();
        let rng = &mut self.update_rng;
        let mut fresh = Vec::with_capacity(n);
        for t in &flat {
            fresh.push(self.policy.sample_policy_latent(&t.state, rng)?);
        }
        let mut values = Vec::with_capacity(n);
        for (t, x) in flat.iter().zip(&fresh) {
            let x = match self.config.baseline_latent {
                BaselineLatent::Fresh => x,
                BaselineLatent::Stored => &t.latent,
            };
            values.push(self.critics.min_target(&t.state, x)?);
        }
        let mut next_latents = Vec::with_capacity(n);
        for i in 0..n {
            let t = flat[i];
            let continues = !t.ends_episode() && i + 1 < n && flat[i + 1].rollout_id == t.rollout_id;
            next_latents.push(if t.done {
                None
            } else if continues {
                Some(fresh[i + 1].clone())
            } else {
                Some(self.policy.sample_policy_latent(&t.next_state, rng)?)
            });
        }
        let mut advantages = Vec::with_capacity(n);
        let mut start = 0;
        for end in 0..n {
            let t = flat[end];
            let last_of_rollout = end + 1 == n || flat[end + 1].rollout_id != t.rollout_id;
            if !(t.ends_episode() || last_of_rollout) {
                continue;
            }
            let seg = &flat[start..=end];
            let bootstrap = match &next_latents[end] {
                None => 0.0,
                Some(x) => self.critics.min_target(&t.next_state, x)?,
            };
            let rewards: Vec<f64> = seg.iter().map(|t| t.reward).collect();
            let dones: Vec<bool> = seg.iter().map(|t| t.done).collect();
            let mut v = values[start..=end].to_vec();
            v.push(bootstrap);
            advantages.extend(gae(&rewards, &v, &dones, self.config.gamma, self.config.lambda)?);
            start = end + 1;
        }
        Ok(PhaseCache {
            advantages,
            next_latents,
        })
    }

    /// `K_update` inner steps (critics first, then the actor), followed by
    /// the rollout-policy sync.
    pub fn update_phase(&mut self) -> Result<()> {
        if self.buffer.is_empty() {
            return Err(FpoError::Empty("trajectory buffer"));
        }
        self.phases += 1;
        let phase = self.phases;
        let cache = self.prepare_phase().map_err(in_phase(phase, "advantages"))?;
        for _ in 0..self.config.update_steps {
            let row = self.inner_step(&cache).map_err(in_phase(phase, "inner step"))?;
            self.metrics.updates.push(row);
        }
        self.sync()
    }

    fn inner_step(&mut self, cache: &PhaseCache) -> Result<UpdateRow> {
        let cfg = &self.config;
        let idx = self.buffer.sample_indices(cfg.batch_size, &mut self.update_rng)?;
        let flat: Vec<&Transition> = self.buffer.transitions().collect();
        let batch: Vec<&Transition> = idx.iter().map(|&i| flat[i]).collect();

        let mut targets = Vec::with_capacity(batch.len());
        for (&i, t) in idx.iter().zip(&batch) {
            targets.push(match &cache.next_latents[i] {
                None => t.reward,
                Some(x) => self.critics.td_target_with_latent(t.reward, &t.next_state, x, false)?,
            });
        }
        let samples: Vec<CriticSample> = batch
            .iter()
            .zip(&targets)
            .map(|(t, &target)| CriticSample {
                state: &t.state,
                latent: &t.latent,
                target,
            })
            .collect();
        let critic = self.critics.critic_loss(&samples)?;
        for (m, mut g) in critic.grads.into_iter().enumerate() {
            clip_grad_norm(&mut g, cfg.grad_clip);
            self.critic_opts[m].step(self.critics.online_mut()[m].params_mut(), &g)?;
        }
        self.critics.polyak_update(cfg.polyak_tau)?;

        let raw_adv: Vec<f64> = idx.iter().map(|&i| cache.advantages[i]).collect();
        let (adv_mean, adv_std) = mean_std(&raw_adv);
        let adv = standardize_advantages(&raw_adv, SIGMA_FLOOR).values;
        let n = batch.len() as f64;
        let mut grad = vec![0.0; self.policy.num_params()];
        let mut entropy = None;
        let (surrogate, mean_ratio, mean_drop) = match (&self.policy, cfg.algo) {
            (Policy::Flow(actor), Algo::Fpo) => {
                let mut drops = Vec::with_capacity(batch.len());
                for t in &batch {
                    drops.push(loss_drop(t.loss_init, actor.cfm_loss(&t.state, &t.latent, &t.draws)?)?);
                }
                let mean_drop = drops.iter().sum::<f64>() / n;
                if cfg.no_ratio {
                    let ones = vec![1.0; batch.len()];
                    (clipped_surrogate(&ones, &adv, cfg.clip_eps)?, 1.0, mean_drop)
                } else {
                    let rb = standardize_and_map(&drops, cfg.beta, SIGMA_FLOOR)?;
                    let sur = surrogate(cfg, &rb.ratios, &adv)?;
                    let weighted: Vec<WeightedSample> = batch
                        .iter()
                        .enumerate()
                        .map(|(k, t)| WeightedSample {
                            state: &t.state,
                            latent: &t.latent,
                            draws: &t.draws,
                            weight: sur.grad_ratio[k] * rb.dratio_dloss_new(k),
                        })
                        .collect();
                    grad = actor.actor_grad_from_ratio(&weighted)?;
                    (sur, rb.mean_ratio(), mean_drop)
                }
            }
            (Policy::Flow(actor), Algo::Rwfm) => {
                let w = rwfm_weights(&adv, cfg.rwfm_temperature);
                let mut loss = 0.0;
                let mut drop = 0.0;
                for (t, wi) in batch.iter().zip(&w) {
                    let l = actor.cfm_loss_grad(&t.state, &t.latent, &t.draws, wi / n, &mut grad)?;
                    loss += wi * l / n;
                    drop += loss_drop(t.loss_init, l)? / n;
                }
                let sur = Surrogate {
                    loss,
                    grad_ratio: Vec::new(),
                    clip_fraction: 0.0,
                };
                (sur, 1.0, drop)
            }
            (Policy::Gaussian(g), Algo::Gppo) => {
                let mut drops = Vec::with_capacity(batch.len());
                for t in &batch {
                    drops.push(t.loss_init + g.log_prob(&t.state, &t.latent)?);
                }
                let ratios: Vec<f64> = if cfg.no_ratio {
                    vec![1.0; batch.len()]
                } else {
                    drops.iter().map(|d| d.exp()).collect()
                };
                let sur = surrogate(cfg, &ratios, &adv)?;
                if !cfg.no_ratio {
                    for (k, t) in batch.iter().enumerate() {
                        let w = sur.grad_ratio[k] * ratios[k];
                        if w != 0.0 {
                            g.log_prob_grad(&t.state, &t.latent, w, &mut grad)?;
                        }
                    }
                }
                entropy = Some(g.entropy());
                let mean_ratio = ratios.iter().sum::<f64>() / n;
                (sur, mean_ratio, drops.iter().sum::<f64>() / n)
            }
            _ => return Err(FpoError::invalid("algo", cfg.algo, "a policy family matching the prior")),
        };
        let actor_moves = !(cfg.no_ratio && matches!(cfg.algo, Algo::Fpo | Algo::Gppo));
        if actor_moves {
            clip_grad_norm(&mut grad, cfg.grad_clip);
            self.policy.adam_step(&mut self.actor_opt, &grad)?;
        }
        self.updates += 1;
        Ok(UpdateRow {
            env_steps: self.env_steps,
            update: self.updates,
            actor_loss: surrogate.loss,
            critic_loss: critic.loss,
            mean_ratio,
            clip_fraction: surrogate.clip_fraction,
            mean_loss_drop: mean_drop,
            adv_mean,
            adv_std,
            entropy,
        })
    }

    /// `theta_old <- theta`, then recompute every cached loss so the buffer
    /// is consistent with the new rollout policy.
    pub fn sync(&mut self) -> Result<()> {
        self.rollout_policy = self.policy.clone();
        let policy = &self.rollout_policy;
        self.buffer
            .recache(|t| policy.cached_loss(&t.state, &t.latent, &t.draws))
    }

    /// `l_init - l(theta)` over the whole buffer, in flat order.
    pub fn loss_drops(&self) -> Result<Vec<f64>> {
        self.buffer
            .transitions()
            .map(|t| loss_drop(t.loss_init, self.policy.cached_loss(&t.state, &t.latent, &t.draws)?))
            .collect()
    }

    fn check_decoder(&self) -> Result<()> {
        let found = self.decoder.param_hash();
        if found != self.decoder_hash {
            return Err(FpoError::DecoderMutated {
                expected: self.decoder_hash.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn evaluate_now(&self) -> Result<EvalRow> {
        let s = evaluate(
            &self.policy,
            &self.decoder,
            &self.config.env_config(),
            self.config.eval_episodes,
            self.config.seed,
        )?;
        Ok(EvalRow {
            env_steps: self.env_steps,
            success_rate: s.success_rate,
            mean_return: s.mean_return,
            mean_length: s.mean_length,
        })
    }

    /// Evaluate the prior, then alternate phases until the tick budget is
    /// spent, evaluating every `eval_interval` ticks and at the end.
    pub fn run(mut self) -> Result<RunOutput> {
        let prior = self.evaluate_now()?;
        self.metrics.evals.push(prior);
        let interval = self.config.eval_interval.max(1);
        let mut next_eval = interval;
        while self.env_steps < self.config.budget {
            if self.rollout_phase()? == 0 {
                break;
            }
            self.update_phase()?;
            self.check_decoder()?;
            if self.env_steps >= next_eval {
                let row = self.evaluate_now()?;
                self.metrics.evals.push(row);
                while next_eval <= self.env_steps {
                    next_eval += interval;
                }
            }
        }
        if self.metrics.evals.last().map(|r| r.env_steps) != Some(self.env_steps) {
            let row = self.evaluate_now()?;
            self.metrics.evals.push(row);
        }
        Ok(RunOutput {
            config: self.config,
            metrics: self.metrics,
            policy: self.policy,
            critics: self.critics,
            decoder: self.decoder,
            buffer: self.buffer,
            env_steps: self.env_steps,
        })
    }
}

/// `exp(A / temperature)` normalized to mean 1, computed with the maximum
/// subtracted so low temperatures do not overflow.
pub fn rwfm_weights(adv: &[f64], temperature: f64) -> Vec<f64> {
    let top = adv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = adv.iter().map(|a| ((a - top) / temperature).exp()).collect();
    let mean = w.iter().sum::<f64>() / w.len().max(1) as f64;
    w.iter_mut().for_each(|v| *v /= mean);
    w
}

fn surrogate(cfg: &TrainerConfig, ratios: &[f64], adv: &[f64]) -> Result<Surrogate> {
    if cfg.no_clip {
        unclipped_surrogate(ratios, adv)
    } else {
        clipped_surrogate(ratios, adv, cfg.clip_eps)
    }
}

pub fn train_from_prior(config: &TrainerConfig, prior: Prior) -> Result<RunOutput> {
    Trainer::new(config.clone(), prior)?.run()
}

/// BC prior from `config`, then online fine-tuning with the selected
/// algorithm.
pub fn train(config: &TrainerConfig) -> Result<RunOutput> {
    train_from_prior(config, build_prior(config)?)
}

pub fn train_baseline_rwfm(config: &TrainerConfig) -> Result<RunOutput> {
    train(&TrainerConfig {
        algo: Algo::Rwfm,
        ..config.clone()
    })
}

pub fn train_baseline_gaussian_ppo(config: &TrainerConfig) -> Result<RunOutput> {
    train(&TrainerConfig {
        algo: Algo::Gppo,
        ..config.clone()
    })
}

//! Behaviour cloning of the imitation prior and fitting of the base decoder.

use crate::env::{BaseDecoder, DemoEpisode, DemoQuality, DemoStep, EnvConfig, Environment, scripted_demo};
use crate::error::{FpoError, Result};
use crate::flow_actor::{CfmSample, FlowActor};
use crate::numkit::rng::streams;
use crate::numkit::{clip_grad_norm, Activation, AdamConfig, AdamState, Mlp, Rng, Trace};

use super::config::{Algo, DecoderKind, TrainerConfig};
use super::gaussian::GaussianActor;
use super::policy::Policy;

/// Optimizer settings shared by the supervised fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcSettings {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub grad_clip: f64,
}

impl BcSettings {
    pub fn from_config(cfg: &TrainerConfig) -> Self {
        Self {
            epochs: cfg.bc_epochs,
            lr: cfg.bc_lr,
            batch: cfg.bc_batch,
            grad_clip: cfg.grad_clip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcReport {
    /// Mean loss over the demo set on fixed evaluation draws, before and after.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps: usize,
}

/// Imitation prior plus the decoder it was fitted with.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub policy: Policy,
    pub decoder: BaseDecoder,
    pub report: BcReport,
    pub demo_success: f64,
    pub demo_pairs: usize,
}

pub fn generate_demos(env_cfg: &EnvConfig, quality: &DemoQuality, episodes: usize, rng: &mut Rng) -> Result<Vec<DemoEpisode>> {
    let mut env = Environment::new(env_cfg.clone())?;
    (0..episodes).map(|_| scripted_demo(&mut env, quality, rng)).collect()
}

pub fn demo_steps(demos: &[DemoEpisode]) -> Vec<DemoStep> {
    demos.iter().flat_map(|e| e.steps.iter().cloned()).collect()
}

fn batches(n: usize, batch: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.chunks(batch.max(1)).map(|c| c.to_vec()).collect()
}

fn diverged(what: &str, epoch: usize, e: FpoError) -> FpoError {
    match e {
        FpoError::NonFinite(m) => FpoError::Diverged(format!("{what} epoch {epoch}: {m}")),
        other => other,
    }
}

/// Fit the flow actor to demo `(s, x)` pairs by CFM regression with fresh
/// draws per minibatch.
pub fn pretrain_bc(actor: &mut FlowActor, demos: &[DemoStep], settings: &BcSettings, rng: &mut Rng) -> Result<BcReport> {
    if demos.is_empty() {
        return Err(FpoError::Empty("demonstration set"));
    }
    let d = actor.latent_dim();
    let mut probe_rng = rng.fork();
    let probe: Vec<Vec<CfmSample>> = demos.iter().map(|_| CfmSample::draw_many(4, d, &mut probe_rng)).collect();
    let mean_loss = |a: &FlowActor| -> Result<f64> {
        let mut total = 0.0;
        for (step, draws) in demos.iter().zip(&probe) {
            total += a.cfm_loss(&step.state, &step.chunk, draws)?;
        }
        Ok(total / demos.len() as f64)
    };
    let initial_loss = mean_loss(actor)?;
    let mut opt = AdamState::new(actor.num_params(), AdamConfig::with_lr(settings.lr));
    let mut grad = vec![0.0; actor.num_params()];
    let mut steps = 0;
    for epoch in 0..settings.epochs {
        for batch in batches(demos.len(), settings.batch, rng) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let w = 1.0 / batch.len() as f64;
            for &i in &batch {
                let draw = [CfmSample::draw(d, rng)];
                actor
                    .cfm_loss_grad(&demos[i].state, &demos[i].chunk, &draw, w, &mut grad)
                    .map_err(|e| diverged("bc", epoch, e))?;
            }
            clip_grad_norm(&mut grad, settings.grad_clip);
            opt.step(actor.params_mut(), &grad)?;
            steps += 1;
        }
    }
    let final_loss = mean_loss(actor)?;
    if !final_loss.is_finite() {
        return Err(FpoError::Diverged(format!("bc loss {final_loss} after {steps} steps")));
    }
    Ok(BcReport {
        initial_loss,
        final_loss,
        steps,
    })
}

/// Maximum-likelihood fit of the Gaussian policy to the demo pairs.
pub fn pretrain_gaussian(actor: &mut GaussianActor, demos: &[DemoStep], settings: &BcSettings, rng: &mut Rng) -> Result<BcReport> {
    if demos.is_empty() {
        return Err(FpoError::Empty("demonstration set"));
    }
    let nll = |a: &GaussianActor| -> Result<f64> {
        let mut total = 0.0;
        for step in demos {
            total -= a.log_prob(&step.state, &step.chunk)?;
        }
        Ok(total / demos.len() as f64)
    };
    let initial_loss = nll(actor)?;
    let mut opt = AdamState::new(actor.num_params(), AdamConfig::with_lr(settings.lr));
    let mut grad = vec![0.0; actor.num_params()];
    let mut steps = 0;
    for epoch in 0..settings.epochs {
        for batch in batches(demos.len(), settings.batch, rng) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let w = -1.0 / batch.len() as f64;
            for &i in &batch {
                actor
                    .log_prob_grad(&demos[i].state, &demos[i].chunk, w, &mut grad)
                    .map_err(|e| diverged("gaussian bc", epoch, e))?;
            }
            clip_grad_norm(&mut grad, settings.grad_clip);
            let mut p = actor.flat_params();
            opt.step(&mut p, &grad)?;
            actor.set_flat_params(&p)?;
            steps += 1;
        }
    }
    Ok(BcReport {
        initial_loss,
        final_loss: nll(actor)?,
        steps,
    })
}

/// Regress the decoder from `(s, x + noise)` onto the demo chunk, then wrap
/// it as a frozen decoder.
pub fn fit_decoder(
    net: Mlp,
    env_cfg: &EnvConfig,
    demos: &[DemoStep],
    noise: f64,
    settings: &BcSettings,
    rng: &mut Rng,
) -> Result<BaseDecoder> {
    if demos.is_empty() {
        return Err(FpoError::Empty("demonstration set"));
    }
    let mut net = net;
    let mut opt = AdamState::new(net.num_params(), AdamConfig::with_lr(settings.lr));
    let mut grad = vec![0.0; net.num_params()];
    let mut trace = Trace::default();
    let mut input = Vec::with_capacity(net.input_dim());
    for epoch in 0..settings.epochs {
        for batch in batches(demos.len(), settings.batch, rng) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let w = 2.0 / batch.len() as f64;
            for &i in &batch {
                let step = &demos[i];
                input.clear();
                input.extend_from_slice(&step.state);
                input.extend(step.chunk.iter().map(|c| c + noise * rng.normal()));
                net.forward_trace(&input, &mut trace);
                let resid: Vec<f64> = trace.output().iter().zip(&step.chunk).map(|(o, c)| w * (o - c)).collect();
                if resid.iter().any(|r| !r.is_finite()) {
                    return Err(FpoError::Diverged(format!("decoder epoch {epoch}")));
                }
                net.backward_trace(&trace, &resid, &mut grad, None);
            }
            clip_grad_norm(&mut grad, settings.grad_clip);
            opt.step(net.params_mut(), &grad)?;
        }
    }
    BaseDecoder::frozen(net, env_cfg.state_dim(), env_cfg.chunk_len, env_cfg.action_dim())
}

/// Demos, decoder and prior for `cfg`, all derived from `cfg.seed`.
pub fn build_prior(cfg: &TrainerConfig) -> Result<Prior> {
    cfg.validate()?;
    let env_cfg = cfg.env_config();
    let (sd, ld) = (env_cfg.state_dim(), env_cfg.latent_dim());
    let mut demo_rng = Rng::stream(cfg.seed, streams::DEMOS);
    let demos = generate_demos(&env_cfg, &cfg.demo_quality.quality(), cfg.demo_episodes, &mut demo_rng)?;
    let demo_success = demos.iter().filter(|e| e.success).count() as f64 / demos.len().max(1) as f64;
    let steps = demo_steps(&demos);
    let settings = BcSettings::from_config(cfg);
    let mut train_rng = Rng::stream(cfg.seed, streams::PRETRAIN);
    let mut init_rng = Rng::stream(cfg.seed, streams::ACTOR_INIT);
    let (policy, report) = match cfg.algo {
        Algo::Fpo | Algo::Rwfm => {
            let mut actor = FlowActor::new(sd, ld, &cfg.actor_hidden, cfg.flow_steps, cfg.explore(), &mut init_rng)?;
            let report = pretrain_bc(&mut actor, &steps, &settings, &mut train_rng)?;
            (Policy::Flow(actor), report)
        }
        Algo::Gppo => {
            let mut actor = GaussianActor::new(sd, ld, &cfg.actor_hidden, cfg.gppo_init_std, &mut init_rng)?;
            let report = pretrain_gaussian(&mut actor, &steps, &settings, &mut train_rng)?;
            (Policy::Gaussian(actor), report)
        }
    };
    let decoder = match cfg.decoder {
        DecoderKind::Identity => BaseDecoder::identity(env_cfg.chunk_len, env_cfg.action_dim()),
        DecoderKind::Frozen => {
            let mut sizes = vec![sd + ld];
            sizes.extend_from_slice(&cfg.decoder_hidden);
            sizes.push(ld);
            let net = Mlp::new(&sizes, Activation::Tanh, &mut Rng::stream(cfg.seed, streams::DECODER_INIT))?;
            fit_decoder(net, &env_cfg, &steps, cfg.decoder_noise, &settings, &mut train_rng)?
        }
    };
    Ok(Prior {
        policy,
        decoder,
        report,
        demo_success,
        demo_pairs: steps.len(),
    })
}

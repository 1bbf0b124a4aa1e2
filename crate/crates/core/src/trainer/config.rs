use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{DemoQuality, EnvConfig, EnvKind, RewardMode};
use crate::error::{FpoError, Result};
use crate::flow_actor::ExploreConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    /// Flow policy optimization.
    #[default]
    Fpo,
    /// Reward-weighted flow matching.
    Rwfm,
    /// Diagonal-Gaussian latent policy with exact likelihood ratios.
    #[serde(alias = "gaussian_ppo")]
    Gppo,
}

impl std::str::FromStr for Algo {
    type Err = FpoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fpo" => Ok(Algo::Fpo),
            "rwfm" => Ok(Algo::Rwfm),
            "gppo" | "gaussian_ppo" => Ok(Algo::Gppo),
            other => Err(FpoError::invalid("algo", other, "fpo | rwfm | gppo")),
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algo::Fpo => "fpo",
            Algo::Rwfm => "rwfm",
            Algo::Gppo => "gppo",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    /// Network trained next to the prior, then frozen.
    #[default]
    Frozen,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoKind {
    Expert,
    #[default]
    Suboptimal,
}

impl DemoKind {
    pub fn quality(self) -> DemoQuality {
        match self {
            DemoKind::Expert => DemoQuality::Expert,
            DemoKind::Suboptimal => DemoQuality::calibrated_suboptimal(),
        }
    }
}

/// Latent used for the state-value baseline in advantage estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineLatent {
    /// `V(s) = min_i Qbar_i(s, x)` with `x` freshly sampled from the policy.
    #[default]
    Fresh,
    /// Reuse the latent stored in the transition.
    Stored,
}

/// Every knob of a run. Loaded from TOML; missing keys take the defaults
/// below and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub algo: Algo,
    pub env: EnvKind,
    pub reward: RewardMode,
    pub chunk_len: usize,

    pub gamma: f64,
    pub beta: f64,
    pub clip_eps: f64,
    pub eta: f64,
    /// Exploration steps `K`.
    pub explore_steps: usize,
    pub explore_noise: f64,
    /// Critic ensemble size `M`.
    pub ensemble_size: usize,
    pub lambda: f64,
    pub polyak_tau: f64,
    /// Sliding window `W`, in rollouts.
    pub window: usize,
    /// Policy steps per rollout phase.
    pub rollout_steps: usize,
    /// Inner gradient steps per update phase.
    pub update_steps: usize,
    pub batch_size: usize,
    /// Frozen CFM draws per transition.
    pub cfm_draws: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub grad_clip: f64,
    pub baseline_latent: BaselineLatent,

    /// Total environment ticks.
    pub budget: u64,
    /// Ticks between evaluations.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    /// Seeds for multi-seed suites.
    pub seeds: Vec<u64>,

    /// Pin the ratio to 1.
    pub no_ratio: bool,
    /// Drop the PPO clip.
    pub no_clip: bool,
    /// Single exploration step.
    pub k1: bool,
    /// One critic instead of the ensemble.
    pub single_critic: bool,

    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub flow_steps: usize,
    pub decoder: DecoderKind,
    pub decoder_hidden: Vec<usize>,
    /// Latent noise used while fitting the decoder.
    pub decoder_noise: f64,

    pub demo_quality: DemoKind,
    pub demo_episodes: usize,
    pub bc_epochs: usize,
    pub bc_lr: f64,
    pub bc_batch: usize,

    pub rwfm_temperature: f64,
    pub gppo_init_std: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Fpo,
            env: EnvKind::PointReach,
            reward: RewardMode::Sparse,
            chunk_len: 4,
            gamma: 0.99,
            beta: 1.0,
            clip_eps: 0.2,
            eta: 0.05,
            explore_steps: 4,
            explore_noise: 0.05,
            ensemble_size: 2,
            lambda: 0.95,
            polyak_tau: 0.005,
            window: 8,
            rollout_steps: 512,
            update_steps: 32,
            batch_size: 256,
            cfm_draws: 4,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            grad_clip: 10.0,
            baseline_latent: BaselineLatent::Fresh,
            budget: 200_000,
            eval_interval: 20_000,
            eval_episodes: 100,
            seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            no_ratio: false,
            no_clip: false,
            k1: false,
            single_critic: false,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            flow_steps: 8,
            decoder: DecoderKind::Frozen,
            decoder_hidden: vec![64],
            decoder_noise: 0.1,
            demo_quality: DemoKind::Suboptimal,
            demo_episodes: 200,
            bc_epochs: 150,
            bc_lr: 1e-3,
            bc_batch: 256,
            rwfm_temperature: 1.0,
            gppo_init_std: 0.3,
        }
    }
}

fn open01(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(FpoError::invalid(field, v, "(0, 1)"))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(FpoError::invalid(field, v, "(0, inf)"))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(FpoError::invalid(field, v, "[0, inf)"))
    }
}

fn at_least_one(field: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(FpoError::invalid(field, v, ">= 1"))
    }
}

fn layers(field: &str, v: &[usize]) -> Result<()> {
    if v.contains(&0) {
        return Err(FpoError::invalid(field, format!("{v:?}"), "positive layer widths"));
    }
    Ok(())
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        at_least_one("chunk_len", self.chunk_len)?;
        open01("gamma", self.gamma)?;
        positive("beta", self.beta)?;
        open01("clip_eps", self.clip_eps)?;
        positive("eta", self.eta)?;
        non_negative("explore_noise", self.explore_noise)?;
        at_least_one("ensemble_size", self.ensemble_size)?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(FpoError::invalid("lambda", self.lambda, "[0, 1]"));
        }
        if !(self.polyak_tau > 0.0 && self.polyak_tau <= 1.0) {
            return Err(FpoError::invalid("polyak_tau", self.polyak_tau, "(0, 1]"));
        }
        at_least_one("window", self.window)?;
        at_least_one("batch_size", self.batch_size)?;
        at_least_one("cfm_draws", self.cfm_draws)?;
        non_negative("actor_lr", self.actor_lr)?;
        non_negative("critic_lr", self.critic_lr)?;
        positive("grad_clip", self.grad_clip)?;
        at_least_one("eval_interval", self.eval_interval as usize)?;
        at_least_one("flow_steps", self.flow_steps)?;
        layers("actor_hidden", &self.actor_hidden)?;
        layers("critic_hidden", &self.critic_hidden)?;
        layers("decoder_hidden", &self.decoder_hidden)?;
        non_negative("decoder_noise", self.decoder_noise)?;
        non_negative("bc_lr", self.bc_lr)?;
        at_least_one("bc_batch", self.bc_batch)?;
        positive("rwfm_temperature", self.rwfm_temperature)?;
        positive("gppo_init_std", self.gppo_init_std)?;
        Ok(())
    }

    /// Exploration steps after the `k1` ablation.
    pub fn effective_explore_steps(&self) -> usize {
        if self.k1 {
            1
        } else {
            self.explore_steps
        }
    }

    /// Ensemble size after the `single_critic` ablation.
    pub fn effective_ensemble_size(&self) -> usize {
        if self.single_critic {
            1
        } else {
            self.ensemble_size
        }
    }

    pub fn explore(&self) -> ExploreConfig {
        ExploreConfig {
            steps: self.effective_explore_steps(),
            eta: self.eta,
            noise: self.explore_noise,
            flow_time: 1.0,
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        let mut cfg = EnvConfig::for_kind(self.env);
        cfg.chunk_len = self.chunk_len;
        cfg.reward = self.reward;
        cfg
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = TrainerConfig::default();
        cfg.validate().unwrap();
        let back = TrainerConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(TrainerConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn ranges_enforced() {
        let cfg = TrainerConfig {
            gamma: 1.5,
            ..Default::default()
        };
        match cfg.validate() {
            Err(FpoError::InvalidConfig { field, allowed, .. }) => {
                assert_eq!(field, "gamma");
                assert_eq!(allowed, "(0, 1)");
            }
            other => panic!("{other:?}"),
        }
        for bad in [
            TrainerConfig { clip_eps: 1.0, ..Default::default() },
            TrainerConfig { lambda: -0.1, ..Default::default() },
            TrainerConfig { ensemble_size: 0, ..Default::default() },
            TrainerConfig { window: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
        assert!(TrainerConfig { explore_steps: 0, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn ablation_overrides() {
        let cfg = TrainerConfig {
            k1: true,
            single_critic: true,
            ..Default::default()
        };
        assert_eq!(cfg.effective_explore_steps(), 1);
        assert_eq!(cfg.effective_ensemble_size(), 1);
        assert_ne!(cfg.hash(), TrainerConfig::default().hash());
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(TrainerConfig::from_toml("gamma = 0.9\nbogus = 1\n").is_err());
        assert_eq!(TrainerConfig::from_toml("algo = \"gaussian_ppo\"").unwrap().algo, Algo::Gppo);
    }
}

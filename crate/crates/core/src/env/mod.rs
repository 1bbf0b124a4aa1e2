//! Sparse-reward continuous-control environments, the frozen base decoder,
//! and scripted demonstrators.
//!
//! One policy step consumes one latent chunk: the base decoder turns it into
//! `H` low-level actions which are executed tick by tick until the chunk is
//! exhausted or the episode ends.

mod decoder;
mod demo;
mod point_reach;
mod push_block;

pub use decoder::BaseDecoder;
pub use demo::{scripted_demo, DemoEpisode, DemoQuality, DemoStep};
pub use point_reach::PointReach;
pub use push_block::PushBlock;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, FpoError, Result};
use crate::numkit::Rng;

/// Component-wise bound on low-level actions.
pub const ACTION_BOUND: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    PointReach,
    PushBlock,
}

impl std::str::FromStr for EnvKind {
    type Err = FpoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pointreach" => Ok(EnvKind::PointReach),
            "pushblock" => Ok(EnvKind::PushBlock),
            other => Err(FpoError::invalid("env", other, "pointreach | pushblock")),
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EnvKind::PointReach => "pointreach",
            EnvKind::PushBlock => "pushblock",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// 1 on the success tick, 0 otherwise.
    Sparse,
    /// Distance-progress shaping plus the sparse success bonus.
    Shaped,
}

/// Pinned initial configuration for debugging. `start` is the agent position,
/// `goal` the goal, `block` the block (PushBlock only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pinned {
    pub start: [f64; 2],
    pub goal: [f64; 2],
    #[serde(default)]
    pub block: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// Low-level actions per latent chunk (`H`).
    pub chunk_len: usize,
    /// Episode time limit in ticks.
    pub horizon: usize,
    pub goal_tolerance: f64,
    pub reward: RewardMode,
    pub pinned: Option<Pinned>,
}

impl EnvConfig {
    pub fn point_reach() -> Self {
        Self {
            kind: EnvKind::PointReach,
            chunk_len: 4,
            horizon: 80,
            goal_tolerance: 0.1,
            reward: RewardMode::Sparse,
            pinned: None,
        }
    }

    pub fn push_block() -> Self {
        Self {
            kind: EnvKind::PushBlock,
            chunk_len: 4,
            horizon: 160,
            goal_tolerance: 0.15,
            reward: RewardMode::Sparse,
            pinned: None,
        }
    }

    pub fn for_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::PointReach => Self::point_reach(),
            EnvKind::PushBlock => Self::push_block(),
        }
    }

    pub fn action_dim(&self) -> usize {
        2
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            EnvKind::PointReach => PointReach::STATE_DIM,
            EnvKind::PushBlock => PushBlock::STATE_DIM,
        }
    }

    /// Latent dimension `D = H * d_a`.
    pub fn latent_dim(&self) -> usize {
        self.chunk_len * self.action_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_len == 0 {
            return Err(FpoError::invalid("chunk_len", 0, ">= 1"));
        }
        if !(self.goal_tolerance > 0.0) {
            return Err(FpoError::invalid("goal_tolerance", self.goal_tolerance, "(0, inf)"));
        }
        Ok(())
    }
}

/// Result of one environment tick.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: Vec<f64>,
    pub reward: f64,
    /// Goal reached; the MDP terminates.
    pub terminal: bool,
    /// Time limit reached without success.
    pub truncated: bool,
}

impl StepResult {
    pub fn episode_over(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Outcome of executing one decoded chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub ticks: usize,
    pub terminal: bool,
    pub truncated: bool,
}

pub(crate) fn clip_action(a: &[f64]) -> [f64; 2] {
    [
        a[0].clamp(-ACTION_BOUND, ACTION_BOUND),
        a[1].clamp(-ACTION_BOUND, ACTION_BOUND),
    ]
}

#[derive(Debug, Clone)]
pub enum Environment {
    PointReach(PointReach),
    PushBlock(PushBlock),
}

impl Environment {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(match config.kind {
            EnvKind::PointReach => Environment::PointReach(PointReach::new(config)),
            EnvKind::PushBlock => Environment::PushBlock(PushBlock::new(config)),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        match self {
            Environment::PointReach(e) => &e.config,
            Environment::PushBlock(e) => &e.config,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.config().state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.config().action_dim()
    }

    pub fn chunk_len(&self) -> usize {
        self.config().chunk_len
    }

    pub fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        match self {
            Environment::PointReach(e) => e.reset(rng),
            Environment::PushBlock(e) => e.reset(rng),
        }
    }

    pub fn state(&self) -> Vec<f64> {
        match self {
            Environment::PointReach(e) => e.state(),
            Environment::PushBlock(e) => e.state(),
        }
    }

    /// Ticks elapsed in the current episode.
    pub fn ticks(&self) -> usize {
        match self {
            Environment::PointReach(e) => e.ticks,
            Environment::PushBlock(e) => e.ticks,
        }
    }

    pub fn is_success(&self) -> bool {
        match self {
            Environment::PointReach(e) => e.is_success(),
            Environment::PushBlock(e) => e.is_success(),
        }
    }

    /// Advance one tick. Actions are clipped component-wise to the bounds.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_dim("env action", self.action_dim(), action.len())?;
        let a = clip_action(action);
        Ok(match self {
            Environment::PointReach(e) => e.step(a),
            Environment::PushBlock(e) => e.step(a),
        })
    }

    /// Scripted controller action for the current state.
    pub fn scripted_action(&self, quality: &DemoQuality, rng: &mut Rng) -> Vec<f64> {
        match self {
            Environment::PointReach(e) => e.scripted_action(quality, rng),
            Environment::PushBlock(e) => e.scripted_action(quality, rng),
        }
    }

    /// Execute a decoded chunk, stopping early when the episode ends.
    pub fn run_chunk(&mut self, actions: &[Vec<f64>]) -> Result<ChunkOutcome> {
        let mut reward = 0.0;
        let mut ticks = 0;
        let mut last = None;
        for a in actions {
            let r = self.step(a)?;
            reward += r.reward;
            ticks += 1;
            let over = r.episode_over();
            last = Some(r);
            if over {
                break;
            }
        }
        let r = last.ok_or(FpoError::Empty("decoded chunk"))?;
        Ok(ChunkOutcome {
            next_state: r.state,
            reward,
            ticks,
            terminal: r.terminal,
            truncated: r.truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_parses() {
        assert_eq!("pointreach".parse::<EnvKind>().unwrap(), EnvKind::PointReach);
        assert_eq!("pushblock".parse::<EnvKind>().unwrap(), EnvKind::PushBlock);
        assert!("cartpole".parse::<EnvKind>().is_err());
    }

    #[test]
    fn chunk_execution_stops_at_success() {
        let mut cfg = EnvConfig::point_reach();
        cfg.pinned = Some(Pinned {
            start: [0.0, 0.0],
            goal: [0.05, 0.0],
            block: None,
        });
        let mut env = Environment::new(cfg).unwrap();
        env.reset(&mut Rng::new(0));
        let out = env.run_chunk(&vec![vec![0.0, 0.0]; 4]).unwrap();
        assert_eq!(out.ticks, 1);
        assert!(out.terminal);
        assert_eq!(out.reward, 1.0);
    }

    #[test]
    fn chunk_is_h_ticks_mid_episode() {
        let mut env = Environment::new(EnvConfig::point_reach()).unwrap();
        env.reset(&mut Rng::new(3));
        let out = env.run_chunk(&vec![vec![0.0, 0.0]; 4]).unwrap();
        assert_eq!(out.ticks, 4);
        assert_eq!(env.ticks(), 4);
    }

    #[test]
    fn wrong_action_dim_rejected() {
        let mut env = Environment::new(EnvConfig::point_reach()).unwrap();
        env.reset(&mut Rng::new(3));
        assert!(env.step(&[0.0]).is_err());
    }
}

//! Flow policy optimization.
//!
//! Online reinforcement fine-tuning of conditional flow-matching policies.
//! The policy ratio that PPO needs is replaced by a likelihood-free proxy: the
//! per-sample change of the conditional flow-matching loss between the
//! rollout parameters and the current parameters, batch-standardized and
//! exponentiated. Around that core sit a Q-ensemble with Polyak targets, GAE
//! advantages, a sliding-window trajectory buffer, toy sparse-reward
//! environments driven through a frozen base decoder, two baselines and an
//! ablation harness.

pub mod buffer;
pub mod critic;
pub mod env;
pub mod error;
pub mod flow_actor;
pub mod harness;
pub mod numkit;
pub mod ratio;
pub mod trainer;

pub use error::{FpoError, Result};

//! Orchestration: behaviour-cloned prior, alternating rollout/update phases
//! with rollout-policy synchronization, baselines and the ablation suite.

mod ablation;
mod config;
mod eval;
mod gaussian;
mod metrics;
mod policy;
mod pretrain;
mod run;

pub use ablation::{median, run_ablation_suite, run_ablation_with, AblationRow, AblationTable, Variant};
pub use config::{Algo, BaselineLatent, DecoderKind, DemoKind, TrainerConfig};
pub use eval::{eval_episodes, evaluate, run_episode, EpisodeRecord, EvalSummary};
pub use gaussian::GaussianActor;
pub use metrics::{EvalRow, RunMetrics, UpdateRow};
pub use policy::Policy;
pub use pretrain::{
    build_prior, demo_steps, fit_decoder, generate_demos, pretrain_bc, pretrain_gaussian, BcReport, BcSettings, Prior,
};
pub use run::{rwfm_weights, train, train_baseline_gaussian_ppo, train_baseline_rwfm, train_from_prior, RunOutput, Trainer};

#![allow(dead_code)]

use fpo_core::env::BaseDecoder;
use fpo_core::flow_actor::FlowActor;
use fpo_core::numkit::Rng;
use fpo_core::trainer::{Algo, BcReport, GaussianActor, Policy, Prior, TrainerConfig};

/// Small, fast settings for trainer plumbing tests.
pub fn small_config() -> TrainerConfig {
    TrainerConfig {
        actor_hidden: vec![16, 16],
        critic_hidden: vec![16, 16],
        rollout_steps: 64,
        batch_size: 32,
        update_steps: 4,
        eval_episodes: 5,
        ..Default::default()
    }
}

/// Untrained prior with an identity decoder, skipping demos and BC.
pub fn small_prior(cfg: &TrainerConfig) -> Prior {
    let env_cfg = cfg.env_config();
    let (sd, ld) = (env_cfg.state_dim(), env_cfg.latent_dim());
    let mut rng = Rng::new(cfg.seed);
    let policy = match cfg.algo {
        Algo::Gppo => Policy::Gaussian(GaussianActor::new(sd, ld, &cfg.actor_hidden, cfg.gppo_init_std, &mut rng).unwrap()),
        _ => Policy::Flow(FlowActor::new(sd, ld, &cfg.actor_hidden, cfg.flow_steps, cfg.explore(), &mut rng).unwrap()),
    };
    Prior {
        policy,
        decoder: BaseDecoder::identity(env_cfg.chunk_len, env_cfg.action_dim()),
        report: BcReport {
            initial_loss: 0.0,
            final_loss: 0.0,
            steps: 0,
        },
        demo_success: 0.0,
        demo_pairs: 0,
    }
}

//! Scripted demonstrations used to build the imitation prior.

use serde::{Deserialize, Serialize};

use super::Environment;
use crate::error::Result;
use crate::numkit::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DemoQuality {
    Expert,
    /// Expert controller with its position error rotated by `bias_angle`
    /// radians and Gaussian action noise of std `noise`.
    Suboptimal { bias_angle: f64, noise: f64 },
}

impl DemoQuality {
    /// Calibrated so scripted PointReach demos succeed 30-50% of the time.
    pub fn calibrated_suboptimal() -> Self {
        DemoQuality::Suboptimal {
            bias_angle: 1.0,
            noise: 0.8,
        }
    }
}

/// State at the start of a chunk and the `H` actions the script executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoStep {
    pub state: Vec<f64>,
    /// Flattened `H x d_a` chunk; this is also its latent.
    pub chunk: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoEpisode {
    pub steps: Vec<DemoStep>,
    pub success: bool,
    pub ticks: usize,
    /// Set when the horizon allowed no ticks at all.
    pub empty: bool,
}

/// Roll out the scripted controller closed-loop for one episode. Each chunk
/// records the state at its first tick; a chunk cut short by the episode end
/// is padded by repeating its last action.
pub fn scripted_demo(env: &mut Environment, quality: &DemoQuality, rng: &mut Rng) -> Result<DemoEpisode> {
    let h = env.chunk_len();
    let mut state = env.reset(rng);
    let mut steps = Vec::new();
    if env.config().horizon == 0 {
        return Ok(DemoEpisode {
            steps,
            success: false,
            ticks: 0,
            empty: true,
        });
    }
    let mut success = false;
    'episode: loop {
        let start = state.clone();
        let mut chunk = Vec::with_capacity(h * env.action_dim());
        let mut over = false;
        for _ in 0..h {
            let a = env.scripted_action(quality, rng);
            let r = env.step(&a)?;
            chunk.extend_from_slice(&a);
            let ended = r.episode_over();
            success = r.terminal;
            state = r.state;
            if ended {
                over = true;
                break;
            }
        }
        while chunk.len() < h * env.action_dim() {
            let n = chunk.len();
            let last = chunk[n - env.action_dim()..].to_vec();
            chunk.extend(last);
        }
        steps.push(DemoStep { state: start, chunk });
        if over {
            break 'episode;
        }
    }
    Ok(DemoEpisode {
        steps,
        success,
        ticks: env.ticks(),
        empty: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, Environment};

    #[test]
    fn expert_demo_succeeds() {
        let mut env = Environment::new(EnvConfig::point_reach()).unwrap();
        let ep = scripted_demo(&mut env, &DemoQuality::Expert, &mut Rng::new(0)).unwrap();
        assert!(ep.success);
        assert!(!ep.empty);
        assert!(ep.steps.iter().all(|s| s.chunk.len() == 8 && s.state.len() == 6));
    }

    #[test]
    fn zero_horizon_is_flagged() {
        let mut cfg = EnvConfig::point_reach();
        cfg.horizon = 0;
        let mut env = Environment::new(cfg).unwrap();
        let ep = scripted_demo(&mut env, &DemoQuality::Expert, &mut Rng::new(0)).unwrap();
        assert!(ep.empty && ep.steps.is_empty());
    }

    #[test]
    fn suboptimal_success_rate_is_calibrated() {
        let mut env = Environment::new(EnvConfig::point_reach()).unwrap();
        let mut rng = Rng::new(2024);
        let q = DemoQuality::calibrated_suboptimal();
        let wins = (0..500)
            .filter(|_| scripted_demo(&mut env, &q, &mut rng).unwrap().success)
            .count();
        let rate = wins as f64 / 500.0;
        assert!((0.3..=0.5).contains(&rate), "suboptimal success rate {rate}");
    }
}

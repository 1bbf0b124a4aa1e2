//! Point mass pushing a disc-shaped block into a goal zone.
//!
//! The agent follows the PointReach double-integrator dynamics. Contact
//! engages only when the agent disc overlaps the block disc: the block is then
//! displaced along the center line until the overlap vanishes, and the agent
//! loses the velocity component pointing into the block. The block has no
//! momentum of its own.
//!
//! State layout: `[px, py, vx, vy, bx - px, by - py, gx - bx, gy - by]`.

use super::point_reach::{ACCEL_GAIN, ARENA, DT, KD, KP, MAX_SPEED};
use super::{DemoQuality, EnvConfig, Pinned, RewardMode, StepResult};
use crate::numkit::Rng;

pub const AGENT_RADIUS: f64 = 0.08;
pub const BLOCK_RADIUS: f64 = 0.12;
const CONTACT: f64 = AGENT_RADIUS + BLOCK_RADIUS;

#[derive(Debug, Clone)]
pub struct PushBlock {
    pub(crate) config: EnvConfig,
    pos: [f64; 2],
    vel: [f64; 2],
    block: [f64; 2],
    goal: [f64; 2],
    pub(crate) ticks: usize,
    prev_dist: f64,
}

impl PushBlock {
    pub const STATE_DIM: usize = 8;

    pub fn new(config: EnvConfig) -> Self {
        Self {
            config,
            pos: [0.0; 2],
            vel: [0.0; 2],
            block: [0.0; 2],
            goal: [0.0; 2],
            ticks: 0,
            prev_dist: 0.0,
        }
    }

    /// Block on `[-0.6, 0.6]^2`, goal on `[-0.8, 0.8]^2` at least 0.4 from
    /// the block, agent on `[-1, 1]^2` at least 0.4 from the block.
    pub fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        let (pos, goal, block) = match &self.config.pinned {
            Some(Pinned { start, goal, block }) => (*start, *goal, block.unwrap_or([0.0, 0.0])),
            None => {
                let block = [rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)];
                let goal = loop {
                    let g = [rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)];
                    if dist(g, block) >= 0.4 {
                        break g;
                    }
                };
                let pos = loop {
                    let p = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
                    if dist(p, block) >= 0.4 {
                        break p;
                    }
                };
                (pos, goal, block)
            }
        };
        self.pos = pos;
        self.goal = goal;
        self.block = block;
        self.vel = [0.0; 2];
        self.ticks = 0;
        self.prev_dist = dist(block, goal);
        self.state()
    }

    pub fn state(&self) -> Vec<f64> {
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            self.block[0] - self.pos[0],
            self.block[1] - self.pos[1],
            self.goal[0] - self.block[0],
            self.goal[1] - self.block[1],
        ]
    }

    pub fn block(&self) -> [f64; 2] {
        self.block
    }

    pub fn is_success(&self) -> bool {
        dist(self.block, self.goal) <= self.config.goal_tolerance
    }

    pub fn step(&mut self, a: [f64; 2]) -> StepResult {
        for i in 0..2 {
            self.vel[i] += ACCEL_GAIN * DT * a[i];
        }
        let speed = (self.vel[0] * self.vel[0] + self.vel[1] * self.vel[1]).sqrt();
        if speed > MAX_SPEED {
            let s = MAX_SPEED / speed;
            self.vel = [self.vel[0] * s, self.vel[1] * s];
        }
        for i in 0..2 {
            self.pos[i] += DT * self.vel[i];
            if self.pos[i].abs() > ARENA {
                self.pos[i] = self.pos[i].clamp(-ARENA, ARENA);
                self.vel[i] = 0.0;
            }
        }
        let gap = dist(self.pos, self.block);
        if gap < CONTACT {
            let n = if gap > 1e-12 {
                [(self.block[0] - self.pos[0]) / gap, (self.block[1] - self.pos[1]) / gap]
            } else {
                [1.0, 0.0]
            };
            let push = CONTACT - gap;
            for i in 0..2 {
                self.block[i] = (self.block[i] + push * n[i]).clamp(-ARENA, ARENA);
            }
            let into = self.vel[0] * n[0] + self.vel[1] * n[1];
            if into > 0.0 {
                // block soaks up half of the normal velocity
                self.vel[0] -= 0.5 * into * n[0];
                self.vel[1] -= 0.5 * into * n[1];
            }
        }
        self.ticks += 1;
        let d = dist(self.block, self.goal);
        let terminal = d <= self.config.goal_tolerance;
        let bonus = if terminal { 1.0 } else { 0.0 };
        let reward = match self.config.reward {
            RewardMode::Sparse => bonus,
            RewardMode::Shaped => bonus + (self.prev_dist - d),
        };
        self.prev_dist = d;
        StepResult {
            state: self.state(),
            reward,
            terminal,
            truncated: !terminal && self.ticks >= self.config.horizon,
        }
    }

    /// Scripted pusher working in the block frame: circle around to the far
    /// side of the block, line up behind it, then drive it toward the goal.
    pub fn scripted_action(&self, quality: &DemoQuality, rng: &mut Rng) -> Vec<f64> {
        let to_goal = [self.goal[0] - self.block[0], self.goal[1] - self.block[1]];
        let gd = (to_goal[0] * to_goal[0] + to_goal[1] * to_goal[1]).sqrt().max(1e-9);
        let dir = [to_goal[0] / gd, to_goal[1] / gd];
        let side = [-dir[1], dir[0]];
        let rel = [self.pos[0] - self.block[0], self.pos[1] - self.block[1]];
        let along = rel[0] * dir[0] + rel[1] * dir[1];
        let lateral = rel[0] * side[0] + rel[1] * side[1];
        let at = |a: f64, l: f64| [self.block[0] + a * dir[0] + l * side[0], self.block[1] + a * dir[1] + l * side[1]];
        let (target, kp) = if along < -0.5 * CONTACT && lateral.abs() < 0.05 {
            (at(0.3, 0.0), 0.6 * KP)
        } else if along < -0.5 * CONTACT {
            (at(-(CONTACT + 0.06), 0.0), KP)
        } else {
            // pass beside the block, clear of contact
            let s = if lateral >= 0.0 { 1.0 } else { -1.0 };
            (at(-(CONTACT + 0.1), s * (CONTACT + 0.1)), KP)
        };
        let err = [target[0] - self.pos[0], target[1] - self.pos[1]];
        let (angle, noise) = match quality {
            DemoQuality::Expert => (0.0, 0.0),
            DemoQuality::Suboptimal { bias_angle, noise } => (*bias_angle, *noise),
        };
        let (sn, cs) = angle.sin_cos();
        let rot = [cs * err[0] - sn * err[1], sn * err[0] + cs * err[1]];
        let mut a = vec![kp * rot[0] - KD * self.vel[0], kp * rot[1] - KD * self.vel[1]];
        if noise > 0.0 {
            for ai in a.iter_mut() {
                *ai += noise * rng.normal();
            }
        }
        a.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        a
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, Environment};

    #[test]
    fn block_moves_only_on_contact() {
        let mut cfg = EnvConfig::push_block();
        cfg.pinned = Some(Pinned {
            start: [-0.5, 0.0],
            goal: [0.6, 0.0],
            block: Some([0.0, 0.0]),
        });
        let mut env = Environment::new(cfg).unwrap();
        env.reset(&mut Rng::new(0));
        let r = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(&r.state[4..6], &[0.5, 0.0]);
        let mut moved = false;
        for _ in 0..30 {
            let r = env.step(&[1.0, 0.0]).unwrap();
            if r.state[6] < 0.6 - 1e-12 {
                moved = true;
                // block pushed along +x, never sideways
                assert!(r.state[7].abs() < 1e-12);
                break;
            }
        }
        assert!(moved);
    }

    #[test]
    fn seeded_reset_and_separation() {
        let mut env = Environment::new(EnvConfig::push_block()).unwrap();
        let mut rng = Rng::new(1);
        for _ in 0..100 {
            let s = env.reset(&mut rng);
            assert!((s[4] * s[4] + s[5] * s[5]).sqrt() >= 0.4);
            assert!((s[6] * s[6] + s[7] * s[7]).sqrt() >= 0.4);
        }
        let a = env.reset(&mut Rng::new(9));
        let b = env.reset(&mut Rng::new(9));
        assert_eq!(a, b);
    }

    #[test]
    fn expert_usually_succeeds() {
        let mut env = Environment::new(EnvConfig::push_block()).unwrap();
        let mut rng = Rng::new(2);
        let mut wins = 0;
        for _ in 0..50 {
            env.reset(&mut rng);
            loop {
                let a = env.scripted_action(&DemoQuality::Expert, &mut rng);
                let r = env.step(&a).unwrap();
                if r.terminal {
                    wins += 1;
                }
                if r.episode_over() {
                    break;
                }
            }
        }
        assert!(wins >= 35, "expert pushed {wins}/50");
    }
}

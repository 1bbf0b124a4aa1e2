//! Planar double-integrator point mass that must reach a goal disc.
//!
//! Dynamics per tick (semi-implicit Euler, `dt = 0.1`, gain `g = 2`):
//!
//! ```text
//! v' = clamp_speed(v + g * dt * a)
//! p' = p + dt * v'
//! ```
//!
//! From rest with a constant action `a` and no speed clamp this gives
//! `v_k = k g dt a` and `p_k = p_0 + g dt^2 a k (k + 1) / 2`.
//! The arena is the square `[-ARENA, ARENA]^2`; hitting a wall zeroes the
//! normal velocity. State layout: `[px, py, vx, vy, gx - px, gy - py]`.

use super::{DemoQuality, EnvConfig, Pinned, RewardMode, StepResult};
use crate::numkit::Rng;

pub const DT: f64 = 0.1;
pub const ACCEL_GAIN: f64 = 2.0;
pub const MAX_SPEED: f64 = 2.0;
pub const ARENA: f64 = 1.5;
/// Minimum start-goal separation of the initial-state distribution.
pub const MIN_SEPARATION: f64 = 0.6;

/// Proportional-derivative gains of the scripted controller.
pub const KP: f64 = 3.0;
pub const KD: f64 = 2.2;

#[derive(Debug, Clone)]
pub struct PointReach {
    pub(crate) config: EnvConfig,
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    pub(crate) ticks: usize,
    prev_dist: f64,
}

impl PointReach {
    pub const STATE_DIM: usize = 6;

    pub fn new(config: EnvConfig) -> Self {
        Self {
            config,
            pos: [0.0; 2],
            vel: [0.0; 2],
            goal: [0.0; 2],
            ticks: 0,
            prev_dist: 0.0,
        }
    }

    /// Start and goal uniform on `[-1, 1]^2`, at least `MIN_SEPARATION`
    /// apart, at rest. A pinned configuration overrides the draw.
    pub fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        let (pos, goal) = match &self.config.pinned {
            Some(Pinned { start, goal, .. }) => (*start, *goal),
            None => loop {
                let p = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
                let g = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
                if dist(p, g) >= MIN_SEPARATION {
                    break (p, g);
                }
            },
        };
        self.pos = pos;
        self.goal = goal;
        self.vel = [0.0; 2];
        self.ticks = 0;
        self.prev_dist = dist(pos, goal);
        self.state()
    }

    pub fn state(&self) -> Vec<f64> {
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            self.goal[0] - self.pos[0],
            self.goal[1] - self.pos[1],
        ]
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn velocity(&self) -> [f64; 2] {
        self.vel
    }

    pub fn is_success(&self) -> bool {
        dist(self.pos, self.goal) <= self.config.goal_tolerance
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
        self.ticks += 1;
        let d = dist(self.pos, self.goal);
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

    /// PD controller toward the goal. The suboptimal variant rotates the
    /// position error by a fixed approach-angle bias and adds Gaussian noise.
    pub fn scripted_action(&self, quality: &DemoQuality, rng: &mut Rng) -> Vec<f64> {
        let err = [self.goal[0] - self.pos[0], self.goal[1] - self.pos[1]];
        let (angle, noise) = match quality {
            DemoQuality::Expert => (0.0, 0.0),
            DemoQuality::Suboptimal { bias_angle, noise } => (*bias_angle, *noise),
        };
        let (sn, cs) = angle.sin_cos();
        let rot = [cs * err[0] - sn * err[1], sn * err[0] + cs * err[1]];
        let mut a = vec![KP * rot[0] - KD * self.vel[0], KP * rot[1] - KD * self.vel[1]];
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

//! Sliding-window trajectory buffer.
//!
//! Holds the `W` most recent rollouts. Each transition carries the latent that
//! was actually decoded for control, the frozen CFM draws, and the loss cached
//! under the rollout parameters.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FpoError, Result};
use crate::flow_actor::CfmSample;
use crate::numkit::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub latent: Vec<f64>,
    /// Low-level actions executed for this policy step, flattened tick-major.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Terminal state reached (bootstrap masked).
    pub done: bool,
    /// Episode cut by the time limit (bootstrap kept).
    pub truncated: bool,
    /// Per-sample loss under the rollout parameters.
    pub loss_init: f64,
    /// Frozen CFM draws; empty for policies with a tractable likelihood.
    pub draws: Vec<CfmSample>,
    pub rollout_id: u64,
    pub step_index: usize,
}

impl Transition {
    /// Episode ends after this transition, for either reason.
    pub fn ends_episode(&self) -> bool {
        self.done || self.truncated
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub id: u64,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryBuffer {
    window: usize,
    rollouts: VecDeque<Rollout>,
    last_id: Option<u64>,
}

impl TrajectoryBuffer {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(FpoError::invalid("window", 0, ">= 1"));
        }
        Ok(Self {
            window,
            rollouts: VecDeque::with_capacity(window + 1),
            last_id: None,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Number of retained transitions.
    pub fn len(&self) -> usize {
        self.rollouts.iter().map(|r| r.transitions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn num_rollouts(&self) -> usize {
        self.rollouts.len()
    }

    pub fn rollout_ids(&self) -> Vec<u64> {
        self.rollouts.iter().map(|r| r.id).collect()
    }

    /// Append a rollout, evicting the oldest beyond the window.
    ///
    /// Every transition must carry the same `rollout_id`, which must exceed
    /// all previously pushed ids, and step indices must run `0, 1, 2, ...`.
    pub fn push_rollout(&mut self, transitions: Vec<Transition>) -> Result<()> {
        let first = transitions
            .first()
            .ok_or_else(|| FpoError::MalformedTrajectory("empty rollout".into()))?;
        let id = first.rollout_id;
        if let Some(last) = self.last_id {
            if id <= last {
                return Err(FpoError::MalformedTrajectory(format!(
                    "rollout id {id} is not newer than {last}"
                )));
            }
        }
        for (i, t) in transitions.iter().enumerate() {
            if t.rollout_id != id {
                return Err(FpoError::MalformedTrajectory(format!(
                    "step {i} has rollout id {} instead of {id}",
                    t.rollout_id
                )));
            }
            if t.step_index != i {
                return Err(FpoError::MalformedTrajectory(format!(
                    "non-contiguous step index {} at position {i}",
                    t.step_index
                )));
            }
        }
        self.last_id = Some(id);
        self.rollouts.push_back(Rollout { id, transitions });
        while self.rollouts.len() > self.window {
            self.rollouts.pop_front();
        }
        Ok(())
    }

    /// Rollouts oldest first, each in step order.
    pub fn iter_ordered(&self) -> impl Iterator<Item = &Rollout> {
        self.rollouts.iter()
    }

    /// All transitions in flat order (rollout-major, then step).
    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.rollouts.iter().flat_map(|r| r.transitions.iter())
    }

    /// Transition at a flat index.
    pub fn get(&self, mut index: usize) -> Option<&Transition> {
        for r in &self.rollouts {
            if index < r.transitions.len() {
                return r.transitions.get(index);
            }
            index -= r.transitions.len();
        }
        None
    }

    /// Uniform sample of flat indices: without replacement when the batch fits
    /// in the population, with replacement otherwise.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        let n = self.len();
        if n == 0 {
            return Err(FpoError::Empty("trajectory buffer"));
        }
        if batch_size > n {
            return Ok((0..batch_size).map(|_| rng.index(n)).collect());
        }
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..batch_size {
            let j = i + rng.index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(batch_size);
        Ok(pool)
    }

    pub fn sample_batch(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<&Transition>> {
        let flat: Vec<&Transition> = self.transitions().collect();
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| flat[i])
            .collect())
    }

    /// Overwrite every cached `loss_init` (used when the rollout parameters are
    /// re-synchronized).
    pub fn recache<F>(&mut self, mut loss: F) -> Result<()>
    where
        F: FnMut(&Transition) -> Result<f64>,
    {
        for r in self.rollouts.iter_mut() {
            for t in r.transitions.iter_mut() {
                t.loss_init = loss(t)?;
            }
        }
        Ok(())
    }

    /// One JSON object per line, schema = [`Transition`].
    pub fn dump_jsonl(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| FpoError::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for t in self.transitions() {
            let line = serde_json::to_string(t).map_err(|e| FpoError::Checkpoint(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| FpoError::io(path, e))?;
        }
        w.flush().map_err(|e| FpoError::io(path, e))
    }
}

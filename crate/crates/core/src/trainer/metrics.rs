/// One deterministic evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub env_steps: u64,
    pub success_rate: f64,
    pub mean_return: f64,
    pub mean_length: f64,
}

/// Diagnostics of one inner update step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRow {
    pub env_steps: u64,
    /// Global inner-step counter, starting at 1.
    pub update: u64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub mean_loss_drop: f64,
    /// Raw (pre-standardization) minibatch advantage statistics.
    pub adv_mean: f64,
    pub adv_std: f64,
    /// Policy entropy, for policies where it is tractable.
    pub entropy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub evals: Vec<EvalRow>,
    pub updates: Vec<UpdateRow>,
}

impl RunMetrics {
    /// Evaluation of the untouched prior, if recorded.
    pub fn prior(&self) -> Option<&EvalRow> {
        self.evals.first().filter(|r| r.env_steps == 0)
    }

    pub fn final_eval(&self) -> Option<&EvalRow> {
        self.evals.last()
    }

    /// Eval rows strictly increasing in env steps; every value finite.
    pub fn is_well_formed(&self) -> bool {
        let evals_ok = self.evals.windows(2).all(|w| w[0].env_steps < w[1].env_steps)
            && self.evals.iter().all(|r| {
                [r.success_rate, r.mean_return, r.mean_length]
                    .iter()
                    .all(|v| v.is_finite())
            });
        let updates_ok = self.updates.windows(2).all(|w| w[0].update < w[1].update)
            && self.updates.iter().all(|r| {
                [
                    r.actor_loss,
                    r.critic_loss,
                    r.mean_ratio,
                    r.clip_fraction,
                    r.mean_loss_drop,
                    r.adv_mean,
                    r.adv_std,
                    r.entropy.unwrap_or(0.0),
                ]
                .iter()
                .all(|v| v.is_finite())
            });
        evals_ok && updates_ok
    }
}

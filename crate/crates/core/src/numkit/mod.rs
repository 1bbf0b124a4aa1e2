//! Small dense numerical kernel: seeded RNG, MLPs with analytic gradients,
//! Adam, and finite-difference checking. Everything is `f64`.

pub mod adam;
pub mod gradcheck;
pub mod mlp;
pub mod rng;

pub use adam::{clip_grad_norm, AdamConfig, AdamState, StepOutcome};
pub use gradcheck::{central_difference, grad_check, relative_error};
pub use mlp::{Activation, Mlp, MlpGrads, Trace};
pub use rng::Rng;

/// Squared L2 norm.
pub fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Population mean and standard deviation. Empty input gives `(0, 0)`.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

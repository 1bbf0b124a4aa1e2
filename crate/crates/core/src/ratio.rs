//! Likelihood-free ratio proxy and the clipped actor surrogate.
//!
//! For a minibatch of stored `(s, x)` pairs, the per-sample loss drop
//! `d_i = l_old_i - l_new_i` is standardized with batch statistics and mapped
//! through `rho_i = exp(beta * z_i)`. The ratios then enter a PPO clipped
//! surrogate. Batch statistics are constants for differentiation; gradient
//! flows from the surrogate through `rho` and `z` into `l_new`.

use crate::error::{check_dim, check_finite, FpoError, Result};
use crate::numkit::mean_std;

/// Below this batch std the z-scores are defined as zero.
pub const SIGMA_FLOOR: f64 = 1e-8;
/// `|z|` cap applied inside the exponential.
pub const Z_MAX: f64 = 5.0;

/// Loss reduction `l_old - l_new` on the same stored sample.
pub fn loss_drop(loss_old: f64, loss_new: f64) -> Result<f64> {
    if !loss_old.is_finite() || !loss_new.is_finite() {
        return Err(FpoError::NonFinite("loss drop inputs".into()));
    }
    Ok(loss_old - loss_new)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioBatch {
    pub loss_drops: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub z: Vec<f64>,
    pub ratios: Vec<f64>,
    pub beta: f64,
    pub sigma_floor: f64,
}

impl RatioBatch {
    /// Whether the batch std fell below the floor (all `z = 0`, `rho = 1`).
    pub fn is_degenerate(&self) -> bool {
        self.std < self.sigma_floor
    }

    /// `d rho_i / d l_new_i` with the batch statistics held fixed.
    ///
    /// In the degenerate case the forward value is pinned to `rho = 1`, but the
    /// derivative is taken at scale `sigma_floor` so a freshly synchronized
    /// policy (every drop exactly zero) still receives a descent direction.
    pub fn dratio_dloss_new(&self, i: usize) -> f64 {
        let z = self.z[i];
        if z.abs() > Z_MAX {
            return 0.0;
        }
        let scale = self.std.max(self.sigma_floor);
        -self.beta * self.ratios[i] / scale
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    pub fn mean_ratio(&self) -> f64 {
        self.ratios.iter().sum::<f64>() / self.ratios.len().max(1) as f64
    }
}

/// Batch-standardize loss drops and map them to ratio proxies.
pub fn standardize_and_map(loss_drops: &[f64], beta: f64, sigma_floor: f64) -> Result<RatioBatch> {
    if loss_drops.is_empty() {
        return Err(FpoError::Empty("ratio batch"));
    }
    check_finite("loss drops", loss_drops)?;
    let (mean, std) = mean_std(loss_drops);
    let z: Vec<f64> = if std < sigma_floor {
        vec![0.0; loss_drops.len()]
    } else {
        loss_drops.iter().map(|d| (d - mean) / std).collect()
    };
    let ratios = z
        .iter()
        .map(|zi| (beta * zi.clamp(-Z_MAX, Z_MAX)).exp())
        .collect();
    Ok(RatioBatch {
        loss_drops: loss_drops.to_vec(),
        mean,
        std,
        z,
        ratios,
        beta,
        sigma_floor,
    })
}

/// Value and per-element ratio gradient of a surrogate loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub loss: f64,
    pub grad_ratio: Vec<f64>,
    /// Fraction of elements on the clipped branch.
    pub clip_fraction: f64,
}

/// `-mean(min(rho A, clip(rho, 1 - eps, 1 + eps) A))`. Ties resolve to the
/// unclipped branch.
pub fn clipped_surrogate(ratios: &[f64], advantages: &[f64], clip_eps: f64) -> Result<Surrogate> {
    check_dim("surrogate advantages", ratios.len(), advantages.len())?;
    if ratios.is_empty() {
        return Err(FpoError::Empty("surrogate batch"));
    }
    let n = ratios.len() as f64;
    let mut loss = 0.0;
    let mut clipped = 0usize;
    let mut grad_ratio = Vec::with_capacity(ratios.len());
    for (&rho, &adv) in ratios.iter().zip(advantages) {
        let unclipped = rho * adv;
        let bounded = rho.clamp(1.0 - clip_eps, 1.0 + clip_eps) * adv;
        if unclipped <= bounded {
            loss -= unclipped;
            grad_ratio.push(-adv / n);
        } else {
            loss -= bounded;
            grad_ratio.push(0.0);
            clipped += 1;
        }
    }
    Ok(Surrogate {
        loss: loss / n,
        grad_ratio,
        clip_fraction: clipped as f64 / n,
    })
}

/// `-mean(rho A)`; the surrogate with clipping removed.
pub fn unclipped_surrogate(ratios: &[f64], advantages: &[f64]) -> Result<Surrogate> {
    check_dim("surrogate advantages", ratios.len(), advantages.len())?;
    if ratios.is_empty() {
        return Err(FpoError::Empty("surrogate batch"));
    }
    let n = ratios.len() as f64;
    let loss = -ratios.iter().zip(advantages).map(|(r, a)| r * a).sum::<f64>() / n;
    Ok(Surrogate {
        loss,
        grad_ratio: advantages.iter().map(|a| -a / n).collect(),
        clip_fraction: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedAdvantages {
    pub values: Vec<f64>,
    /// Batch was too small to standardize and was passed through.
    pub passthrough: bool,
}

/// Zero-mean, unit-std advantages within a minibatch (population std).
pub fn standardize_advantages(advantages: &[f64], sigma_floor: f64) -> StandardizedAdvantages {
    if advantages.len() < 2 {
        return StandardizedAdvantages {
            values: advantages.to_vec(),
            passthrough: true,
        };
    }
    let (mean, std) = mean_std(advantages);
    let values = if std < sigma_floor {
        vec![0.0; advantages.len()]
    } else {
        advantages.iter().map(|a| (a - mean) / std).collect()
    };
    StandardizedAdvantages {
        values,
        passthrough: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loss_drop_examples() {
        assert!((loss_drop(0.5, 0.3).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(loss_drop(0.7, 0.7).unwrap(), 0.0);
        assert!((loss_drop(0.1, 0.4).unwrap() + 0.3).abs() < 1e-15);
        assert!(loss_drop(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn constant_batch_hits_floor() {
        let b = standardize_and_map(&[0.3, 0.3, 0.3], 1.0, SIGMA_FLOOR).unwrap();
        assert!(b.is_degenerate());
        assert!(b.z.iter().all(|&z| z == 0.0));
        assert!(b.ratios.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn symmetric_pair() {
        let b = standardize_and_map(&[-1.0, 1.0], 1.0, SIGMA_FLOOR).unwrap();
        assert_eq!(b.z, vec![-1.0, 1.0]);
        assert!((b.ratios[0] - 0.36787944117144233).abs() < 1e-15);
        assert!((b.ratios[1] - 2.718281828459045).abs() < 1e-15);
    }

    #[test]
    fn zero_beta_gives_unit_ratios() {
        let b = standardize_and_map(&[0.1, -3.0, 7.0], 0.0, SIGMA_FLOOR).unwrap();
        assert!(b.ratios.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn outlier_ratio_is_capped() {
        let mut drops = vec![0.0; 99];
        drops.push(100.0);
        let b = standardize_and_map(&drops, 1.0, SIGMA_FLOOR).unwrap();
        assert!(b.z[99] > Z_MAX);
        assert_eq!(b.ratios[99], Z_MAX.exp());
        assert_eq!(b.dratio_dloss_new(99), 0.0);
    }

    #[test]
    fn surrogate_clipped_above() {
        let s = clipped_surrogate(&[1.3], &[1.0], 0.2).unwrap();
        assert!((s.loss + 1.2).abs() < 1e-15);
        assert_eq!(s.grad_ratio, vec![0.0]);
        assert_eq!(s.clip_fraction, 1.0);
    }

    #[test]
    fn surrogate_clipped_below() {
        let s = clipped_surrogate(&[0.5], &[-1.0], 0.2).unwrap();
        assert!((s.loss - 0.8).abs() < 1e-15);
        assert_eq!(s.grad_ratio, vec![0.0]);
    }

    #[test]
    fn surrogate_unit_ratio() {
        let adv = [0.7, -1.3, 2.0];
        let s = clipped_surrogate(&[1.0; 3], &adv, 0.2).unwrap();
        let mean: f64 = adv.iter().sum::<f64>() / 3.0;
        assert!((s.loss + mean).abs() < 1e-15);
        for (g, a) in s.grad_ratio.iter().zip(&adv) {
            assert_eq!(*g, -a / 3.0);
        }
        assert_eq!(s.clip_fraction, 0.0);
    }

    #[test]
    fn surrogate_boundary_tie_is_unclipped() {
        let s = clipped_surrogate(&[1.2], &[1.0], 0.2).unwrap();
        assert_eq!(s.grad_ratio, vec![-1.0]);
    }

    #[test]
    fn unclipped_ignores_bounds() {
        let s = unclipped_surrogate(&[3.0], &[1.0]).unwrap();
        assert_eq!(s.loss, -3.0);
        assert_eq!(s.grad_ratio, vec![-1.0]);
    }

    #[test]
    fn advantage_standardization() {
        assert_eq!(standardize_advantages(&[1.0, 3.0], SIGMA_FLOOR).values, vec![-1.0, 1.0]);
        assert_eq!(standardize_advantages(&[2.0; 4], SIGMA_FLOOR).values, vec![0.0; 4]);
        let v = standardize_advantages(&[0.0, 1.0, 2.0, 3.0], SIGMA_FLOOR).values;
        let expected = [-1.3416407864998738, -0.4472135954999579, 0.4472135954999579, 1.3416407864998738];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let one = standardize_advantages(&[5.0], SIGMA_FLOOR);
        assert!(one.passthrough);
        assert_eq!(one.values, vec![5.0]);
    }

    #[test]
    fn chain_rule_matches_finite_differences_through_surrogate() {
        // l_new -> drop -> z (frozen stats) -> rho -> clipped loss
        let l_old = [0.9, 1.4, 0.2, 0.65, 1.1];
        let l_new = [0.8, 1.5, 0.25, 0.5, 1.0];
        let adv = [1.0, -0.5, 0.3, -1.2, 0.8];
        let (beta, eps) = (0.7, 0.2);
        let drops: Vec<f64> = l_old.iter().zip(&l_new).map(|(a, b)| a - b).collect();
        let batch = standardize_and_map(&drops, beta, SIGMA_FLOOR).unwrap();
        let s = clipped_surrogate(&batch.ratios, &adv, eps).unwrap();
        let (mu, sd) = (batch.mean, batch.std);
        let loss_at = |ln: &[f64]| {
            let rho: Vec<f64> = l_old
                .iter()
                .zip(ln)
                .map(|(o, n)| (beta * (((o - n) - mu) / sd).clamp(-Z_MAX, Z_MAX)).exp())
                .collect();
            clipped_surrogate(&rho, &adv, eps).unwrap().loss
        };
        let h = 1e-6;
        for i in 0..l_new.len() {
            let analytic = s.grad_ratio[i] * batch.dratio_dloss_new(i);
            let mut up = l_new;
            let mut dn = l_new;
            up[i] += h;
            dn[i] -= h;
            let fd = (loss_at(&up) - loss_at(&dn)) / (2.0 * h);
            assert!((analytic - fd).abs() < 1e-6, "{i}: {analytic} vs {fd}");
        }
    }

    proptest! {
        #[test]
        fn z_scores_are_standardized(drops in proptest::collection::vec(-10.0f64..10.0, 2..40)) {
            let b = standardize_and_map(&drops, 1.0, SIGMA_FLOOR).unwrap();
            prop_assert!(b.ratios.iter().all(|&r| r > 0.0));
            if !b.is_degenerate() {
                let (m, s) = mean_std(&b.z);
                prop_assert!(m.abs() < 1e-10);
                prop_assert!((s - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn ratio_mapping_preserves_order(drops in proptest::collection::vec(-1.0f64..1.0, 2..30), beta in 0.1f64..3.0) {
            let b = standardize_and_map(&drops, beta, SIGMA_FLOOR).unwrap();
            for i in 0..drops.len() {
                for j in 0..drops.len() {
                    if drops[i] > drops[j] && !b.is_degenerate() && b.z[i].abs() <= Z_MAX && b.z[j].abs() <= Z_MAX {
                        prop_assert!(b.ratios[i] > b.ratios[j]);
                    }
                }
            }
        }

        #[test]
        fn clipped_regimes_have_zero_gradient(rho in 0.0f64..3.0, adv in -3.0f64..3.0, eps in 0.05f64..0.5) {
            let s = clipped_surrogate(&[rho], &[adv], eps).unwrap();
            if (rho > 1.0 + eps && adv > 0.0) || (rho < 1.0 - eps && adv < 0.0) {
                prop_assert_eq!(s.grad_ratio[0], 0.0);
            }
        }
    }
}

//! Central-difference gradient checking.

use crate::error::{FpoError, Result};

/// Central differences of a scalar function at `params`.
pub fn central_difference<F>(mut loss_fn: F, params: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = loss_fn(&probe)?;
        probe[i] = orig - step;
        let down = loss_fn(&probe)?;
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(FpoError::NonFinite(format!("loss during finite difference of parameter {i}")));
        }
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Relative error used throughout the gradient checks:
/// `|a - b| / max(1, |a|, |b|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Max relative error between `analytic` and central differences of `loss_fn`.
pub fn grad_check<F>(loss_fn: F, params: &[f64], analytic: &[f64], fd_step: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if analytic.len() != params.len() {
        return Err(FpoError::DimensionMismatch {
            context: "grad_check analytic gradient",
            expected: params.len(),
            got: analytic.len(),
        });
    }
    let numeric = central_difference(loss_fn, params, fd_step)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max))
}

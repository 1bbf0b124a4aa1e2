//! Python bindings: ratio and advantage math, config handling, training and
//! checkpoint evaluation.

use std::path::PathBuf;

use fpo_core::critic;
use fpo_core::harness::{load_config, Checkpoint};
use fpo_core::ratio;
use fpo_core::trainer::{self, TrainerConfig};
use fpo_core::FpoError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: FpoError) -> PyErr {
    match e {
        FpoError::InvalidConfig { .. } | FpoError::Parse { .. } | FpoError::DimensionMismatch { .. } | FpoError::Empty(_) | FpoError::NonFinite(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn config_from(toml_text: Option<&str>) -> PyResult<TrainerConfig> {
    let cfg = match toml_text {
        Some(t) => TrainerConfig::from_toml(t).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => TrainerConfig::default(),
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Standardized ratio proxies `exp(beta * z)` of a batch of loss drops.
#[pyfunction]
#[pyo3(signature = (loss_drops, beta = 1.0, sigma_floor = 1e-8))]
fn ratios(loss_drops: Vec<f64>, beta: f64, sigma_floor: f64) -> PyResult<Vec<f64>> {
    Ok(ratio::standardize_and_map(&loss_drops, beta, sigma_floor).map_err(err)?.ratios)
}

/// Clipped surrogate loss and clip fraction.
#[pyfunction]
#[pyo3(signature = (ratios, advantages, clip_eps = 0.2))]
fn clipped_surrogate(ratios: Vec<f64>, advantages: Vec<f64>, clip_eps: f64) -> PyResult<(f64, f64)> {
    let s = ratio::clipped_surrogate(&ratios, &advantages, clip_eps).map_err(err)?;
    Ok((s.loss, s.clip_fraction))
}

/// GAE over one segment; `values` has one more entry than `rewards`.
#[pyfunction]
fn gae(rewards: Vec<f64>, values: Vec<f64>, dones: Vec<bool>, gamma: f64, lam: f64) -> PyResult<Vec<f64>> {
    critic::gae(&rewards, &values, &dones, gamma, lam).map_err(err)
}

/// Default configuration as TOML text.
#[pyfunction]
fn default_config() -> String {
    TrainerConfig::default().to_toml()
}

#[pyfunction]
#[pyo3(signature = (toml_text = None))]
fn config_hash(toml_text: Option<&str>) -> PyResult<String> {
    Ok(config_from(toml_text)?.hash())
}

/// Pretrain and fine-tune. Returns a dict with `evals` as
/// `(env_steps, success_rate, mean_return, mean_length)` tuples.
#[pyfunction]
#[pyo3(signature = (toml_text = None, config_path = None))]
fn train<'py>(py: Python<'py>, toml_text: Option<&str>, config_path: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = match config_path {
        Some(p) => load_config(&p).map_err(err)?,
        None => config_from(toml_text)?,
    };
    let out = py.detach(|| trainer::train_from_prior(&cfg, trainer::build_prior(&cfg)?)).map_err(err)?;
    let evals: Vec<(u64, f64, f64, f64)> = out
        .metrics
        .evals
        .iter()
        .map(|r| (r.env_steps, r.success_rate, r.mean_return, r.mean_length))
        .collect();
    let d = PyDict::new(py);
    d.set_item("config_hash", cfg.hash())?;
    d.set_item("env_steps", out.env_steps)?;
    d.set_item("evals", evals)?;
    d.set_item("updates", out.metrics.updates.len())?;
    Ok(d)
}

/// Deterministic success rate of a saved checkpoint.
#[pyfunction]
#[pyo3(signature = (path, episodes = 50, seed = 0))]
fn evaluate(py: Python<'_>, path: PathBuf, episodes: usize, seed: u64) -> PyResult<(f64, f64, f64)> {
    let ck = Checkpoint::load(&path).map_err(err)?;
    let s = py
        .detach(|| trainer::evaluate(&ck.policy, &ck.decoder, &ck.config.env_config(), episodes, seed))
        .map_err(err)?;
    Ok((s.success_rate, s.mean_return, s.mean_length))
}

#[pymodule]
fn fpo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(ratios, m)?)?;
    m.add_function(wrap_pyfunction!(clipped_surrogate, m)?)?;
    m.add_function(wrap_pyfunction!(gae, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}

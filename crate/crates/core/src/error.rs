use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the training stack.
#[derive(Debug, Error)]
pub enum FpoError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("euler sampling produced a non-finite state at step {step}")]
    Sampling { step: usize },

    #[error("invalid config field `{field}` = {value}: allowed {allowed}")]
    InvalidConfig {
        field: String,
        value: String,
        allowed: String,
    },

    #[error("malformed trajectory: {0}")]
    MalformedTrajectory(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("incompatible checkpoint version {found} (this build reads version {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("base decoder parameters changed (hash {expected} became {found})")]
    DecoderMutated { expected: String, found: String },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FpoError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FpoError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(
        field: impl Into<String>,
        value: impl ToString,
        allowed: impl Into<String>,
    ) -> Self {
        FpoError::InvalidConfig {
            field: field.into(),
            value: value.to_string(),
            allowed: allowed.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, FpoError>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(FpoError::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}

pub(crate) fn check_finite(context: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FpoError::NonFinite(context.to_string()))
    }
}

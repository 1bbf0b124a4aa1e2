use std::path::Path;

use crate::error::{FpoError, Result};
use crate::trainer::TrainerConfig;

/// 1-based line of byte `offset` in `text`.
pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())].iter().filter(|b| **b == b'\n').count() + 1
}

/// Parse TOML config text. Syntax errors and unknown keys carry the line of
/// the offending entry; range errors name the field and its allowed values.
pub fn parse_config(text: &str, origin: &Path) -> Result<TrainerConfig> {
    let cfg = TrainerConfig::from_toml(text).map_err(|e| FpoError::Parse {
        path: origin.to_path_buf(),
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        msg: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<TrainerConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| FpoError::io(path, e))?;
    parse_config(&text, path)
}

pub fn save_config(cfg: &TrainerConfig, path: &Path) -> Result<()> {
    std::fs::write(path, cfg.to_toml()).map_err(|e| FpoError::io(path, e))
}

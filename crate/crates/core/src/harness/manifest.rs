use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{FpoError, Result};
use crate::trainer::TrainerConfig;

/// Fixed file names inside a run directory.
pub mod layout {
    pub const CONFIG: &str = "config.toml";
    pub const METRICS: &str = "metrics.tsv";
    pub const PRIOR_CHECKPOINT: &str = "prior.ckpt";
    pub const FINAL_CHECKPOINT: &str = "final.ckpt";
    pub const DEMOS: &str = "demos.jsonl";
    pub const LATENTS: &str = "latents.jsonl";
    pub const ABLATION: &str = "ablation.txt";
    pub const PLOT: &str = "curves.svg";
    pub const MANIFEST: &str = "manifest.json";
}

/// Description of one run directory, written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub seeds: Vec<u64>,
    /// Seconds since the Unix epoch.
    pub start_timestamp: u64,
    pub run_dir: PathBuf,
    /// Files written so far, relative to `run_dir`.
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(config: &TrainerConfig, seeds: Vec<u64>, run_dir: &Path) -> Self {
        Self {
            config_hash: config.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds,
            start_timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            run_dir: run_dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    /// Path of `name` inside the run directory, recorded in the manifest.
    pub fn add(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.path(name)
    }

    pub fn create_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.run_dir).map_err(|e| FpoError::io(&self.run_dir, e))
    }

    pub fn save(&self) -> Result<()> {
        let path = self.path(layout::MANIFEST);
        let text = serde_json::to_string_pretty(self).map_err(|e| FpoError::Checkpoint(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| FpoError::io(&path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FpoError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| FpoError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

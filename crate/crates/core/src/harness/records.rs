//! Line-delimited JSON record files.
//!
//! The first line is a header object `{"config_hash": "...", "kind": "..."}`;
//! every following line is one record. Demonstration files hold one
//! [`DemoEpisode`] per line, latent dumps one [`LatentRecord`] per line.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::env::{BaseDecoder, DemoEpisode, EnvConfig};
use crate::error::{FpoError, Result};
use crate::trainer::{eval_episodes, Policy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub config_hash: String,
    pub kind: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseTag {
    Prior,
    Mid,
    Final,
}

/// One latent chosen by the policy during a deterministic evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub run_id: u64,
    pub phase: PhaseTag,
    /// Outcome of the episode the latent belongs to.
    pub success: bool,
    pub values: Vec<f64>,
}

pub fn write_records<T: Serialize>(path: &Path, header: &RecordHeader, records: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| FpoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", json(header)?).map_err(|e| FpoError::io(path, e))?;
    for r in records {
        writeln!(w, "{}", json(r)?).map_err(|e| FpoError::io(path, e))?;
    }
    w.flush().map_err(|e| FpoError::io(path, e))
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| FpoError::Checkpoint(e.to_string()))
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<(RecordHeader, Vec<T>)> {
    let file = std::fs::File::open(path).map_err(|e| FpoError::io(path, e))?;
    let err = |line: usize, msg: String| FpoError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut header = None;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| FpoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            header = Some(serde_json::from_str::<RecordHeader>(&line).map_err(|e| err(line_no, e.to_string()))?);
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| err(line_no, e.to_string()))?);
    }
    let header = header.ok_or_else(|| err(0, "missing header line".into()))?;
    Ok((header, out))
}

pub fn write_demos(path: &Path, config_hash: &str, demos: &[DemoEpisode]) -> Result<()> {
    let header = RecordHeader {
        config_hash: config_hash.into(),
        kind: "demos".into(),
    };
    write_records(path, &header, demos)
}

pub fn read_demos(path: &Path) -> Result<(RecordHeader, Vec<DemoEpisode>)> {
    read_records(path)
}

/// Latents of `episodes` deterministic evaluation episodes, tagged.
pub fn collect_latents(
    policy: &Policy,
    decoder: &BaseDecoder,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
    run_id: u64,
    phase: PhaseTag,
) -> Result<Vec<LatentRecord>> {
    let records = eval_episodes(policy, decoder, env_cfg, episodes, seed)?;
    Ok(records
        .into_iter()
        .flat_map(|ep| {
            let success = ep.success;
            ep.latents.into_iter().map(move |values| LatentRecord {
                run_id,
                phase,
                success,
                values,
            })
        })
        .collect())
}

pub fn write_latents(path: &Path, config_hash: &str, records: &[LatentRecord]) -> Result<()> {
    let header = RecordHeader {
        config_hash: config_hash.into(),
        kind: "latents".into(),
    };
    write_records(path, &header, records)
}

pub fn read_latents(path: &Path) -> Result<(RecordHeader, Vec<LatentRecord>)> {
    read_records(path)
}

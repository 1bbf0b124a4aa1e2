//! Metrics file: tab-separated text.
//!
//! ```text
//! # config_hash <16 hex digits>
//! kind  env_steps  update  success_rate  mean_return  mean_length  actor_loss  critic_loss  mean_ratio  clip_fraction  mean_loss_drop  adv_mean  adv_std  entropy
//! ```
//!
//! `kind` is `eval` or `update`. Columns that do not apply to a row hold `-`.
//! Reals are written as `{:.16e}` (17 significant digits), so reading a
//! file back reproduces every value bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{FpoError, Result};
use crate::trainer::{EvalRow, RunMetrics, UpdateRow};

pub const METRICS_HEADER: &str = "kind\tenv_steps\tupdate\tsuccess_rate\tmean_return\tmean_length\tactor_loss\tcritic_loss\tmean_ratio\tclip_fraction\tmean_loss_drop\tadv_mean\tadv_std\tentropy";
const COLUMNS: usize = 14;

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn metrics_to_string(metrics: &RunMetrics, config_hash: &str) -> String {
    let mut out = format!("# config_hash {config_hash}\n{METRICS_HEADER}\n");
    for r in &metrics.evals {
        let _ = writeln!(
            out,
            "eval\t{}\t-\t{}\t{}\t{}\t-\t-\t-\t-\t-\t-\t-\t-",
            r.env_steps,
            real(r.success_rate),
            real(r.mean_return),
            real(r.mean_length)
        );
    }
    for r in &metrics.updates {
        let _ = writeln!(
            out,
            "update\t{}\t{}\t-\t-\t-\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.env_steps,
            r.update,
            real(r.actor_loss),
            real(r.critic_loss),
            real(r.mean_ratio),
            real(r.clip_fraction),
            real(r.mean_loss_drop),
            real(r.adv_mean),
            real(r.adv_std),
            r.entropy.map(real).unwrap_or_else(|| "-".into())
        );
    }
    out
}

pub fn write_metrics(metrics: &RunMetrics, config_hash: &str, path: &Path) -> Result<()> {
    std::fs::write(path, metrics_to_string(metrics, config_hash)).map_err(|e| FpoError::io(path, e))
}

/// Parsed metrics plus the config hash from the header, if present.
pub fn parse_metrics(text: &str, origin: &Path) -> Result<(RunMetrics, Option<String>)> {
    let err = |line: usize, msg: String| FpoError::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut metrics = RunMetrics::default();
    let mut hash = None;
    let mut saw_header = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if let Some(rest) = raw.strip_prefix('#') {
            if let Some(h) = rest.trim().strip_prefix("config_hash") {
                hash = Some(h.trim().to_string());
            }
            continue;
        }
        if raw.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if raw != METRICS_HEADER {
                return Err(err(line, "expected the metrics header row".into()));
            }
            saw_header = true;
            continue;
        }
        let cells: Vec<&str> = raw.split('\t').collect();
        if cells.len() != COLUMNS {
            return Err(err(line, format!("expected {COLUMNS} columns, found {}", cells.len())));
        }
        let int = |c: usize| -> Result<u64> {
            cells[c]
                .parse()
                .map_err(|_| err(line, format!("column {c}: bad integer `{}`", cells[c])))
        };
        let float = |c: usize| -> Result<f64> {
            cells[c]
                .parse()
                .map_err(|_| err(line, format!("column {c}: bad number `{}`", cells[c])))
        };
        match cells[0] {
            "eval" => metrics.evals.push(EvalRow {
                env_steps: int(1)?,
                success_rate: float(3)?,
                mean_return: float(4)?,
                mean_length: float(5)?,
            }),
            "update" => metrics.updates.push(UpdateRow {
                env_steps: int(1)?,
                update: int(2)?,
                actor_loss: float(6)?,
                critic_loss: float(7)?,
                mean_ratio: float(8)?,
                clip_fraction: float(9)?,
                mean_loss_drop: float(10)?,
                adv_mean: float(11)?,
                adv_std: float(12)?,
                entropy: if cells[13] == "-" { None } else { Some(float(13)?) },
            }),
            other => return Err(err(line, format!("unknown row kind `{other}`"))),
        }
    }
    if !saw_header {
        return Err(err(0, "missing header row".into()));
    }
    Ok((metrics, hash))
}

pub fn read_metrics(path: &Path) -> Result<(RunMetrics, Option<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| FpoError::io(path, e))?;
    parse_metrics(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunMetrics {
        RunMetrics {
            evals: vec![
                EvalRow {
                    env_steps: 0,
                    success_rate: 0.37,
                    mean_return: 0.1 + 0.2,
                    mean_length: 74.25,
                },
                EvalRow {
                    env_steps: 2048,
                    success_rate: 1.0,
                    mean_return: std::f64::consts::PI,
                    mean_length: 1e-300,
                },
            ],
            updates: vec![
                UpdateRow {
                    env_steps: 2048,
                    update: 1,
                    actor_loss: -0.123456789012345678,
                    critic_loss: 5e-324,
                    mean_ratio: 1.0,
                    clip_fraction: 0.0,
                    mean_loss_drop: -0.0,
                    adv_mean: 1.0 / 3.0,
                    adv_std: 2.0f64.sqrt(),
                    entropy: None,
                },
                UpdateRow {
                    env_steps: 2048,
                    update: 2,
                    actor_loss: 0.5,
                    critic_loss: 0.25,
                    mean_ratio: 1.1,
                    clip_fraction: 0.5,
                    mean_loss_drop: 1e10,
                    adv_mean: 0.0,
                    adv_std: 1.0,
                    entropy: Some(-3.75),
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample();
        let text = metrics_to_string(&m, "00ff00ff00ff00ff");
        let (back, hash) = parse_metrics(&text, Path::new("m.tsv")).unwrap();
        assert_eq!(hash.as_deref(), Some("00ff00ff00ff00ff"));
        assert_eq!(back, m);
        assert_eq!(back.updates[0].mean_loss_drop.to_bits(), (-0.0f64).to_bits());
        assert_eq!(metrics_to_string(&back, "00ff00ff00ff00ff"), text);
    }

    #[test]
    fn empty_metrics_are_header_only() {
        let text = metrics_to_string(&RunMetrics::default(), "h");
        assert_eq!(text, format!("# config_hash h\n{METRICS_HEADER}\n"));
        let (back, _) = parse_metrics(&text, Path::new("m.tsv")).unwrap();
        assert_eq!(back, RunMetrics::default());
    }

    #[test]
    fn malformed_row_reports_line() {
        let mut text = metrics_to_string(&sample(), "h");
        text.push_str("eval\t1\t-\tnope\t0\t0\t-\t-\t-\t-\t-\t-\t-\t-\n");
        match parse_metrics(&text, Path::new("m.tsv")).unwrap_err() {
            FpoError::Parse { line, msg, .. } => {
                assert_eq!(line, 7);
                assert!(msg.contains("nope"), "{msg}");
            }
            other => panic!("{other}"),
        }
        let short = format!("{METRICS_HEADER}\nupdate\t1\n");
        assert!(matches!(
            parse_metrics(&short, Path::new("m.tsv")),
            Err(FpoError::Parse { line: 2, .. })
        ));
    }
}

use std::fmt;

use crate::error::{FpoError, Result};

use super::config::{Algo, TrainerConfig};
use super::metrics::RunMetrics;
use super::pretrain::build_prior;
use super::run::train_from_prior;

/// One row of the ablation matrix: full FPO or FPO with one component removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    NoRatio,
    NoClip,
    K1,
    SingleCritic,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoRatio,
        Variant::NoClip,
        Variant::K1,
        Variant::SingleCritic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoRatio => "no_ratio",
            Variant::NoClip => "no_clip",
            Variant::K1 => "k1",
            Variant::SingleCritic => "single_critic",
        }
    }

    /// `base` with this variant's flag set and every other flag cleared.
    pub fn apply(self, base: &TrainerConfig) -> TrainerConfig {
        TrainerConfig {
            algo: Algo::Fpo,
            no_ratio: self == Variant::NoRatio,
            no_clip: self == Variant::NoClip,
            k1: self == Variant::K1,
            single_critic: self == Variant::SingleCritic,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    /// Final eval success per seed; `Err` holds the failure message.
    pub per_seed: Vec<std::result::Result<f64, String>>,
    /// Median over the seeds that finished.
    pub median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    /// Prior success per seed.
    pub prior: Vec<f64>,
    /// Sorted by median, best first; failed rows last.
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn median(&self, v: Variant) -> Option<f64> {
        self.row(v).and_then(|r| r.median)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<14} {:>7}", "variant", "median")?;
        for s in &self.seeds {
            write!(f, " {:>8}", format!("seed{s}"))?;
        }
        writeln!(f)?;
        write!(f, "{:<14} {:>7.3}", "prior", median(&self.prior).unwrap_or(f64::NAN))?;
        for p in &self.prior {
            write!(f, " {p:>8.3}")?;
        }
        writeln!(f)?;
        for row in &self.rows {
            match row.median {
                Some(m) => write!(f, "{:<14} {m:>7.3}", row.variant.name())?,
                None => write!(f, "{:<14} {:>7}", row.variant.name(), "failed")?,
            }
            for cell in &row.per_seed {
                match cell {
                    Ok(v) => write!(f, " {v:>8.3}")?,
                    Err(_) => write!(f, " {:>8}", "error")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Train every variant on every seed. Each seed's prior is built once and
/// shared by all variants, so variants see identical demos, initial
/// parameters and environment streams per seed index. A failed run marks
/// its cell and the suite carries on.
pub fn run_ablation_suite(config: &TrainerConfig, seeds: &[u64]) -> Result<AblationTable> {
    run_ablation_with(config, seeds, |_, _, _| {})
}

/// As [`run_ablation_suite`], handing each run's metrics (or failure message)
/// to `on_cell` as it finishes.
pub fn run_ablation_with<F>(config: &TrainerConfig, seeds: &[u64], mut on_cell: F) -> Result<AblationTable>
where
    F: FnMut(Variant, u64, &std::result::Result<RunMetrics, String>),
{
    if seeds.len() < 3 {
        return Err(FpoError::invalid("seeds", format!("{seeds:?}"), "at least 3 seeds"));
    }
    let mut per_variant: Vec<Vec<std::result::Result<f64, String>>> = vec![Vec::new(); Variant::ALL.len()];
    let mut prior = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let seeded = TrainerConfig {
            seed,
            algo: Algo::Fpo,
            ..config.clone()
        };
        let base = build_prior(&seeded)?;
        let mut prior_success = f64::NAN;
        for (vi, variant) in Variant::ALL.iter().enumerate() {
            let cfg = variant.apply(&seeded);
            let run = train_from_prior(&cfg, base.clone())
                .map(|out| out.metrics)
                .map_err(|e| e.to_string());
            on_cell(*variant, seed, &run);
            let result = run.and_then(|m| {
                if let Some(p) = m.prior() {
                    prior_success = p.success_rate;
                }
                m.final_eval()
                    .map(|r| r.success_rate)
                    .ok_or_else(|| FpoError::Empty("evaluation rows").to_string())
            });
            per_variant[vi].push(result);
        }
        prior.push(prior_success);
    }
    let mut rows: Vec<AblationRow> = Variant::ALL
        .iter()
        .zip(per_variant)
        .map(|(v, cells)| {
            let ok: Vec<f64> = cells.iter().filter_map(|c| c.as_ref().ok().copied()).collect();
            AblationRow {
                variant: *v,
                median: median(&ok),
                per_seed: cells,
            }
        })
        .collect();
    rows.sort_by(|a, b| match (a.median, b.median) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(AblationTable {
        seeds: seeds.to_vec(),
        prior,
        rows,
    })
}

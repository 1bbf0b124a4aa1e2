use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{FpoError, Result};
use crate::numkit::rng::streams;
use crate::numkit::Rng;
use crate::trainer::{
    build_prior, evaluate, generate_demos, run_ablation_with, train_from_prior, Trainer, TrainerConfig,
};

use super::checkpoint::Checkpoint;
use super::config_io::{load_config, save_config};
use super::manifest::{layout, RunManifest};
use super::metrics_io::{read_metrics, write_metrics};
use super::plot::render_svg;
use super::records::{collect_latents, write_demos, write_latents, PhaseTag};

#[derive(Debug, Parser)]
#[command(name = "fpo", version, about = "Flow policy optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory (for `plot`, the SVG file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// fpo, rwfm or gppo.
    #[arg(long, global = true)]
    algo: Option<String>,
    /// pointreach or pushblock.
    #[arg(long, global = true)]
    env: Option<String>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    episodes: Option<usize>,
    /// Moving-average window for plots.
    #[arg(long, global = true, default_value_t = 5)]
    smooth: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the behaviour-cloned prior and save it as a checkpoint.
    Pretrain,
    /// Write scripted demonstrations to a record file.
    GenDemos,
    /// Pretrain, then fine-tune online with the configured algorithm.
    Train,
    /// Deterministic success rate of a checkpoint.
    Eval,
    /// Train every ablation variant on every configured seed.
    Ablate,
    /// Evaluation latents at the prior, mid-run and final policy.
    DumpLatents,
    /// Render a metrics file as SVG learning curves.
    Plot {
        /// Metrics file to plot.
        metrics: PathBuf,
    },
}

/// Exit codes by error category.
pub mod exit {
    pub const OK: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const CHECKPOINT: i32 = 4;
    pub const IO: i32 = 5;
}

fn exit_code(e: &FpoError) -> i32 {
    match e {
        FpoError::InvalidConfig { .. } | FpoError::Parse { .. } => exit::CONFIG,
        FpoError::Checkpoint(_) | FpoError::CheckpointVersion { .. } => exit::CHECKPOINT,
        FpoError::Io { .. } => exit::IO,
        _ => exit::RUNTIME,
    }
}

/// Parse `argv` (program name first), run the subcommand, return the exit
/// code. Usage errors print clap's message and return [`exit::USAGE`].
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match run(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve_config(c: &Common) -> Result<TrainerConfig> {
    let mut cfg = match &c.config {
        Some(p) => load_config(p)?,
        None => TrainerConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(a) = &c.algo {
        cfg.algo = a.parse()?;
    }
    if let Some(e) = &c.env {
        cfg.env = e.parse()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_dir(c: &Common, cfg: &TrainerConfig) -> PathBuf {
    c.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}-s{}", cfg.algo, cfg.env, cfg.seed)))
}

fn start_run(c: &Common, cfg: &TrainerConfig, seeds: Vec<u64>) -> Result<RunManifest> {
    let mut m = RunManifest::new(cfg, seeds, &run_dir(c, cfg));
    m.create_dir()?;
    save_config(cfg, &m.add(layout::CONFIG))?;
    Ok(m)
}

fn require_checkpoint(c: &Common) -> Result<Checkpoint> {
    let path = c
        .checkpoint
        .as_deref()
        .ok_or_else(|| FpoError::invalid("checkpoint", "none", "a path given with --checkpoint"))?;
    Checkpoint::load(path)
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match &cli.command {
        Command::GenDemos => {
            let cfg = resolve_config(c)?;
            let mut m = start_run(c, &cfg, vec![cfg.seed])?;
            let episodes = c.episodes.unwrap_or(cfg.demo_episodes);
            let mut rng = Rng::stream(cfg.seed, streams::DEMOS);
            let demos = generate_demos(&cfg.env_config(), &cfg.demo_quality.quality(), episodes, &mut rng)?;
            write_demos(&m.add(layout::DEMOS), &cfg.hash(), &demos)?;
            m.save()?;
            let ok = demos.iter().filter(|d| d.success).count();
            println!("demos {} success {:.3} -> {}", demos.len(), ok as f64 / demos.len().max(1) as f64, m.run_dir.display());
        }
        Command::Pretrain => {
            let cfg = resolve_config(c)?;
            let mut m = start_run(c, &cfg, vec![cfg.seed])?;
            let prior = build_prior(&cfg)?;
            let episodes = c.episodes.unwrap_or(cfg.eval_episodes);
            let s = evaluate(&prior.policy, &prior.decoder, &cfg.env_config(), episodes, cfg.seed)?;
            Checkpoint {
                config: cfg.clone(),
                policy: prior.policy,
                decoder: prior.decoder,
                critics: None,
                env_steps: 0,
            }
            .save(&m.add(layout::PRIOR_CHECKPOINT))?;
            m.save()?;
            println!(
                "bc loss {:.4} -> {:.4}  demo success {:.3}  prior success {:.3}  mean length {:.1}",
                prior.report.initial_loss, prior.report.final_loss, prior.demo_success, s.success_rate, s.mean_length
            );
        }
        Command::Train => {
            let cfg = resolve_config(c)?;
            let mut m = start_run(c, &cfg, vec![cfg.seed])?;
            let prior = build_prior(&cfg)?;
            let out = train_from_prior(&cfg, prior)?;
            let hash = cfg.hash();
            write_metrics(&out.metrics, &hash, &m.add(layout::METRICS))?;
            std::fs::write(m.add(layout::PLOT), render_svg(&out.metrics, c.smooth))
                .map_err(|e| FpoError::io(m.path(layout::PLOT), e))?;
            Checkpoint {
                config: cfg.clone(),
                policy: out.policy,
                decoder: out.decoder,
                critics: Some(out.critics),
                env_steps: out.env_steps,
            }
            .save(&m.add(layout::FINAL_CHECKPOINT))?;
            m.save()?;
            for r in &out.metrics.evals {
                println!("ticks {:>8}  success {:.3}  length {:.1}", r.env_steps, r.success_rate, r.mean_length);
            }
        }
        Command::Eval => {
            let ck = require_checkpoint(c)?;
            let mut env_cfg = ck.config.env_config();
            if let Some(e) = &c.env {
                let cfg = TrainerConfig {
                    env: e.parse()?,
                    ..ck.config.clone()
                };
                env_cfg = cfg.env_config();
            }
            let episodes = c.episodes.unwrap_or(ck.config.eval_episodes);
            let seed = c.seed.unwrap_or(ck.config.seed);
            let s = evaluate(&ck.policy, &ck.decoder, &env_cfg, episodes, seed)?;
            println!(
                "episodes {episodes}  success_rate {:.4}  mean_return {:.4}  mean_length {:.2}",
                s.success_rate, s.mean_return, s.mean_length
            );
        }
        Command::Ablate => {
            let cfg = resolve_config(c)?;
            let mut m = start_run(c, &cfg, cfg.seeds.clone())?;
            let table = run_ablation_with(&cfg, &cfg.seeds, |variant, seed, result| match result {
                Ok(m) => {
                    let s = m.final_eval().map(|r| r.success_rate).unwrap_or(f64::NAN);
                    eprintln!("{:<14} seed {seed}: {s:.3}", variant.name());
                }
                Err(e) => eprintln!("{:<14} seed {seed}: failed: {e}", variant.name()),
            })?;
            let text = table.to_string();
            std::fs::write(m.add(layout::ABLATION), &text).map_err(|e| FpoError::io(m.path(layout::ABLATION), e))?;
            m.save()?;
            print!("{text}");
        }
        Command::DumpLatents => {
            let episodes = c.episodes.unwrap_or(20);
            let (cfg, records) = match &c.checkpoint {
                Some(_) => {
                    let ck = require_checkpoint(c)?;
                    let seed = c.seed.unwrap_or(ck.config.seed);
                    let recs = collect_latents(
                        &ck.policy,
                        &ck.decoder,
                        &ck.config.env_config(),
                        episodes,
                        seed,
                        seed,
                        PhaseTag::Final,
                    )?;
                    (ck.config, recs)
                }
                None => {
                    let cfg = resolve_config(c)?;
                    let recs = latents_over_training(&cfg, episodes)?;
                    (cfg, recs)
                }
            };
            let mut m = start_run(c, &cfg, vec![cfg.seed])?;
            write_latents(&m.add(layout::LATENTS), &cfg.hash(), &records)?;
            m.save()?;
            println!("latents {} -> {}", records.len(), m.path(layout::LATENTS).display());
        }
        Command::Plot { metrics } => {
            let (rows, _) = read_metrics(metrics)?;
            let out = c.out.clone().unwrap_or_else(|| sibling(metrics, layout::PLOT));
            std::fs::write(&out, render_svg(&rows, c.smooth)).map_err(|e| FpoError::io(&out, e))?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().map(|p| p.join(name)).unwrap_or_else(|| PathBuf::from(name))
}

/// Train from the prior, capturing evaluation latents before training, at
/// half the budget and at the end.
fn latents_over_training(cfg: &TrainerConfig, episodes: usize) -> Result<Vec<super::records::LatentRecord>> {
    let prior = build_prior(cfg)?;
    let env_cfg = cfg.env_config();
    let grab = |t: &Trainer, tag| collect_latents(t.policy(), t.decoder(), &env_cfg, episodes, cfg.seed, cfg.seed, tag);
    let mut trainer = Trainer::new(cfg.clone(), prior)?;
    let mut out = grab(&trainer, PhaseTag::Prior)?;
    let mut mid_done = false;
    while trainer.env_steps() < cfg.budget {
        if trainer.rollout_phase()? == 0 {
            break;
        }
        trainer.update_phase()?;
        if !mid_done && trainer.env_steps() >= cfg.budget / 2 {
            out.extend(grab(&trainer, PhaseTag::Mid)?);
            mid_done = true;
        }
    }
    out.extend(grab(&trainer, PhaseTag::Final)?);
    Ok(out)
}

//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line with the measured quantities before asserting.
//!
//! Criteria 3 and 4 share one ablation sweep (5 seeds, full budget) computed
//! on first use; expect this target to take tens of minutes.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use common::{small_config, small_prior};
use fpo_core::critic::{gae, CriticSample, ValueEnsemble};
use fpo_core::env::DemoStep;
use fpo_core::flow_actor::{CfmSample, ExploreConfig, FlowActor, WeightedSample};
use fpo_core::harness::metrics_to_string;
use fpo_core::numkit::{grad_check, Rng};
use fpo_core::ratio::{clipped_surrogate, loss_drop, standardize_and_map, SIGMA_FLOOR};
use fpo_core::trainer::{
    median, pretrain_bc, run_ablation_with, train, AblationTable, BcSettings, EvalRow, Trainer, TrainerConfig,
    Variant,
};

fn report(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

// ---------------------------------------------------------------- 1

/// `L(theta) = -mean(min(rho A, clip(rho) A))` with `rho = exp(beta z)`,
/// `z = (l_init - l(theta) - mu) / sigma` and `(mu, sigma)` frozen.
fn surrogate_value(
    actor: &FlowActor,
    batch: &[(Vec<f64>, Vec<f64>, Vec<CfmSample>, f64)],
    adv: &[f64],
    mu: f64,
    sigma: f64,
) -> fpo_core::Result<f64> {
    let mut ratios = Vec::with_capacity(batch.len());
    for (s, x, d, l0) in batch {
        let z = (loss_drop(*l0, actor.cfm_loss(s, x, d)?)? - mu) / sigma;
        ratios.push(z.exp());
    }
    Ok(clipped_surrogate(&ratios, adv, 0.2)?.loss)
}

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let (sd, ld) = (3, 2);
    let mut worst_actor: f64 = 0.0;
    let mut worst_critic: f64 = 0.0;
    for point in 0..10u64 {
        let mut rng = Rng::new(100 + point);
        let old = FlowActor::new(sd, ld, &[6, 6], 4, ExploreConfig::default(), &mut rng).unwrap();
        let mut actor = old.clone();
        for p in actor.params_mut() {
            *p += 0.05 * rng.normal();
        }
        let batch: Vec<_> = (0..12)
            .map(|_| {
                let s = rng.normal_vec(sd);
                let x = rng.normal_vec(ld);
                let d = CfmSample::draw_many(4, ld, &mut rng);
                let l0 = old.cfm_loss(&s, &x, &d).unwrap();
                (s, x, d, l0)
            })
            .collect();
        let adv: Vec<f64> = (0..batch.len()).map(|_| rng.normal()).collect();
        let drops: Vec<f64> = batch
            .iter()
            .map(|(s, x, d, l0)| loss_drop(*l0, actor.cfm_loss(s, x, d).unwrap()).unwrap())
            .collect();
        let rb = standardize_and_map(&drops, 1.0, SIGMA_FLOOR).unwrap();
        assert!(rb.z.iter().all(|z| z.abs() < 5.0));
        let sur = clipped_surrogate(&rb.ratios, &adv, 0.2).unwrap();
        let weighted: Vec<WeightedSample> = batch
            .iter()
            .enumerate()
            .map(|(k, (s, x, d, _))| WeightedSample {
                state: s,
                latent: x,
                draws: d,
                weight: sur.grad_ratio[k] * rb.dratio_dloss_new(k),
            })
            .collect();
        let analytic = actor.actor_grad_from_ratio(&weighted).unwrap();
        let params = actor.params().to_vec();
        let mut probe = actor.clone();
        let err = grad_check(
            |p| {
                probe.params_mut().copy_from_slice(p);
                surrogate_value(&probe, &batch, &adv, rb.mean, rb.std)
            },
            &params,
            &analytic,
            1e-6,
        )
        .unwrap();
        worst_actor = worst_actor.max(err);

        let critics = ValueEnsemble::new(2, sd, ld, &[8, 8], 0.99, 0.95, &mut rng).unwrap();
        let data: Vec<_> = (0..10)
            .map(|_| (rng.normal_vec(sd), rng.normal_vec(ld), rng.normal()))
            .collect();
        let samples: Vec<CriticSample> = data
            .iter()
            .map(|(s, x, y)| CriticSample {
                state: s,
                latent: x,
                target: *y,
            })
            .collect();
        let loss = critics.critic_loss(&samples).unwrap();
        for m in 0..critics.len() {
            let mut probe = critics.clone();
            let params = critics.online()[m].params().to_vec();
            let err = grad_check(
                |p| {
                    probe.online_mut()[m].params_mut().copy_from_slice(p);
                    Ok(probe.critic_loss(&samples)?.loss)
                },
                &params,
                &loss.grads[m],
                1e-6,
            )
            .unwrap();
            worst_critic = worst_critic.max(err);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_actor < 1e-4 && worst_critic < 1e-4 && secs < 60.0;
    report(
        1,
        pass,
        format!("max rel err actor {worst_actor:.2e} critic {worst_critic:.2e} ({secs:.1}s)"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_cfm_mixture_recovery() {
    let start = Instant::now();
    let modes = [[2.0, 2.0], [-2.0, -2.0]];
    let state = vec![1.0, 0.0];
    let mut rng = Rng::new(7);
    let demos: Vec<DemoStep> = (0..2000)
        .map(|i| {
            let m = modes[i % 2];
            DemoStep {
                state: state.clone(),
                chunk: vec![m[0] + 0.2 * rng.normal(), m[1] + 0.2 * rng.normal()],
            }
        })
        .collect();
    let mut actor = FlowActor::new(2, 2, &[64, 64], 32, ExploreConfig::off(), &mut rng).unwrap();
    let settings = BcSettings {
        epochs: 400,
        lr: 5e-4,
        batch: 256,
        grad_clip: 10.0,
    };
    pretrain_bc(&mut actor, &demos, &settings, &mut rng).unwrap();
    let samples: Vec<Vec<f64>> = (0..2000)
        .map(|_| actor.sample_latent(&state, &mut rng).unwrap().0)
        .collect();
    let mut sums = [[0.0; 2]; 2];
    let mut counts = [0usize; 2];
    for x in &samples {
        let d = |m: &[f64; 2]| (x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2);
        let k = if d(&modes[0]) <= d(&modes[1]) { 0 } else { 1 };
        counts[k] += 1;
        sums[k][0] += x[0];
        sums[k][1] += x[1];
    }
    let mut pass = true;
    let mut detail = String::new();
    for k in 0..2 {
        let n = counts[k].max(1) as f64;
        let mean = [sums[k][0] / n, sums[k][1] / n];
        let err = ((mean[0] - modes[k][0]).powi(2) + (mean[1] - modes[k][1]).powi(2)).sqrt();
        let share = counts[k] as f64 / samples.len() as f64;
        pass &= err < 0.1 && share >= 0.2;
        detail += &format!("mode{k} mean err {err:.3} share {share:.3}; ");
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 180.0;
    report(2, pass, format!("{detail}({secs:.1}s)"));
    assert!(pass);
}

// ---------------------------------------------------------------- 3 and 4

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Sweep {
    table: AblationTable,
    /// Full FPO per seed: prior eval row and final eval row.
    full: Vec<(EvalRow, EvalRow)>,
}

fn sweep() -> &'static Sweep {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let mut full = Vec::new();
        let table = run_ablation_with(&TrainerConfig::default(), &SEEDS, |variant, seed, run| {
            let line = match run {
                Ok(m) => {
                    let (p, f) = (m.prior().unwrap(), m.final_eval().unwrap());
                    if variant == Variant::Full {
                        full.push((*p, *f));
                    }
                    format!("{:.3} -> {:.3}", p.success_rate, f.success_rate)
                }
                Err(e) => format!("failed: {e}"),
            };
            eprintln!("  {:<14} seed {seed}: {line}", variant.name());
        })
        .unwrap();
        Sweep { table, full }
    })
}

#[test]
fn criterion_3_online_improvement() {
    let start = Instant::now();
    let sw = sweep();
    assert_eq!(sw.full.len(), SEEDS.len(), "a full-FPO run failed");
    let gains: Vec<f64> = sw.full.iter().map(|(p, f)| f.success_rate - p.success_rate).collect();
    let prior = median(&sw.full.iter().map(|(p, _)| p.success_rate).collect::<Vec<_>>()).unwrap();
    let gain = median(&gains).unwrap();
    let prior_len = median(&sw.full.iter().map(|(p, _)| p.mean_length).collect::<Vec<_>>()).unwrap();
    let final_len = median(&sw.full.iter().map(|(_, f)| f.mean_length).collect::<Vec<_>>()).unwrap();
    let prior_in_band = (0.3..=0.5).contains(&prior);
    let pass = prior_in_band && gain >= 0.20 && final_len < prior_len;
    report(
        3,
        pass,
        format!(
            "median prior {prior:.3} median gain {gain:+.3} (per seed {gains:.3?}) length {prior_len:.1} -> {final_len:.1} ({:.0}s incl. sweep)",
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_ablation_direction() {
    let sw = sweep();
    println!("{}", sw.table);
    let full = sw.table.median(Variant::Full);
    let others: Vec<(Variant, Option<f64>)> = Variant::ALL[1..].iter().map(|v| (*v, sw.table.median(*v))).collect();
    let all_finished = full.is_some() && others.iter().all(|(_, m)| m.is_some());
    let full = full.unwrap_or(f64::NAN);
    let full_best = others.iter().all(|(_, m)| m.is_some_and(|m| full >= m));
    let no_ratio = sw.table.median(Variant::NoRatio).unwrap_or(f64::NAN);
    let no_ratio_worst = others.iter().all(|(_, m)| m.is_some_and(|m| no_ratio <= m));
    let pass = all_finished && full_best && no_ratio_worst;
    let medians: Vec<String> = others
        .iter()
        .map(|(v, m)| format!("{} {:.3}", v.name(), m.unwrap_or(f64::NAN)))
        .collect();
    report(
        4,
        pass,
        format!("full {full:.3} vs {}; full>=all {full_best}, no_ratio worst {no_ratio_worst}", medians.join(", ")),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5

/// `A_t = sum_{l >= 0} (gamma lambda)^l delta_{t+l}`, the sum cut after the
/// first terminal step, with `delta_k = r_k + gamma (1 - done_k) V_{k+1} - V_k`.
fn gae_double_sum(r: &[f64], v: &[f64], done: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for k in t..n {
                let mask = if done[k] { 0.0 } else { 1.0 };
                let delta = r[k] + gamma * mask * v[k + 1] - v[k];
                total += (gamma * lambda).powi((k - t) as i32) * delta;
                if done[k] {
                    break;
                }
            }
            total
        })
        .collect()
}

#[test]
fn criterion_5_gae_oracle() {
    let start = Instant::now();
    let grid = [0.0, 0.5, 0.9, 1.0];
    let mut rng = Rng::new(55);
    let mut worst: f64 = 0.0;
    let mut cases = 0usize;
    for len in 1..=6usize {
        for pattern in 0..(1u32 << len) {
            let done: Vec<bool> = (0..len).map(|i| pattern >> i & 1 == 1).collect();
            let r: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
            let v: Vec<f64> = (0..=len).map(|_| rng.normal()).collect();
            for &g in &grid {
                for &l in &grid {
                    let fast = gae(&r, &v, &done, g, l).unwrap();
                    let slow = gae_double_sum(&r, &v, &done, g, l);
                    for (a, b) in fast.iter().zip(&slow) {
                        worst = worst.max((a - b).abs());
                    }
                    cases += 1;
                }
            }
        }
    }
    let pass = worst <= 1e-10;
    report(
        5,
        pass,
        format!("{cases} cases, max abs diff {worst:.2e} ({:.2}s)", start.elapsed().as_secs_f64()),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_6_ratio_and_clip_suite() {
    let start = Instant::now();
    let mut rng = Rng::new(66);

    // (a) after a full update phase the whole buffer is back at zero drop.
    let cfg = small_config();
    let mut t = Trainer::new(cfg.clone(), small_prior(&cfg)).unwrap();
    for _ in 0..3 {
        t.rollout_phase().unwrap();
        t.update_phase().unwrap();
    }
    let drops = t.loss_drops().unwrap();
    let rb = standardize_and_map(&drops, cfg.beta, SIGMA_FLOOR).unwrap();
    let adv: Vec<f64> = (0..drops.len()).map(|_| rng.normal()).collect();
    let sur = clipped_surrogate(&rb.ratios, &adv, cfg.clip_eps).unwrap();
    let a = !drops.is_empty()
        && drops.iter().all(|d| *d == 0.0)
        && rb.ratios.iter().all(|r| *r == 1.0)
        && sur.clip_fraction == 0.0
        && t.metrics().updates.iter().step_by(cfg.update_steps).all(|u| u.mean_ratio == 1.0 && u.clip_fraction == 0.0);

    // (b) clipped regimes have exactly zero ratio gradient.
    let mut b = true;
    for _ in 0..1000 {
        let eps = rng.uniform(0.05, 0.5);
        let hi = 1.0 + eps + rng.uniform(1e-6, 2.0);
        let lo = (1.0 - eps - rng.uniform(1e-6, 1.0 - eps)).max(1e-9);
        let pos = rng.uniform(1e-3, 3.0);
        let s = clipped_surrogate(&[hi, lo], &[pos, -pos], eps).unwrap();
        b &= s.grad_ratio == vec![0.0, 0.0] && s.clip_fraction == 1.0;
    }

    // (c) constant batches fall back to unit ratios.
    let mut c = true;
    for _ in 0..100 {
        let v = rng.normal() * 10.0;
        let n = 1 + rng.index(64);
        let rb = standardize_and_map(&vec![v; n], 1.0, SIGMA_FLOOR).unwrap();
        c &= rb.ratios.iter().all(|r| *r == 1.0) && rb.z.iter().all(|z| *z == 0.0);
    }

    // (d) the ensemble minimum never exceeds a single member's target.
    let mut d = true;
    for _ in 0..1000 {
        let m = 2 + rng.index(3);
        let ens = ValueEnsemble::new(m, 3, 2, &[5], 0.99, 0.95, &mut rng).unwrap();
        let s2 = rng.normal_vec(3);
        let x2 = rng.normal_vec(2);
        let r = rng.normal();
        let y = ens.td_target_with_latent(r, &s2, &x2, false).unwrap();
        for i in 0..m {
            d &= y <= r + 0.99 * ens.q_target(i, &s2, &x2).unwrap();
        }
    }

    let pass = a && b && c && d;
    report(
        6,
        pass,
        format!(
            "(a) {a} over {} transitions (b) {b} (c) {c} (d) {d} ({:.1}s)",
            drops.len(),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_7_determinism_and_recency() {
    let start = Instant::now();
    let cfg = TrainerConfig {
        budget: 10_000,
        eval_interval: 5_000,
        eval_episodes: 20,
        seed: 11,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in 0..2 {
        let out = train(&cfg).unwrap();
        let path = dir.path().join(format!("metrics{run}.tsv"));
        std::fs::write(&path, metrics_to_string(&out.metrics, &cfg.hash())).unwrap();
        files.push(std::fs::read(&path).unwrap());
    }
    let identical = files[0] == files[1] && !files[0].is_empty();

    let small = small_config();
    let mut t = Trainer::new(small.clone(), small_prior(&small)).unwrap();
    let phases = small.window as u64 + 3;
    for _ in 0..phases {
        t.rollout_phase().unwrap();
        t.update_phase().unwrap();
    }
    let ids = t.buffer().rollout_ids();
    let expected: Vec<u64> = (phases - small.window as u64 + 1..=phases).collect();
    let recency = ids == expected;

    let secs = start.elapsed().as_secs_f64();
    let pass = identical && recency && secs < 300.0;
    report(
        7,
        pass,
        format!("metrics byte-identical {identical} ({} bytes); buffer ids {ids:?} ({secs:.1}s)", files[0].len()),
    );
    assert!(pass);
}


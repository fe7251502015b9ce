//! Self-check suite behind `dac verify`.

use std::path::Path;

use dac_core::algorithms::AlgorithmId;
use dac_core::dataset::{collect as collect_dataset, CollectConfig, Dataset, RandomPolicy};
use dac_core::env::{run_episode, EpisodeConfig, Trajectory, REWARD_TOL};
use dac_core::problem::{make_instance, ProblemSplit};
use dac_core::qnet::{QConfig, QNetwork};
use dac_core::rng::{child_rng, derive_seed};
use dac_core::ssm::{SsmConfig, SsmHiddenState, SsmParameters};
use dac_core::trainer::{grad_check, verify_decomposition, LossConfig, TabularMdp};
use rand::Rng as _;
use rayon::prelude::*;

use crate::report::write_csv;

pub const VERIFY_FILE: &str = "verify.csv";
pub const DECOMPOSITION_TOL: f64 = 1e-8;
pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_STEP: f64 = 1e-4;
pub const SCAN_TOL: f64 = 1e-6;
pub const SCAN_LENGTHS: [usize; 4] = [1, 7, 64, 2048];
pub const TELESCOPE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error (or failure count) for this check.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub mdps: usize,
    pub decomposition_tol: f64,
    /// Flips the sign of the intra-dimension gradient; the gradient check must fail.
    pub inject_sign_error: bool,
    pub scan_seeds: usize,
    pub reward_episodes: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { mdps: 100, decomposition_tol: DECOMPOSITION_TOL, inject_sign_error: false, scan_seeds: 20, reward_episodes: 200 }
    }
}

/// Per-dimension fixed point against the joint-action optimum on random MDPs
/// with up to 4 states, 3 dimensions and 3 bins.
pub fn decomposition_check(count: usize, tol: f64, seed: u64) -> dac_core::Result<Check> {
    let mut rng = child_rng(seed, &[0xdec0]);
    let mut worst: f64 = 0.0;
    let mut failed = 0;
    let mut greedy = (0, 0);
    for _ in 0..count {
        let states = rng.random_range(1..=4);
        let k = rng.random_range(1..=3);
        let m = rng.random_range(2..=3);
        let mdp = TabularMdp::random(states, k, m, 0.9, &mut rng);
        let r = verify_decomposition(&mdp, tol)?;
        worst = worst.max(r.max_value_gap).max(r.max_q_gap);
        greedy.0 += r.greedy_agree;
        greedy.1 += r.greedy_checked;
        if !r.passed {
            failed += 1;
        }
    }
    Ok(Check {
        name: "decomposition",
        passed: failed == 0,
        value: worst,
        tolerance: tol,
        detail: format!("{count} MDPs, {failed} failed, greedy agreement {}/{}", greedy.0, greedy.1),
    })
}

/// A real Alg0 trajectory of `horizon` generations under the random policy.
pub fn sample_trajectory(horizon: usize, seed: u64) -> dac_core::Result<Trajectory> {
    let p = make_instance(1, 5, seed)?;
    run_episode(&EpisodeConfig::new(AlgorithmId::Alg0, horizon), &p, &mut RandomPolicy::new(seed), seed, "random")
}

/// Analytic loss gradient against central differences on a small model.
pub fn gradient_check(seed: u64, inject_sign_error: bool) -> dac_core::Result<Check> {
    let traj = sample_trajectory(4, seed)?;
    let cfg = QConfig { d_model: 8, d_state: 4, ..QConfig::new(3, 16) };
    let net = QNetwork::init(cfg, &mut child_rng(seed, &[0x9c4e]))?;
    let r = grad_check(&net, &traj, &LossConfig::default(), GRAD_STEP, inject_sign_error)?;
    Ok(Check {
        name: "grad_check",
        passed: r.compared > 0 && r.max_rel_error <= GRAD_TOL,
        value: r.max_rel_error,
        tolerance: GRAD_TOL,
        detail: format!("{} of {} coordinates above the floor, h = {GRAD_STEP}", r.compared, r.coordinates),
    })
}

/// Chunked prefix scan against the sequential recurrence.
pub fn scan_check(seeds: usize, seed: u64) -> dac_core::Result<Check> {
    let config = SsmConfig { d_model: 8, d_state: 4 };
    let worst = (0..seeds)
        .into_par_iter()
        .map(|s| -> dac_core::Result<f64> {
            let mut rng = child_rng(seed, &[0x5ca7, s as u64]);
            let model = SsmParameters::init(config, &mut rng);
            let h0 = SsmHiddenState { h: (0..8 * 4).map(|_| rng.random_range(-1.0..1.0)).collect() };
            let mut worst: f64 = 0.0;
            for &len in &SCAN_LENGTHS {
                let xs: Vec<Vec<f64>> = (0..len).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
                let (seq, h_seq, _) = model.forward_sequential(&h0, &xs)?;
                let (par, h_par) = model.forward_scan(&h0, &xs)?;
                for (a, b) in seq.iter().flatten().chain(&h_seq.h).zip(par.iter().flatten().chain(&h_par.h)) {
                    worst = worst.max((a - b).abs());
                }
            }
            Ok(worst)
        })
        .collect::<dac_core::Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(Check {
        name: "scan_equivalence",
        passed: worst <= SCAN_TOL,
        value: worst,
        tolerance: SCAN_TOL,
        detail: format!("{seeds} seeds, lengths {SCAN_LENGTHS:?}"),
    })
}

/// Worst telescoping error of a trajectory, or `None` if a reward is negative
/// or the return exceeds one.
pub fn telescoping_error(t: &Trajectory) -> Option<f64> {
    if t.steps.iter().any(|s| s.reward < 0.0) || t.episode_return() > 1.0 + REWARD_TOL {
        return None;
    }
    let (f0, f_star) = (t.meta.f_best_init, t.meta.f_star);
    let f_end = t.steps.last().map_or(f0, |s| s.best_so_far_f).max(f_star);
    let want = if f0 - f_star > 0.0 { (f0 - f_end) / (f0 - f_star) } else { 0.0 };
    Some((t.episode_return() - want).abs())
}

/// Random-policy episodes cycling through all 24 functions and 3 algorithms.
pub fn reward_check(episodes: usize, seed: u64) -> dac_core::Result<Check> {
    let errors = (0..episodes)
        .into_par_iter()
        .map(|e| -> dac_core::Result<Option<f64>> {
            let fid = (e % 24) as u8 + 1;
            let alg = [AlgorithmId::Alg0, AlgorithmId::Alg1, AlgorithmId::Alg2][e / 24 % 3];
            let s = derive_seed(seed, &[0x7e1e, e as u64]);
            let p = make_instance(fid, 5, s)?;
            let t = run_episode(&EpisodeConfig::new(alg, 20), &p, &mut RandomPolicy::new(s), s, "random")?;
            Ok(telescoping_error(&t))
        })
        .collect::<dac_core::Result<Vec<_>>>()?;
    let violations = errors.iter().filter(|e| e.is_none()).count();
    let worst = errors.iter().flatten().copied().fold(0.0, f64::max);
    Ok(Check {
        name: "reward_telescoping",
        passed: violations == 0 && worst <= TELESCOPE_TOL,
        value: worst,
        tolerance: TELESCOPE_TOL,
        detail: format!("{episodes} episodes, {violations} sign or bound violations"),
    })
}

/// Loads and revalidates a dataset; without one, round-trips a small fresh
/// dataset through `scratch`.
pub fn dataset_check(data: Option<&Path>, scratch: &Path, seed: u64) -> Check {
    let result = match data {
        Some(dir) => Dataset::load(dir).map(|d| format!("{} trajectories revalidated", d.trajectories.len())),
        None => (|| {
            let split = ProblemSplit::custom(vec![1, 4], vec![2], 5)?;
            let mut cfg = CollectConfig::new(AlgorithmId::Alg0, 8, 5, 0.5, seed);
            cfg.calibration_episodes = 4;
            let mut d = collect_dataset(&cfg, &split)?;
            d.save(scratch)?;
            let back = Dataset::load(scratch)?;
            if back != d {
                return Err(dac_core::Error::ConfigMismatch("reloaded dataset differs".into()));
            }
            Ok(format!("{} trajectories round-tripped", back.trajectories.len()))
        })(),
    };
    match result {
        Ok(detail) => Check { name: "dataset_revalidation", passed: true, value: 0.0, tolerance: 0.0, detail },
        Err(e) => Check { name: "dataset_revalidation", passed: false, value: 1.0, tolerance: 0.0, detail: e.to_string() },
    }
}

pub fn run_suite(opts: &VerifyOptions, data: Option<&Path>, out: &Path, seed: u64) -> anyhow::Result<Vec<Check>> {
    std::fs::create_dir_all(out)?;
    let checks = vec![
        decomposition_check(opts.mdps, opts.decomposition_tol, seed)?,
        gradient_check(seed, opts.inject_sign_error)?,
        scan_check(opts.scan_seeds, seed)?,
        reward_check(opts.reward_episodes, seed)?,
        dataset_check(data, &out.join("verify_dataset"), seed),
    ];
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.name.to_string(),
                if c.passed { "PASS" } else { "FAIL" }.to_string(),
                c.value.to_string(),
                c.tolerance.to_string(),
                c.detail.clone(),
            ]
        })
        .collect();
    write_csv(&out.join(VERIFY_FILE), &["check", "result", "value", "tolerance", "detail"], &rows)?;
    for c in &checks {
        println!(
            "{} {:<22} value {:.3e} tol {:.0e}  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance,
            c.detail
        );
    }
    Ok(checks)
}

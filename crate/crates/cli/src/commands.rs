//! The `collect`, `train`, `eval` and `ablate` commands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use dac_core::dataset::{collect as collect_dataset, Dataset, DatasetManifest, RandomPolicy, EXPLOITATION_NOTE};
use dac_core::env::{run_episode, EpisodeConfig, Policy, Trajectory, REWARD_TOL};
use dac_core::problem::ProblemSplit;
use dac_core::qnet::{Checkpoint, QNetwork, QPolicy};
use dac_core::rng::{child_rng, derive_seed};
use dac_core::trainer::{train as train_network, EpochStats, LossConfig};
use rayon::prelude::*;

use crate::config::{usage, RunConfig};
use crate::report::{mean_std, write_csv};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRAINED_POLICY_ID: &str = "trained";
pub const RANDOM_POLICY_ID: &str = "random";

pub fn collect(cfg: &RunConfig, out: &Path) -> anyhow::Result<DatasetManifest> {
    let mut data = collect_dataset(&cfg.collect_config(), &cfg.split)?;
    data.save(out).with_context(|| format!("writing dataset to {}", out.display()))?;
    println!("collected {}\n{}", out.display(), data.manifest.summary());
    Ok(data.manifest)
}

fn load_dataset(dir: &Path) -> anyhow::Result<Dataset> {
    Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

/// A freshly initialised network for K/M, seeded from the run seed.
pub fn fresh_network(cfg: &RunConfig, k: usize, m: usize) -> anyhow::Result<QNetwork> {
    Ok(QNetwork::init(cfg.q_config(k, m), &mut child_rng(cfg.seed, &[0x1417]))?)
}

pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub curve: Vec<EpochStats>,
}

pub fn train(cfg: &RunConfig, data_dir: &Path, out: &Path, resume: Option<&Path>) -> anyhow::Result<TrainOutcome> {
    let data = load_dataset(data_dir)?;
    let (k, m) = (data.manifest.k, data.manifest.m);
    let (mut net, start_epoch, optimizer) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
            if ck.network.config.k != k || ck.network.config.m != m {
                bail!(
                    "checkpoint has K = {}, M = {} but the dataset has K = {k}, M = {m}",
                    ck.network.config.k,
                    ck.network.config.m
                );
            }
            (ck.network, ck.epoch, ck.optimizer)
        }
        None => (fresh_network(cfg, k, m)?, 0, None),
    };
    std::fs::create_dir_all(out)?;
    let started = std::time::Instant::now();
    let report = train_network(&data.trajectories, &mut net, &cfg.loss, cfg.seed, start_epoch, optimizer, &mut |s, _, _| {
        println!("epoch {:>4}  loss {:.6}", s.epoch, s.loss.total);
        Ok(())
    })?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    let epoch = start_epoch + cfg.loss.epochs;
    Checkpoint { network: net, epoch, optimizer: Some(report.optimizer) }.save(&checkpoint)?;
    let rows: Vec<Vec<String>> = report
        .curve
        .iter()
        .map(|s| {
            let l = &s.loss;
            vec![s.epoch.to_string(), l.total.to_string(), l.intra.to_string(), l.last.to_string(), l.conservative.to_string()]
        })
        .collect();
    write_csv(&out.join(LOSS_FILE), &["epoch", "mean_loss", "intra", "last", "conservative"], &rows)?;
    println!(
        "trained epochs {}..={} on {} trajectories in {:.1}s -> {}",
        start_epoch + 1,
        epoch,
        data.trajectories.len(),
        started.elapsed().as_secs_f64(),
        checkpoint.display()
    );
    Ok(TrainOutcome { checkpoint, curve: report.curve })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub problem: u8,
    pub run: usize,
    pub perf: f64,
    pub policy: String,
}

/// Seed of evaluation run `run` on `function_id`; shared by every policy.
pub fn eval_seed(seed: u64, function_id: u8, run: usize) -> u64 {
    derive_seed(seed, &[0xe7a1, function_id as u64, run as u64])
}

/// Rolls out the greedy trained policy (if given) and the random baseline on
/// every test problem for `cfg.runs` seeds each.
pub fn evaluate(cfg: &RunConfig, net: Option<&QNetwork>, bins: usize) -> anyhow::Result<Vec<EvalRow>> {
    if let Some(net) = net {
        if net.config.k != cfg.alg.k() {
            bail!("checkpoint has K = {} but algorithm {} has K = {}", net.config.k, u8::from(cfg.alg), cfg.alg.k());
        }
    }
    let problems = cfg.split.test_instances(cfg.seed)?;
    let episode = EpisodeConfig { bins, ..EpisodeConfig::new(cfg.alg, cfg.horizon) };
    let mut jobs = Vec::new();
    for p in 0..problems.len() {
        if net.is_some() {
            jobs.extend((0..cfg.runs).map(|r| (p, r, true)));
        }
        jobs.extend((0..cfg.runs).map(|r| (p, r, false)));
    }
    jobs.into_par_iter()
        .map(|(p, run, trained)| {
            let problem = &problems[p];
            let seed = eval_seed(cfg.seed, problem.function_id(), run);
            let (mut policy, id): (Box<dyn Policy + '_>, &str) = match (trained, net) {
                (true, Some(net)) => (Box::new(QPolicy::new(net)), TRAINED_POLICY_ID),
                _ => (Box::new(RandomPolicy::new(seed)), RANDOM_POLICY_ID),
            };
            let perf = run_episode(&episode, problem, policy.as_mut(), seed, id)?.episode_return();
            if !(0.0..=1.0 + REWARD_TOL).contains(&perf) {
                bail!("Perf {perf} outside [0, 1] on function {}", problem.function_id());
            }
            Ok(EvalRow { problem: problem.function_id(), run, perf, policy: id.to_string() })
        })
        .collect()
}

/// Mean Perf per policy over every row.
pub fn policy_means(rows: &[EvalRow]) -> Vec<(String, f64, f64, usize)> {
    let mut ids: Vec<&str> = rows.iter().map(|r| r.policy.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let v: Vec<f64> = rows.iter().filter(|r| r.policy == id).map(|r| r.perf).collect();
            let (m, s) = mean_std(&v);
            (id.to_string(), m, s, v.len())
        })
        .collect()
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> anyhow::Result<Vec<EvalRow>> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let started = std::time::Instant::now();
    let rows = evaluate(cfg, Some(&ck.network), ck.network.config.m)?;
    std::fs::create_dir_all(out)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.problem.to_string(), r.run.to_string(), r.perf.to_string(), r.policy.clone()])
        .collect();
    write_csv(&out.join(EVAL_FILE), &["problem", "run", "perf", "policy"], &table)?;
    let mut summary = Vec::new();
    for &fid in &cfg.split.test_ids {
        for policy in [TRAINED_POLICY_ID, RANDOM_POLICY_ID] {
            let v: Vec<f64> = rows.iter().filter(|r| r.problem == fid && r.policy == policy).map(|r| r.perf).collect();
            let (m, s) = mean_std(&v);
            summary.push(vec![fid.to_string(), policy.to_string(), m.to_string(), s.to_string(), v.len().to_string()]);
            println!("f{fid:<3} {policy:<8} Perf {m:.4e} ± {s:.3e}");
        }
    }
    write_csv(&out.join(SUMMARY_FILE), &["problem", "policy", "mean", "std", "runs"], &summary)?;
    for (id, m, s, n) in policy_means(&rows) {
        println!("overall {id:<8} Perf {m:.4e} ± {s:.3e} over {n} runs");
    }
    println!("evaluated in {:.1}s (checkpoint epoch {})\nnote: {EXPLOITATION_NOTE}", started.elapsed().as_secs_f64(), ck.epoch);
    Ok(rows)
}

/// One cell of an ablation table.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub labels: Vec<(String, String)>,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub lambda_beta: Vec<Cell>,
    pub mu: Vec<Cell>,
    pub bins: Vec<Cell>,
    pub random_baseline: (f64, f64),
}

pub const LAMBDAS: [f64; 3] = [0.0, 1.0, 10.0];
pub const BETAS: [f64; 2] = [1.0, 10.0];
pub const MUS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const BIN_SWEEP: [usize; 2] = [16, 32];

fn trained_cell(cfg: &RunConfig, data: &[Trajectory], loss: &LossConfig, labels: Vec<(String, String)>) -> anyhow::Result<Cell> {
    let first = data.first().context("empty dataset")?;
    let mut net = fresh_network(cfg, first.meta.k, first.meta.m)?;
    let text: Vec<String> = labels.iter().map(|(k, v)| format!("{k}={v}")).collect();
    // without the conservative term offline Q-learning can blow up; keep the
    // row so the table shape survives
    if let Err(e) = train_network(data, &mut net, loss, cfg.seed, 0, None, &mut |_, _, _| Ok(())) {
        if !matches!(e, dac_core::Error::NonFinite(_)) {
            return Err(e.into());
        }
        println!("{:<24} diverged ({e})", text.join(" "));
        return Ok(Cell { labels, mean: f64::NAN, std: f64::NAN, runs: 0 });
    }
    let rows = evaluate(cfg, Some(&net), first.meta.m)?;
    let perf: Vec<f64> = rows.iter().filter(|r| r.policy == TRAINED_POLICY_ID).map(|r| r.perf).collect();
    let (mean, std) = mean_std(&perf);
    println!("{:<24} Perf {mean:.4e} ± {std:.3e}", text.join(" "));
    Ok(Cell { labels, mean, std, runs: perf.len() })
}

fn write_cells(path: &Path, cells: &[Cell]) -> anyhow::Result<()> {
    let first = cells.first().context("empty ablation table")?;
    let mut header: Vec<&str> = first.labels.iter().map(|(k, _)| k.as_str()).collect();
    header.extend(["mean_perf", "std_perf", "runs"]);
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let mut r: Vec<String> = c.labels.iter().map(|(_, v)| v.clone()).collect();
            r.extend([c.mean.to_string(), c.std.to_string(), c.runs.to_string()]);
            r
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// λ/β grid, μ sweep (re-mixing one dataset) and bin-count sweep.
pub fn ablate(cfg: &RunConfig, data_dir: Option<&Path>, out: &Path) -> anyhow::Result<AblationReport> {
    std::fs::create_dir_all(out)?;
    let data = match data_dir {
        Some(dir) => load_dataset(dir)?,
        None => {
            let mut d = collect_dataset(&cfg.collect_config(), &cfg.split)?;
            d.save(&out.join("dataset"))?;
            d
        }
    };
    if data.manifest.alg_id != cfg.alg {
        return Err(usage("dataset algorithm does not match --alg"));
    }
    let random: Vec<f64> = evaluate(cfg, None, data.manifest.m)?.into_iter().map(|r| r.perf).collect();
    let random_baseline = mean_std(&random);
    println!("random baseline Perf {:.4e} ± {:.3e}", random_baseline.0, random_baseline.1);

    println!("-- lambda / beta grid");
    let mut lambda_beta = Vec::new();
    for &lambda in &LAMBDAS {
        for &beta in &BETAS {
            let loss = LossConfig { lambda, beta, ..cfg.loss };
            let labels = vec![("lambda".into(), lambda.to_string()), ("beta".into(), beta.to_string())];
            lambda_beta.push(trained_cell(cfg, &data.trajectories, &loss, labels)?);
        }
    }
    write_cells(&out.join("lambda_beta.csv"), &lambda_beta)?;

    println!("-- exploitation fraction sweep");
    let exploit = data.manifest.exploitation_count;
    let size = exploit.min(data.manifest.size - exploit);
    if size == 0 {
        return Err(usage("the mu sweep needs a dataset with both exploitation and exploration trajectories"));
    }
    let mut mu_cells = Vec::new();
    for &mu in &MUS {
        let mixed = data.remix(mu, size, cfg.seed)?;
        let labels = vec![("mu".into(), mu.to_string()), ("size".into(), size.to_string())];
        mu_cells.push(trained_cell(cfg, &mixed.trajectories, &cfg.loss, labels)?);
    }
    write_cells(&out.join("mu.csv"), &mu_cells)?;

    println!("-- action bin sweep");
    let mut bin_cells = Vec::new();
    for &bins in &BIN_SWEEP {
        let collect_cfg = dac_core::dataset::CollectConfig { bins, ..cfg.collect_config() };
        let d = collect_dataset(&collect_cfg, &cfg.split)?;
        bin_cells.push(trained_cell(cfg, &d.trajectories, &cfg.loss, vec![("bins".into(), bins.to_string())])?);
    }
    write_cells(&out.join("bins.csv"), &bin_cells)?;
    write_csv(
        &out.join("baseline.csv"),
        &["policy", "mean_perf", "std_perf", "runs"],
        &[vec![RANDOM_POLICY_ID.into(), random_baseline.0.to_string(), random_baseline.1.to_string(), random.len().to_string()]],
    )?;
    println!("note: {EXPLOITATION_NOTE}");
    Ok(AblationReport { lambda_beta, mu: mu_cells, bins: bin_cells, random_baseline })
}

/// One-line description of a split with per-function dimensions.
pub fn split_summary(split: &ProblemSplit) -> String {
    let dims = |ids: &[u8]| ids.iter().map(|id| format!("f{id}:{}", split.dims[id])).collect::<Vec<_>>().join(" ");
    format!("train [{}] test [{}]", dims(&split.train_ids), dims(&split.test_ids))
}

//! Offline dataset: behaviour policies, collection over training problems,
//! line-delimited storage and the checksummed manifest.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::{alg_spec, AlgorithmId, AlgorithmOptions, ParamKind};
use crate::env::{encode_value, run_episode, EpisodeConfig, OptimizationState, Policy, Trajectory, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::problem::{ProblemInstance, ProblemSplit};
use crate::rng::{child_rng, derive_seed, rng_from_seed, Rng};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAJECTORY_FILE: &str = "trajectories.jsonl";
pub const RANDOM_POLICY_ID: &str = "random";

/// Stored in every manifest and printed with every report.
pub const EXPLOITATION_NOTE: &str = "exploitation trajectories come from a scripted DE schedule and \
return-filtered random rollouts, not from pretrained online MetaBBO controllers";

/// Uniform bin per dimension. `reset` reseeds from the episode seed so an
/// episode's actions do not depend on what ran before it.
pub struct RandomPolicy {
    base: u64,
    rng: Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { base: seed, rng: rng_from_seed(seed) }
    }
}

impl Policy for RandomPolicy {
    fn reset(&mut self, episode_seed: u64) {
        self.rng = child_rng(self.base, &[episode_seed]);
    }

    fn act(&mut self, _state: &OptimizationState, _step: usize, limits: &[usize]) -> Result<Vec<usize>> {
        Ok(limits.iter().map(|&m| self.rng.random_range(0..m)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExploitationKind {
    ScriptedDeSchedule,
    FilteredRandom,
}

impl ExploitationKind {
    pub const ALL: [Self; 2] = [Self::ScriptedDeSchedule, Self::FilteredRandom];

    pub fn id(self) -> &'static str {
        match self {
            Self::ScriptedDeSchedule => "scripted_de_schedule",
            Self::FilteredRandom => "filtered_random",
        }
    }
}

impl FromStr for ExploitationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown exploitation policy {s:?}")))
    }
}

impl std::fmt::Display for ExploitationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

const SCHEDULE_START: f64 = 0.9;
const SCHEDULE_END: f64 = 0.3;

#[derive(Clone, Copy, Debug)]
enum Role {
    /// Scale factors and mutation strengths: large early, small late.
    Anneal { lo: f64, hi: f64 },
    /// Crossover rates stay high.
    Hold { lo: f64, hi: f64 },
    Discrete(usize),
}

/// Hand-written DE-style control schedule over the whole episode.
pub struct ScriptedSchedule {
    roles: Vec<Role>,
    bins: usize,
    horizon: usize,
    base: u64,
    jitter: bool,
    rng: Rng,
    preference: Vec<usize>,
}

impl ScriptedSchedule {
    pub fn new(alg: AlgorithmId, bins: usize, horizon: usize, seed: u64, jitter: bool) -> Self {
        let roles = alg_spec(alg)
            .iter()
            .map(|s| match &s.kind {
                ParamKind::Continuous { lo, hi } if s.name.starts_with("Cr") => Role::Hold { lo: *lo, hi: *hi },
                ParamKind::Continuous { lo, hi } => Role::Anneal { lo: *lo, hi: *hi },
                ParamKind::Discrete(choices) => Role::Discrete(choices.len()),
            })
            .collect();
        let mut policy =
            Self { roles, bins, horizon, base: seed, jitter, rng: rng_from_seed(seed), preference: Vec::new() };
        policy.reset(seed);
        policy
    }
}

impl Policy for ScriptedSchedule {
    fn reset(&mut self, episode_seed: u64) {
        self.rng = child_rng(self.base, &[episode_seed]);
        let rng = &mut self.rng;
        self.preference = self
            .roles
            .iter()
            .map(|r| match r {
                Role::Discrete(n) => rng.random_range(0..*n),
                _ => 0,
            })
            .collect();
    }

    fn act(&mut self, _state: &OptimizationState, step: usize, limits: &[usize]) -> Result<Vec<usize>> {
        if limits.len() != self.roles.len() {
            return Err(Error::ShapeMismatch(format!("{} limits for {} hyper-parameters", limits.len(), self.roles.len())));
        }
        let progress = if self.horizon > 1 { (step as f64 / (self.horizon - 1) as f64).min(1.0) } else { 0.0 };
        let mut out = Vec::with_capacity(limits.len());
        for (i, (role, &limit)) in self.roles.iter().zip(limits).enumerate() {
            let bin = match *role {
                Role::Discrete(_) => self.preference[i],
                Role::Anneal { lo, hi } | Role::Hold { lo, hi } => {
                    let unit = match role {
                        Role::Anneal { .. } => SCHEDULE_START + (SCHEDULE_END - SCHEDULE_START) * progress,
                        _ => SCHEDULE_START,
                    };
                    let bin = encode_value(lo, hi, lo + unit * (hi - lo), self.bins);
                    if self.jitter {
                        let shifted = bin as i64 + self.rng.random_range(-1..=1);
                        shifted.clamp(0, self.bins as i64 - 1) as usize
                    } else {
                        bin
                    }
                }
            };
            out.push(bin.min(limit - 1));
        }
        Ok(out)
    }
}

/// Linear-interpolation quantile of `values` (`q` in [0, 1]).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("quantile {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollectConfig {
    pub alg: AlgorithmId,
    pub horizon: usize,
    pub bins: usize,
    /// Total number of trajectories `D`.
    pub size: usize,
    /// Exploitation fraction `μ`.
    pub mu: f64,
    /// Exploitation slots rotate through these.
    pub exploitation: Vec<ExploitationKind>,
    pub seed: u64,
    pub normalize: bool,
    pub options: AlgorithmOptions,
    /// Random episodes per training problem used to set the filter threshold.
    pub calibration_episodes: usize,
    pub filter_quantile: f64,
    /// Candidate episodes tried per filtered slot before keeping the best one.
    pub max_attempts: usize,
    pub jitter: bool,
    pub parallel: bool,
}

impl CollectConfig {
    pub fn new(alg: AlgorithmId, size: usize, horizon: usize, mu: f64, seed: u64) -> Self {
        Self {
            alg,
            horizon,
            bins: DEFAULT_BINS,
            size,
            mu,
            exploitation: ExploitationKind::ALL.to_vec(),
            seed,
            normalize: true,
            options: AlgorithmOptions::default(),
            calibration_episodes: 32,
            filter_quantile: 0.5,
            max_attempts: 20,
            jitter: true,
            parallel: true,
        }
    }

    pub fn exploitation_count(&self) -> usize {
        exploitation_count(self.mu, self.size)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::InvalidParameter(format!("mu = {} outside [0, 1]", self.mu)));
        }
        if self.size == 0 {
            return Err(Error::InvalidParameter("dataset size must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        if self.bins < 2 {
            return Err(Error::InvalidParameter("need at least 2 bins".into()));
        }
        if self.exploitation_count() > 0 && self.exploitation.is_empty() {
            return Err(Error::InvalidParameter("mu > 0 needs at least one exploitation policy".into()));
        }
        if self.exploitation.contains(&ExploitationKind::FilteredRandom)
            && (self.calibration_episodes == 0 || self.max_attempts == 0)
        {
            return Err(Error::InvalidParameter("filtered_random needs calibration episodes and attempts".into()));
        }
        if !(0.0..=1.0).contains(&self.filter_quantile) {
            return Err(Error::InvalidParameter(format!("filter quantile {} outside [0, 1]", self.filter_quantile)));
        }
        Ok(())
    }

    fn episode(&self) -> EpisodeConfig {
        EpisodeConfig { alg: self.alg, horizon: self.horizon, bins: self.bins, normalize: self.normalize, options: self.options }
    }
}

/// `round(μ·D)`.
pub fn exploitation_count(mu: f64, size: usize) -> usize {
    (mu * size as f64).round() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub alg_id: AlgorithmId,
    pub k: usize,
    pub m: usize,
    pub horizon: usize,
    pub size: usize,
    pub mu: f64,
    pub exploitation_count: usize,
    /// Trajectories per policy id.
    pub counts: BTreeMap<String, usize>,
    pub seed: u64,
    pub train_ids: Vec<u8>,
    pub note: String,
    pub trajectory_file: String,
    /// SHA-256 of the trajectory file, hex encoded.
    pub checksum: String,
}

impl DatasetManifest {
    pub fn summary(&self) -> String {
        let counts: Vec<String> = self.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!(
            "D={} mu={} exploitation={} exploration={} [{}] alg={} K={} M={} T={} sha256={}\nnote: {}",
            self.size,
            self.mu,
            self.exploitation_count,
            self.size - self.exploitation_count,
            counts.join(", "),
            u8::from(self.alg_id),
            self.k,
            self.m,
            self.horizon,
            self.checksum,
            self.note
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub trajectories: Vec<Trajectory>,
}

fn policy_counts(trajectories: &[Trajectory]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for t in trajectories {
        *counts.entry(t.meta.policy_id.clone()).or_insert(0) += 1;
    }
    counts
}

impl Dataset {
    /// Builds a manifest around trajectories; the checksum is filled on save.
    pub fn from_trajectories(trajectories: Vec<Trajectory>, mu: f64, seed: u64, train_ids: Vec<u8>) -> Result<Self> {
        let first = trajectories.first().ok_or(Error::EmptyDataset)?;
        let meta = &first.meta;
        for t in &trajectories {
            if t.meta.alg_id != meta.alg_id || t.meta.m != meta.m || t.meta.horizon != meta.horizon {
                return Err(Error::ConfigMismatch("trajectories mix algorithms, bin counts or horizons".into()));
            }
        }
        let manifest = DatasetManifest {
            format_version: FORMAT_VERSION,
            alg_id: meta.alg_id,
            k: meta.k,
            m: meta.m,
            horizon: meta.horizon,
            size: trajectories.len(),
            mu,
            exploitation_count: trajectories.iter().filter(|t| t.meta.exploitation).count(),
            counts: policy_counts(&trajectories),
            seed,
            train_ids,
            note: EXPLOITATION_NOTE.into(),
            trajectory_file: TRAJECTORY_FILE.into(),
            checksum: String::new(),
        };
        Ok(Self { manifest, trajectories })
    }

    /// Writes `manifest.json` and the trajectory file into `dir`.
    pub fn save(&mut self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut bytes = Vec::new();
        write_trajectories(&mut bytes, &self.trajectories)?;
        self.manifest.checksum = sha256_hex(&bytes);
        std::fs::write(dir.join(&self.manifest.trajectory_file), &bytes)?;
        let mut manifest = serde_json::to_vec_pretty(&self.manifest)?;
        manifest.push(b'\n');
        std::fs::write(dir.join(MANIFEST_FILE), manifest)?;
        Ok(())
    }

    /// Reads and fully revalidates a dataset directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let raw: serde_json::Value = serde_json::from_str(&manifest_text)?;
        let found = raw.get("format_version").map(|v| v.to_string()).unwrap_or_else(|| "none".into());
        if found != FORMAT_VERSION.to_string() {
            return Err(Error::Version { expected: FORMAT_VERSION.to_string(), found });
        }
        let manifest: DatasetManifest = serde_json::from_value(raw)?;
        let bytes = std::fs::read(dir.join(&manifest.trajectory_file))?;
        let actual = sha256_hex(&bytes);
        if actual != manifest.checksum {
            return Err(Error::Checksum { expected: manifest.checksum.clone(), actual });
        }
        let trajectories = read_trajectories(&mut bytes.as_slice())?;
        let data = Self { manifest, trajectories };
        data.check_composition()?;
        Ok(data)
    }

    /// Manifest and contents agree exactly.
    pub fn check_composition(&self) -> Result<()> {
        let m = &self.manifest;
        let mismatch = |what: &str| Err(Error::ConfigMismatch(format!("manifest {what} does not match the trajectories")));
        if m.size != self.trajectories.len() {
            return mismatch("size");
        }
        if m.counts != policy_counts(&self.trajectories) || m.counts.values().sum::<usize>() != m.size {
            return mismatch("policy counts");
        }
        if m.exploitation_count != self.trajectories.iter().filter(|t| t.meta.exploitation).count()
            || m.exploitation_count != exploitation_count(m.mu, m.size)
        {
            return mismatch("exploitation count");
        }
        for t in &self.trajectories {
            if t.meta.alg_id != m.alg_id || t.meta.k != m.k || t.meta.m != m.m || t.meta.horizon != m.horizon {
                return mismatch("algorithm, K, M or T");
            }
        }
        Ok(())
    }

    /// Draws a new dataset of `size` trajectories with exploitation fraction
    /// `mu` from this one, without replacement.
    pub fn remix(&self, mu: f64, size: usize, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu) || size == 0 {
            return Err(Error::InvalidParameter(format!("cannot remix to mu = {mu}, size = {size}")));
        }
        let want_exploit = exploitation_count(mu, size);
        let (mut exploit, mut explore): (Vec<usize>, Vec<usize>) =
            (0..self.trajectories.len()).partition(|&i| self.trajectories[i].meta.exploitation);
        if exploit.len() < want_exploit || explore.len() < size - want_exploit {
            return Err(Error::InvalidParameter(format!(
                "need {want_exploit} exploitation and {} exploration trajectories, have {} and {}",
                size - want_exploit,
                exploit.len(),
                explore.len()
            )));
        }
        let mut rng = child_rng(seed, &[0x7e41]);
        exploit.shuffle(&mut rng);
        explore.shuffle(&mut rng);
        let mut picked: Vec<usize> =
            exploit[..want_exploit].iter().chain(&explore[..size - want_exploit]).copied().collect();
        picked.sort_unstable();
        let trajectories = picked.into_iter().map(|i| self.trajectories[i].clone()).collect();
        Self::from_trajectories(trajectories, mu, seed, self.manifest.train_ids.clone())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One JSON object per line, each terminated by `\n`.
pub fn write_trajectories(w: &mut impl Write, trajectories: &[Trajectory]) -> Result<()> {
    for t in trajectories {
        t.validate()?;
        serde_json::to_writer(&mut *w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses and revalidates every record; errors carry 1-based line numbers.
pub fn read_trajectories(r: &mut impl BufRead) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    let mut line = 0;
    let mut buf = String::new();
    loop {
        buf.clear();
        if r.read_line(&mut buf)? == 0 {
            break;
        }
        line += 1;
        let Some(body) = buf.strip_suffix('\n') else {
            return Err(Error::Record { line, msg: "truncated record (missing line terminator)".into() });
        };
        let t: Trajectory =
            serde_json::from_str(body).map_err(|e| Error::Record { line, msg: e.to_string() })?;
        t.validate().map_err(|e| Error::Record { line, msg: e.to_string() })?;
        out.push(t);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot {
    Explore,
    Exploit(ExploitationKind),
}

/// Runs `D` episodes: the first `round(μ·D)` slots rotate through the
/// exploitation policies, the rest use the random policy. Slot `i` runs on
/// training problem `i mod n` with its own derived seed, so the output does
/// not depend on scheduling.
pub fn collect(cfg: &CollectConfig, split: &ProblemSplit) -> Result<Dataset> {
    cfg.validate()?;
    let problems = split.train_instances(cfg.seed)?;
    if problems.is_empty() {
        return Err(Error::InvalidParameter("no training problems".into()));
    }
    let n_exploit = cfg.exploitation_count();
    // kinds advance once per sweep over the problems, so every training
    // problem sees every exploitation policy
    let slots: Vec<Slot> = (0..cfg.size)
        .map(|i| {
            if i < n_exploit {
                Slot::Exploit(cfg.exploitation[(i / problems.len()) % cfg.exploitation.len()])
            } else {
                Slot::Explore
            }
        })
        .collect();
    let thresholds = if slots.contains(&Slot::Exploit(ExploitationKind::FilteredRandom)) {
        calibrate(cfg, &problems)?
    } else {
        Vec::new()
    };
    let run_slot = |i: usize| -> Result<Trajectory> {
        let problem = &problems[i % problems.len()];
        let seed = derive_seed(cfg.seed, &[0xc011, i as u64]);
        collect_slot(cfg, problem, slots[i], seed, thresholds.get(i % problems.len()).copied())
    };
    let trajectories: Vec<Trajectory> = if cfg.parallel {
        (0..cfg.size).into_par_iter().map(run_slot).collect::<Result<_>>()?
    } else {
        (0..cfg.size).map(run_slot).collect::<Result<_>>()?
    };
    Dataset::from_trajectories(trajectories, cfg.mu, cfg.seed, split.train_ids.clone())
}

/// Episode-return threshold per training problem for `filtered_random`.
pub fn calibrate(cfg: &CollectConfig, problems: &[ProblemInstance]) -> Result<Vec<f64>> {
    problems
        .par_iter()
        .enumerate()
        .map(|(p, problem)| {
            let returns = (0..cfg.calibration_episodes)
                .map(|c| {
                    let seed = derive_seed(cfg.seed, &[0xca1b, p as u64, c as u64]);
                    let mut policy = RandomPolicy::new(seed);
                    Ok(run_episode(&cfg.episode(), problem, &mut policy, seed, RANDOM_POLICY_ID)?.episode_return())
                })
                .collect::<Result<Vec<f64>>>()?;
            quantile(&returns, cfg.filter_quantile)
        })
        .collect()
}

fn collect_slot(
    cfg: &CollectConfig,
    problem: &ProblemInstance,
    slot: Slot,
    seed: u64,
    threshold: Option<f64>,
) -> Result<Trajectory> {
    let episode = cfg.episode();
    let mut traj = match slot {
        Slot::Explore => run_episode(&episode, problem, &mut RandomPolicy::new(seed), seed, RANDOM_POLICY_ID)?,
        Slot::Exploit(ExploitationKind::ScriptedDeSchedule) => {
            let mut policy = ScriptedSchedule::new(cfg.alg, cfg.bins, cfg.horizon, seed, cfg.jitter);
            run_episode(&episode, problem, &mut policy, seed, ExploitationKind::ScriptedDeSchedule.id())?
        }
        Slot::Exploit(ExploitationKind::FilteredRandom) => {
            let threshold = threshold.ok_or_else(|| Error::InvalidParameter("missing filter threshold".into()))?;
            let id = ExploitationKind::FilteredRandom.id();
            let mut best: Option<Trajectory> = None;
            for attempt in 0..cfg.max_attempts {
                let s = derive_seed(seed, &[attempt as u64]);
                let t = run_episode(&episode, problem, &mut RandomPolicy::new(s), s, id)?;
                let keep = t.episode_return() > threshold;
                if best.as_ref().is_none_or(|b| t.episode_return() > b.episode_return()) {
                    best = Some(t);
                }
                if keep {
                    break;
                }
            }
            best.expect("max_attempts >= 1")
        }
    };
    traj.meta.exploitation = matches!(slot, Slot::Exploit(_));
    Ok(traj)
}

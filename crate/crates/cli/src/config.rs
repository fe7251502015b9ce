//! Run configuration: profile defaults, then an optional TOML file, then flags.

use std::path::Path;

use clap::{Args, ValueEnum};
use dac_core::algorithms::AlgorithmId;
use dac_core::dataset::{CollectConfig, ExploitationKind};
use dac_core::problem::{default_split, ProblemSplit};
use dac_core::qnet::QConfig;
use dac_core::trainer::LossConfig;
use serde::Deserialize;

/// Bad flags or configuration values; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Scaled-down defaults that run the whole pipeline in minutes.
    #[default]
    Desk,
    /// Full-size defaults.
    Paper,
}

/// Settings shared by every command. Each is optional so that a config
/// file and the command line can both override the profile defaults.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    /// Algorithm id (0, 1 or 2).
    #[arg(long)]
    pub alg: Option<u8>,
    /// Generations per episode (T).
    #[arg(long = "t")]
    #[serde(alias = "t")]
    pub horizon: Option<usize>,
    /// Trajectories to collect (D).
    #[arg(long = "d")]
    #[serde(alias = "d")]
    pub size: Option<usize>,
    /// Exploitation fraction (μ).
    #[arg(long)]
    pub mu: Option<f64>,
    /// Action bins per continuous hyper-parameter (M).
    #[arg(long)]
    pub bins: Option<usize>,
    /// Exploitation policies, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub exploitation: Option<Vec<String>>,
    #[arg(long)]
    pub calibration_episodes: Option<usize>,
    #[arg(long)]
    pub filter_quantile: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long = "lr")]
    #[serde(alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub d_state: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Evaluation runs per test problem.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Cap on problem dimensions for the default split.
    #[arg(long)]
    pub max_dim: Option<usize>,
    /// Training function ids, comma separated (replaces the default split).
    #[arg(long, value_delimiter = ',')]
    pub train_ids: Option<Vec<u8>>,
    /// Test function ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub test_ids: Option<Vec<u8>>,
    /// Dimension used with explicit train/test ids.
    #[arg(long)]
    pub dim: Option<usize>,
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub alg: AlgorithmId,
    pub horizon: usize,
    pub size: usize,
    pub mu: f64,
    pub bins: usize,
    pub exploitation: Vec<ExploitationKind>,
    pub calibration_episodes: usize,
    pub filter_quantile: f64,
    pub loss: LossConfig,
    pub d_model: usize,
    pub d_state: usize,
    pub depth: usize,
    pub runs: usize,
    pub split: ProblemSplit,
}

/// Profile defaults as raw overrides, so they go through the same path.
fn profile_defaults(profile: Profile) -> Overrides {
    let paper = profile == Profile::Paper;
    Overrides {
        alg: Some(0),
        horizon: Some(if paper { 500 } else { 50 }),
        size: Some(if paper { 10_000 } else { 500 }),
        mu: Some(0.5),
        bins: Some(16),
        exploitation: Some(ExploitationKind::ALL.iter().map(|k| k.id().to_string()).collect()),
        calibration_episodes: Some(32),
        filter_quantile: Some(0.5),
        epochs: Some(if paper { 300 } else { 100 }),
        batch_size: Some(if paper { 64 } else { 32 }),
        learning_rate: Some(5e-3),
        weight_decay: Some(0.01),
        beta: Some(10.0),
        lambda: Some(1.0),
        gamma: Some(0.99),
        d_model: Some(64),
        d_state: Some(16),
        depth: Some(1),
        runs: Some(19),
        max_dim: Some(if paper { 50 } else { 10 }),
        train_ids: None,
        test_ids: None,
        dim: None,
    }
}

macro_rules! layer {
    ($base:ident, $top:ident; $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

fn merge(base: &mut Overrides, top: &Overrides) {
    layer!(base, top; alg, horizon, size, mu, bins, exploitation, calibration_episodes, filter_quantile,
        epochs, batch_size, learning_rate, weight_decay, beta, lambda, gamma, d_model, d_state, depth,
        runs, max_dim, train_ids, test_ids, dim);
}

pub fn read_config_file(path: &Path) -> anyhow::Result<Overrides> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Layers `file` and then `flags` over the profile and validates the result.
    pub fn resolve(profile: Profile, seed: u64, file: Option<&Overrides>, flags: &Overrides) -> anyhow::Result<Self> {
        let mut o = profile_defaults(profile);
        if let Some(f) = file {
            merge(&mut o, f);
        }
        merge(&mut o, flags);
        // all fields are populated by the profile
        let alg = AlgorithmId::try_from(o.alg.unwrap()).map_err(|e| usage(e.to_string()))?;
        let exploitation = o
            .exploitation
            .unwrap()
            .iter()
            .map(|s| s.parse::<ExploitationKind>().map_err(|e| usage(e.to_string())))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let split = match (o.train_ids, o.test_ids) {
            (None, None) => default_split().with_max_dim(o.max_dim.unwrap()),
            (Some(train), Some(test)) => {
                ProblemSplit::custom(train, test, o.dim.unwrap_or(5)).map_err(|e| usage(e.to_string()))?
            }
            _ => return Err(usage("train_ids and test_ids must be given together")),
        };
        let loss = LossConfig {
            beta: o.beta.unwrap(),
            lambda: o.lambda.unwrap(),
            gamma: o.gamma.unwrap(),
            batch_size: o.batch_size.unwrap(),
            epochs: o.epochs.unwrap(),
            learning_rate: o.learning_rate.unwrap(),
            weight_decay: o.weight_decay.unwrap(),
            ..LossConfig::default()
        };
        let cfg = Self {
            profile,
            seed,
            alg,
            horizon: o.horizon.unwrap(),
            size: o.size.unwrap(),
            mu: o.mu.unwrap(),
            bins: o.bins.unwrap(),
            exploitation,
            calibration_episodes: o.calibration_episodes.unwrap(),
            filter_quantile: o.filter_quantile.unwrap(),
            loss,
            d_model: o.d_model.unwrap(),
            d_state: o.d_state.unwrap(),
            depth: o.depth.unwrap(),
            runs: o.runs.unwrap(),
            split,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.loss.validate().map_err(|e| usage(e.to_string()))?;
        self.collect_config().validate().map_err(|e| usage(e.to_string()))?;
        self.q_config(self.alg.k(), self.bins).validate().map_err(|e| usage(e.to_string()))?;
        if self.runs == 0 {
            return Err(usage("runs must be at least 1"));
        }
        if self.split.train_ids.is_empty() || self.split.test_ids.is_empty() {
            return Err(usage("the problem split needs training and test functions"));
        }
        Ok(())
    }

    pub fn collect_config(&self) -> CollectConfig {
        CollectConfig {
            bins: self.bins,
            exploitation: self.exploitation.clone(),
            calibration_episodes: self.calibration_episodes,
            filter_quantile: self.filter_quantile,
            ..CollectConfig::new(self.alg, self.size, self.horizon, self.mu, self.seed)
        }
    }

    pub fn q_config(&self, k: usize, m: usize) -> QConfig {
        QConfig { d_model: self.d_model, d_state: self.d_state, depth: self.depth, ..QConfig::new(k, m) }
    }
}

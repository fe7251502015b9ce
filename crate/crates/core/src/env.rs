//! The control MDP: optimization state features, reward, action decoding and
//! episode rollout.

use serde::{Deserialize, Serialize};

use crate::algorithms::{
    alg_spec, init_state, AlgorithmId, AlgorithmOptions, AlgorithmState, HyperParameterSpec, ParamKind,
    ParamValue,
};
use crate::error::{Error, Result};
use crate::problem::ProblemInstance;
use crate::rng::{child_rng, derive_seed};

pub const NUM_FEATURES: usize = 9;
/// Default number of bins for continuous hyper-parameters.
pub const DEFAULT_BINS: usize = 16;
/// Slack allowed on reward invariants.
pub const REWARD_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationState(pub [f64; NUM_FEATURES]);

impl OptimizationState {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Per-episode constants needed by [`cal_state`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeContext {
    pub horizon: usize,
    pub f_star: f64,
    /// Worst objective value of the initial population.
    pub f_worst_init: f64,
    pub normalize: bool,
}

impl EpisodeContext {
    pub fn new(state: &AlgorithmState, f_star: f64, normalize: bool) -> Self {
        let f_worst_init = state
            .subpops()
            .iter()
            .flat_map(|p| p.fitness().iter().copied())
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            horizon: state.horizon(),
            f_star,
            f_worst_init,
            normalize,
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Computes the nine state features over the union of all sub-populations.
///
/// With normalization on, distance features are divided by the box diameter
/// and objective features by `f_worst_init - f_star`, then clamped to [0, 1].
pub fn cal_state(state: &AlgorithmState, ctx: &EpisodeContext) -> Result<OptimizationState> {
    let xs: Vec<&[f64]> = state.subpops().iter().flat_map(|p| p.x().iter().map(Vec::as_slice)).collect();
    let fs: Vec<f64> = state.subpops().iter().flat_map(|p| p.fitness().iter().copied()).collect();
    let n = xs.len();
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    let nf = n as f64;
    let (gen_best_x, gen_best_f) = state.generation_best();
    let bsf_x = state.best_so_far_x();
    let bsf_f = state.best_so_far_f();

    let mut pair_sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            pair_sum += dist(xs[i], xs[j]);
        }
    }
    let s1 = if n > 1 { pair_sum / (nf * (nf - 1.0) / 2.0) } else { 0.0 };
    let s2 = xs.iter().map(|x| dist(x, gen_best_x)).sum::<f64>() / nf;
    let s3 = xs.iter().map(|x| dist(x, bsf_x)).sum::<f64>() / nf;
    let s4 = fs.iter().map(|f| f - bsf_f).sum::<f64>() / nf;
    let s5 = fs.iter().map(|f| f - gen_best_f).sum::<f64>() / nf;
    // shifted by the first value so an all-equal population gives exactly 0
    let shift = fs.first().copied().unwrap_or(0.0);
    let mean = fs.iter().map(|f| f - shift).sum::<f64>() / nf;
    let s6 = (fs.iter().map(|f| (f - shift - mean).powi(2)).sum::<f64>() / nf).sqrt();

    let t = state.generation() as f64;
    let horizon = ctx.horizon as f64;
    let s7 = ((horizon - t) / horizon).clamp(0.0, 1.0);
    let s8 = (state.stagnation() as f64 / horizon).clamp(0.0, 1.0);
    let s9 = if state.improved() { 1.0 } else { 0.0 };

    let mut s = [s1, s2, s3, s4, s5, s6, s7, s8, s9];
    if ctx.normalize {
        let dim = xs[0].len() as f64;
        let diameter = dim.sqrt() * state.range().width();
        let spread = ctx.f_worst_init - ctx.f_star;
        for v in &mut s[0..3] {
            *v = (*v / diameter).clamp(0.0, 1.0);
        }
        for v in &mut s[3..6] {
            *v = if spread > 0.0 { (*v / spread).clamp(0.0, 1.0) } else { 0.0 };
        }
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("state features {s:?}")));
    }
    Ok(OptimizationState(s))
}

/// Relative improvement of the best-so-far value between two steps.
///
/// Values below `f_star` are floored at `f_star`, so an episode can never
/// collect more than 1 in total. A degenerate normalizer yields 0.
pub fn reward(f_best_prev: f64, f_best_now: f64, f_best_init: f64, f_star: f64) -> f64 {
    let denom = f_best_init - f_star;
    if denom <= 0.0 || !denom.is_finite() {
        return 0.0;
    }
    let prev = f_best_prev.max(f_star);
    let now = f_best_now.max(f_star);
    ((prev - now) / denom).max(0.0)
}

/// Number of usable bins for one hyper-parameter.
pub fn mask_bins(spec: &HyperParameterSpec, m: usize) -> usize {
    match &spec.kind {
        ParamKind::Continuous { .. } => m,
        ParamKind::Discrete(choices) => choices.len(),
    }
}

/// Maps a 0-based bin index to a concrete hyper-parameter value.
pub fn decode_action(spec: &HyperParameterSpec, bin: usize, m: usize) -> Result<ParamValue> {
    let limit = mask_bins(spec, m);
    if bin >= limit {
        return Err(Error::BinOutOfRange { dim: spec.index, bin, limit });
    }
    Ok(match &spec.kind {
        ParamKind::Continuous { lo, hi } => {
            if m < 2 {
                return Err(Error::InvalidParameter(format!("need at least 2 bins, got {m}")));
            }
            let v = if bin == m - 1 { *hi } else { lo + bin as f64 * (hi - lo) / (m - 1) as f64 };
            ParamValue::Real(v)
        }
        ParamKind::Discrete(choices) => choices[bin],
    })
}

/// Nearest grid bin to a continuous value.
pub fn encode_value(lo: f64, hi: f64, value: f64, m: usize) -> usize {
    let pos = ((value - lo) / (hi - lo) * (m - 1) as f64).round();
    pos.clamp(0.0, (m - 1) as f64) as usize
}

/// Decodes a full bin vector.
pub fn decode_config(specs: &[HyperParameterSpec], bins: &[usize], m: usize) -> Result<Vec<ParamValue>> {
    if bins.len() != specs.len() {
        return Err(Error::ShapeMismatch(format!("{} bins for {} hyper-parameters", bins.len(), specs.len())));
    }
    specs.iter().zip(bins).map(|(s, &b)| decode_action(s, b, m)).collect()
}

/// A controller that picks one bin per hyper-parameter each generation.
pub trait Policy {
    /// Called once before an episode starts.
    fn reset(&mut self, _episode_seed: u64) {}

    /// `limits[i]` is the number of legal bins of dimension `i`.
    fn act(&mut self, state: &OptimizationState, step: usize, limits: &[usize]) -> Result<Vec<usize>>;
}

impl<F> Policy for F
where
    F: FnMut(&OptimizationState, usize, &[usize]) -> Vec<usize>,
{
    fn act(&mut self, state: &OptimizationState, step: usize, limits: &[usize]) -> Result<Vec<usize>> {
        Ok(self(state, step, limits))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub alg_id: AlgorithmId,
    pub k: usize,
    pub m: usize,
    pub function_id: u8,
    pub dim: usize,
    pub instance_seed: u64,
    pub episode_seed: u64,
    pub horizon: usize,
    pub policy_id: String,
    /// True for trajectories collected by an exploitation policy.
    #[serde(default)]
    pub exploitation: bool,
    pub f_best_init: f64,
    pub f_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub state: OptimizationState,
    pub actions: Vec<usize>,
    pub reward: f64,
    /// Best-so-far objective value after this step.
    pub best_so_far_f: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    #[serde(flatten)]
    pub meta: TrajectoryMeta,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    /// Accumulated reward, i.e. the Perf metric.
    pub fn episode_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Bin limits per action dimension.
    pub fn limits(&self) -> Vec<usize> {
        alg_spec(self.meta.alg_id).iter().map(|s| mask_bins(s, self.meta.m)).collect()
    }

    /// Checks shape, action ranges and that rewards match the recorded
    /// best-so-far sequence.
    pub fn validate(&self) -> Result<()> {
        let meta = &self.meta;
        if meta.k != meta.alg_id.k() {
            return Err(Error::ShapeMismatch(format!("K = {} for {:?}", meta.k, meta.alg_id)));
        }
        if self.steps.len() != meta.horizon {
            return Err(Error::ShapeMismatch(format!("{} steps, horizon {}", self.steps.len(), meta.horizon)));
        }
        let limits = self.limits();
        let mut prev = meta.f_best_init;
        let mut total = 0.0;
        for (t, step) in self.steps.iter().enumerate() {
            if step.actions.len() != meta.k {
                return Err(Error::ShapeMismatch(format!("step {t}: {} actions", step.actions.len())));
            }
            for (dim, (&bin, &limit)) in step.actions.iter().zip(&limits).enumerate() {
                if bin >= limit {
                    return Err(Error::BinOutOfRange { dim, bin, limit });
                }
            }
            if step.state.0.iter().any(|v| !v.is_finite()) || !step.reward.is_finite() {
                return Err(Error::NonFinite(format!("step {t}")));
            }
            if step.best_so_far_f > prev {
                return Err(Error::InvalidParameter(format!("step {t}: best-so-far increased")));
            }
            let expect = reward(prev, step.best_so_far_f, meta.f_best_init, meta.f_star);
            if step.reward < 0.0 || (step.reward - expect).abs() > REWARD_TOL {
                return Err(Error::InvalidParameter(format!(
                    "step {t}: reward {} inconsistent with best-so-far (expected {expect})",
                    step.reward
                )));
            }
            total += step.reward;
            prev = step.best_so_far_f;
        }
        if total > 1.0 + REWARD_TOL {
            return Err(Error::InvalidParameter(format!("episode return {total} exceeds 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeConfig {
    pub alg: AlgorithmId,
    pub horizon: usize,
    pub bins: usize,
    pub normalize: bool,
    pub options: AlgorithmOptions,
}

impl EpisodeConfig {
    pub fn new(alg: AlgorithmId, horizon: usize) -> Self {
        Self {
            alg,
            horizon,
            bins: DEFAULT_BINS,
            normalize: true,
            options: AlgorithmOptions::default(),
        }
    }
}

/// Rolls out one controlled episode.
pub fn run_episode(
    cfg: &EpisodeConfig,
    problem: &ProblemInstance,
    policy: &mut dyn Policy,
    episode_seed: u64,
    policy_id: &str,
) -> Result<Trajectory> {
    if cfg.horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let specs = alg_spec(cfg.alg);
    let limits: Vec<usize> = specs.iter().map(|s| mask_bins(s, cfg.bins)).collect();
    let mut state = init_state(cfg.alg, problem, cfg.horizon, derive_seed(episode_seed, &[1]), cfg.options)?;
    let mut rng = child_rng(episode_seed, &[2]);
    let f_star = problem.f_opt();
    let ctx = EpisodeContext::new(&state, f_star, cfg.normalize);
    let f_best_init = state.best_so_far_f();
    policy.reset(episode_seed);

    let mut steps = Vec::with_capacity(cfg.horizon);
    for t in 0..cfg.horizon {
        let s = cal_state(&state, &ctx)?;
        let bins = policy.act(&s, t, &limits)?;
        let config = decode_config(&specs, &bins, cfg.bins)?;
        let prev = state.best_so_far_f();
        state.step(&config, problem, &mut rng)?;
        let now = state.best_so_far_f();
        steps.push(StepRecord {
            state: s,
            actions: bins,
            reward: reward(prev, now, f_best_init, f_star),
            best_so_far_f: now,
        });
    }
    Ok(Trajectory {
        meta: TrajectoryMeta {
            alg_id: cfg.alg,
            k: specs.len(),
            m: cfg.bins,
            function_id: problem.function_id(),
            dim: problem.dim(),
            instance_seed: problem.seed(),
            episode_seed,
            horizon: cfg.horizon,
            policy_id: policy_id.to_string(),
            exploitation: false,
            f_best_init,
            f_star,
        },
        steps,
    })
}

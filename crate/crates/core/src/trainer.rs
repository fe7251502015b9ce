//! Offline training with the compositional conservative Q-loss, plus the
//! tabular decomposition check and a finite-difference gradient check.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::qnet::{masked_argmax, OptimizerState, QNetwork};
use crate::rng::{child_rng, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the last-dimension TD branch.
    pub beta: f64,
    /// Weight of the conservative branch.
    pub lambda: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta: 10.0,
            lambda: 1.0,
            gamma: 0.99,
            batch_size: 64,
            epochs: 300,
            learning_rate: 5e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.beta >= 0.0 && self.lambda >= 0.0) {
            return bad("beta and lambda must be nonnegative");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.weight_decay >= 0.0 && self.eps > 0.0) {
            return bad("learning rate, weight decay and eps must be nonnegative");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Loss split by branch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    /// Chosen bins of dimensions 1..K-1, regressed onto the next dimension's max.
    pub intra: f64,
    /// Chosen bin of dimension K, regressed onto the TD target.
    pub last: f64,
    /// Every non-chosen bin, pulled toward zero.
    pub conservative: f64,
}

impl LossParts {
    fn add(&mut self, o: &LossParts) {
        self.total += o.total;
        self.intra += o.intra;
        self.last += o.last;
        self.conservative += o.conservative;
    }

    fn scale(&mut self, s: f64) {
        self.total *= s;
        self.intra *= s;
        self.last *= s;
        self.conservative *= s;
    }
}

/// Regression target of the chosen bin in every row. Targets are treated as
/// constants by the gradient.
pub fn bellman_targets(q: &[Vec<f64>], traj: &Trajectory, cfg: &LossConfig) -> Result<Vec<f64>> {
    let k = traj.meta.k;
    let t_len = traj.steps.len();
    check_shape(q, traj)?;
    let limits = loss_limits(traj);
    let mut targets = vec![0.0; t_len * k];
    for t in 0..t_len {
        for i in 0..k {
            let row = t * k + i;
            targets[row] = if i + 1 < k {
                let next = &q[row + 1];
                next[masked_argmax(next, limits[i + 1])]
            } else {
                let bootstrap = if t + 1 < t_len {
                    let first = &q[(t + 1) * k];
                    first[masked_argmax(first, limits[0])]
                } else {
                    0.0
                };
                traj.steps[t].reward + cfg.gamma * bootstrap
            };
        }
    }
    Ok(targets)
}

/// Legal bins per dimension. Trajectories whose K does not match their
/// algorithm (hand-built ones) treat every bin as legal.
pub fn loss_limits(traj: &Trajectory) -> Vec<usize> {
    if traj.meta.k == traj.meta.alg_id.k() {
        traj.limits()
    } else {
        vec![traj.meta.m; traj.meta.k]
    }
}

fn check_shape(q: &[Vec<f64>], traj: &Trajectory) -> Result<()> {
    let rows = traj.steps.len() * traj.meta.k;
    if q.len() != rows || q.iter().any(|r| r.len() != traj.meta.m) {
        return Err(Error::ShapeMismatch(format!(
            "Q tensor does not match T·K = {rows} rows of M = {}",
            traj.meta.m
        )));
    }
    Ok(())
}

/// Loss and `dL/dQ` for fixed targets. `flip_intra` negates the intra-branch
/// gradient and exists only to test that the gradient check catches it.
fn loss_with_targets(
    q: &[Vec<f64>],
    targets: &[f64],
    traj: &Trajectory,
    cfg: &LossConfig,
    flip_intra: bool,
) -> Result<(LossParts, Vec<Vec<f64>>)> {
    check_shape(q, traj)?;
    let k = traj.meta.k;
    let mut parts = LossParts::default();
    let mut dq = vec![vec![0.0; traj.meta.m]; q.len()];
    for (t, step) in traj.steps.iter().enumerate() {
        for i in 0..k {
            let row = t * k + i;
            let chosen = step.actions[i];
            for (j, &v) in q[row].iter().enumerate() {
                if j == chosen {
                    let diff = v - targets[row];
                    if i + 1 < k {
                        parts.intra += 0.5 * diff * diff;
                        dq[row][j] = if flip_intra { -diff } else { diff };
                    } else {
                        parts.last += 0.5 * cfg.beta * diff * diff;
                        dq[row][j] = cfg.beta * diff;
                    }
                } else {
                    parts.conservative += 0.5 * cfg.lambda * v * v;
                    dq[row][j] = cfg.lambda * v;
                }
            }
        }
    }
    parts.total = parts.intra + parts.last + parts.conservative;
    Ok((parts, dq))
}

/// Per-trajectory loss (summed over every step, dimension and bin) and its
/// gradient with respect to the Q tensor.
pub fn q_loss(q: &[Vec<f64>], traj: &Trajectory, cfg: &LossConfig) -> Result<(LossParts, Vec<Vec<f64>>)> {
    let targets = bellman_targets(q, traj, cfg)?;
    loss_with_targets(q, &targets, traj, cfg, false)
}

/// Loss and flat parameter gradient for one trajectory.
pub fn trajectory_gradient(net: &QNetwork, traj: &Trajectory, cfg: &LossConfig) -> Result<(LossParts, Vec<f64>)> {
    let (q, cache) = net.q_values_for_trajectory(traj)?;
    let (parts, dq) = q_loss(&q, traj, cfg)?;
    Ok((parts, net.backward(&cache, &dq)?.to_flat()))
}

/// Mean loss and mean gradient over a batch, reduced in dataset order.
pub fn batch_gradient(net: &QNetwork, batch: &[&Trajectory], cfg: &LossConfig) -> Result<(LossParts, Vec<f64>)> {
    let per: Vec<(LossParts, Vec<f64>)> = batch
        .par_iter()
        .map(|tr| trajectory_gradient(net, tr, cfg))
        .collect::<Result<_>>()?;
    let mut parts = LossParts::default();
    let mut grad = vec![0.0; net.num_params()];
    for (p, g) in &per {
        parts.add(p);
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let s = 1.0 / batch.len() as f64;
    parts.scale(s);
    grad.iter_mut().for_each(|v| *v *= s);
    Ok((parts, grad))
}

/// Mean teacher-forced loss over a dataset without updating anything.
pub fn dataset_loss(net: &QNetwork, data: &[Trajectory], cfg: &LossConfig) -> Result<LossParts> {
    let per: Vec<LossParts> = data
        .par_iter()
        .map(|tr| {
            let (q, _) = net.q_values_for_trajectory(tr)?;
            Ok(q_loss(&q, tr, cfg)?.0)
        })
        .collect::<Result<_>>()?;
    let mut parts = LossParts::default();
    per.iter().for_each(|p| parts.add(p));
    parts.scale(1.0 / data.len().max(1) as f64);
    Ok(parts)
}

/// Decoupled weight decay Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub state: OptimizerState,
}

impl AdamW {
    pub fn new(cfg: &LossConfig, num_params: usize) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            state: OptimizerState { step: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] },
        }
    }

    pub fn with_state(cfg: &LossConfig, state: OptimizerState) -> Self {
        Self { state, ..Self::new(cfg, 0) }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() || self.state.m.len() != params.len() {
            return Err(Error::DimensionMismatch { expected: params.len(), got: grad.len() });
        }
        self.state.step += 1;
        let t = self.state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.state.m).zip(&mut self.state.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p *= 1.0 - self.lr * self.weight_decay;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based epoch number, continuing across resumes.
    pub epoch: usize,
    pub loss: LossParts,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub curve: Vec<EpochStats>,
    pub optimizer: OptimizerState,
}

/// Trains in place. `start_epoch` is the number of epochs already completed
/// (for resumes) and `on_epoch` is called after every epoch.
pub fn train(
    data: &[Trajectory],
    net: &mut QNetwork,
    cfg: &LossConfig,
    seed: u64,
    start_epoch: usize,
    optimizer: Option<OptimizerState>,
    on_epoch: &mut dyn FnMut(&EpochStats, &QNetwork, &OptimizerState) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for tr in data {
        if tr.meta.k != net.config.k || tr.meta.m != net.config.m {
            return Err(Error::ConfigMismatch(format!(
                "dataset has K = {}, M = {}; model has K = {}, M = {}",
                tr.meta.k, tr.meta.m, net.config.k, net.config.m
            )));
        }
    }
    let n = net.num_params();
    let mut opt = match optimizer {
        Some(s) if s.m.len() == n && s.v.len() == n => AdamW::with_state(cfg, s),
        Some(_) => return Err(Error::Checkpoint("optimizer state does not match the model".into())),
        None => AdamW::new(cfg, n),
    };
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut params = net.to_flat();
    for epoch in start_epoch + 1..=start_epoch + cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut child_rng(seed, &[0x7a41, epoch as u64]));
        let mut sum = LossParts::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Trajectory> = chunk.iter().map(|&i| &data[i]).collect();
            let (mut parts, grad) = batch_gradient(net, &batch, cfg)?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient in epoch {epoch}")));
            }
            opt.step(&mut params, &grad)?;
            net.assign_flat(&params)?;
            parts.scale(chunk.len() as f64);
            sum.add(&parts);
        }
        sum.scale(1.0 / data.len() as f64);
        let stats = EpochStats { epoch, loss: sum };
        on_epoch(&stats, net, &opt.state)?;
        curve.push(stats);
    }
    Ok(TrainReport { curve, optimizer: opt.state })
}

/// Small finite MDP over joint actions `(a_1, ..., a_K)`, each in `0..m`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub states: usize,
    pub k: usize,
    pub m: usize,
    /// `rewards[s * joint + a]`.
    pub rewards: Vec<f64>,
    /// `transitions[(s * joint + a) * states + s']`.
    pub transitions: Vec<f64>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn joint_actions(&self) -> usize {
        self.m.pow(self.k as u32)
    }

    /// Rewards in [0, 1) and transition rows from normalized uniform weights.
    pub fn random(states: usize, k: usize, m: usize, gamma: f64, rng: &mut Rng) -> Self {
        let joint = m.pow(k as u32);
        let rewards = (0..states * joint).map(|_| rng.random::<f64>()).collect();
        let mut transitions = Vec::with_capacity(states * joint * states);
        for _ in 0..states * joint {
            let w: Vec<f64> = (0..states).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = w.iter().sum();
            transitions.extend(w.iter().map(|x| x / s));
        }
        Self { states, k, m, rewards, transitions, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        let joint = self.joint_actions();
        if self.rewards.len() != self.states * joint || self.transitions.len() != self.states * joint * self.states {
            return Err(Error::ShapeMismatch("reward or transition table has the wrong size".into()));
        }
        for s in 0..self.states {
            for a in 0..joint {
                let row = &self.transitions[(s * joint + a) * self.states..(s * joint + a + 1) * self.states];
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                    return Err(Error::NonStochastic { state: s, action: a, sum });
                }
            }
        }
        Ok(())
    }

    fn expected_next(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let joint = self.joint_actions();
        let row = &self.transitions[(s * joint + a) * self.states..(s * joint + a + 1) * self.states];
        row.iter().zip(v).map(|(p, x)| p * x).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionReport {
    /// `max_s |max_a Q_full(s, a) - max_{a_1} Q_1(s, a_1)|`.
    pub max_value_gap: f64,
    /// Largest gap between `Q_K` and `Q_full` on any state-action pair.
    pub max_q_gap: f64,
    pub greedy_checked: usize,
    pub greedy_agree: usize,
    pub tol: f64,
    pub passed: bool,
}

const VI_MAX_ITERS: usize = 100_000;
const VI_STOP: f64 = 1e-15;

/// Value iteration on the joint-action Q-function.
pub fn full_value_iteration(mdp: &TabularMdp) -> Vec<f64> {
    let joint = mdp.joint_actions();
    let mut q = vec![0.0; mdp.states * joint];
    for _ in 0..VI_MAX_ITERS {
        let v: Vec<f64> = (0..mdp.states)
            .map(|s| q[s * joint..(s + 1) * joint].iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut change: f64 = 0.0;
        for s in 0..mdp.states {
            for a in 0..joint {
                let new = mdp.rewards[s * joint + a] + mdp.gamma * mdp.expected_next(s, a, &v);
                change = change.max((new - q[s * joint + a]).abs());
                q[s * joint + a] = new;
            }
        }
        if change <= VI_STOP {
            break;
        }
    }
    q
}

/// Howard policy iteration on the joint-action Q-function. Each policy is
/// evaluated exactly with an LU solve, so the result shares no arithmetic
/// with the per-dimension fixed-point iteration.
pub fn policy_iteration(mdp: &TabularMdp) -> Result<Vec<f64>> {
    let (ns, joint) = (mdp.states, mdp.joint_actions());
    let mut policy = vec![0usize; ns];
    for _ in 0..VI_MAX_ITERS {
        let mut lhs = nalgebra::DMatrix::<f64>::identity(ns, ns);
        let mut rhs = nalgebra::DVector::<f64>::zeros(ns);
        for s in 0..ns {
            let a = policy[s];
            rhs[s] = mdp.rewards[s * joint + a];
            for t in 0..ns {
                lhs[(s, t)] -= mdp.gamma * mdp.transitions[(s * joint + a) * ns + t];
            }
        }
        let v = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidParameter("singular policy evaluation system".into()))?;
        let v: Vec<f64> = v.iter().copied().collect();
        let q: Vec<f64> = (0..ns * joint)
            .map(|sa| mdp.rewards[sa] + mdp.gamma * mdp.expected_next(sa / joint, sa % joint, &v))
            .collect();
        let mut stable = true;
        for s in 0..ns {
            let row = &q[s * joint..(s + 1) * joint];
            let best = masked_argmax(row, joint);
            // only switch on a strict improvement, so ties cannot cycle
            if row[best] > row[policy[s]] + 1e-12 {
                policy[s] = best;
                stable = false;
            }
        }
        if stable {
            return Ok(q);
        }
    }
    Err(Error::InvalidParameter("policy iteration did not converge".into()))
}

/// Fixed-point iteration of the per-dimension operator. Returns the tables
/// `Q_i(s, a_1..a_i)` for `i = 1..K`, with `Q_i` indexed `s * m^i + prefix`.
pub fn decomposed_value_iteration(mdp: &TabularMdp) -> Vec<Vec<f64>> {
    let (k, m, ns) = (mdp.k, mdp.m, mdp.states);
    let mut tables: Vec<Vec<f64>> = (1..=k).map(|i| vec![0.0; ns * m.pow(i as u32)]).collect();
    for _ in 0..VI_MAX_ITERS {
        // value of the next state comes from the first dimension
        let v: Vec<f64> = (0..ns)
            .map(|s| tables[0][s * m..(s + 1) * m].iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let joint = mdp.joint_actions();
        let mut change: f64 = 0.0;
        for s in 0..ns {
            for a in 0..joint {
                let new = mdp.rewards[s * joint + a] + mdp.gamma * mdp.expected_next(s, a, &v);
                let cell = &mut tables[k - 1][s * joint + a];
                change = change.max((new - *cell).abs());
                *cell = new;
            }
        }
        for i in (0..k - 1).rev() {
            let width = m.pow(i as u32 + 1);
            for s in 0..ns {
                for prefix in 0..width {
                    let start = s * width * m + prefix * m;
                    let best = tables[i + 1][start..start + m].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let cell = &mut tables[i][s * width + prefix];
                    change = change.max((best - *cell).abs());
                    *cell = best;
                }
            }
        }
        if change <= VI_STOP {
            break;
        }
    }
    tables
}

/// Compares the joint-action fixed point (solved by policy iteration) with the
/// per-dimension Bellman fixed point.
pub fn verify_decomposition(mdp: &TabularMdp, tol: f64) -> Result<DecompositionReport> {
    mdp.validate()?;
    if mdp.states * mdp.joint_actions() > 10_000 {
        return Err(Error::InvalidParameter("MDP too large for exact value iteration".into()));
    }
    let joint = mdp.joint_actions();
    let full = policy_iteration(mdp)?;
    let dec = decomposed_value_iteration(mdp);
    let (k, m) = (mdp.k, mdp.m);
    let mut max_value_gap: f64 = 0.0;
    let mut max_q_gap: f64 = 0.0;
    let mut checked = 0;
    let mut agree = 0;
    for s in 0..mdp.states {
        let row = &full[s * joint..(s + 1) * joint];
        let vf = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let vd = dec[0][s * m..(s + 1) * m].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max_value_gap = max_value_gap.max((vf - vd).abs());
        for a in 0..joint {
            max_q_gap = max_q_gap.max((row[a] - dec[k - 1][s * joint + a]).abs());
        }
        let best = masked_argmax(row, joint);
        let runner_up = row
            .iter()
            .enumerate()
            .filter(|&(a, _)| a != best)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if vf - runner_up > 1e-9 {
            checked += 1;
            let mut prefix = 0;
            for table in &dec {
                let width = table.len() / mdp.states;
                let start = s * width + prefix * m;
                prefix = prefix * m + masked_argmax(&table[start..start + m], m);
            }
            if prefix == best {
                agree += 1;
            }
        }
    }
    let passed = max_value_gap <= tol && max_q_gap <= tol && agree == checked;
    Ok(DecompositionReport { max_value_gap, max_q_gap, greedy_checked: checked, greedy_agree: agree, tol, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub coordinates: usize,
    /// Coordinates whose analytic or numeric gradient exceeded the floor.
    pub compared: usize,
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
}

/// Relative errors are only taken where either gradient exceeds this.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Central finite differences of the loss (with targets frozen at the
/// unperturbed Q-values) against the analytic gradient, on every parameter.
pub fn grad_check(
    net: &QNetwork,
    traj: &Trajectory,
    cfg: &LossConfig,
    h_fd: f64,
    inject_sign_error: bool,
) -> Result<GradCheckReport> {
    let (q, cache) = net.q_values_for_trajectory(traj)?;
    let targets = bellman_targets(&q, traj, cfg)?;
    let (_, dq) = loss_with_targets(&q, &targets, traj, cfg, inject_sign_error)?;
    let analytic = net.backward(&cache, &dq)?.to_flat();
    let base = net.to_flat();
    let loss_at = |flat: &[f64]| -> Result<f64> {
        let mut probe = net.clone();
        probe.assign_flat(flat)?;
        let (q, _) = probe.q_values_for_trajectory(traj)?;
        Ok(loss_with_targets(&q, &targets, traj, cfg, false)?.0.total)
    };
    let numeric: Vec<f64> = (0..base.len())
        .into_par_iter()
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + h_fd;
            let up = loss_at(&p)?;
            p[i] = base[i] - h_fd;
            let down = loss_at(&p)?;
            Ok((up - down) / (2.0 * h_fd))
        })
        .collect::<Result<_>>()?;
    let mut report = GradCheckReport {
        coordinates: base.len(),
        compared: 0,
        max_rel_error: 0.0,
        max_abs_analytic: 0.0,
        max_abs_numeric: 0.0,
    };
    for (a, n) in analytic.iter().zip(&numeric) {
        report.max_abs_analytic = report.max_abs_analytic.max(a.abs());
        report.max_abs_numeric = report.max_abs_numeric.max(n.abs());
        let scale = a.abs().max(n.abs());
        if scale > GRAD_FLOOR {
            report.compared += 1;
            report.max_rel_error = report.max_rel_error.max((a - n).abs() / scale);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::AlgorithmId;
    use crate::env::{OptimizationState, StepRecord, TrajectoryMeta};
    use crate::qnet::QConfig;
    use crate::rng::rng_from_seed;

    fn traj(k: usize, m: usize, actions: Vec<Vec<usize>>, rewards: Vec<f64>) -> Trajectory {
        let alg = match k {
            3 => AlgorithmId::Alg0,
            10 => AlgorithmId::Alg1,
            _ => AlgorithmId::Alg2,
        };
        let mut best = 1.0;
        let steps = actions
            .into_iter()
            .zip(rewards)
            .enumerate()
            .map(|(t, (a, r))| {
                best -= r;
                StepRecord {
                    state: OptimizationState([0.1 * t as f64, 0.5, 0.2, 0.3, 0.1, 0.05, 0.9, 0.0, 1.0]),
                    actions: a,
                    reward: r,
                    best_so_far_f: best,
                }
            })
            .collect::<Vec<_>>();
        Trajectory {
            meta: TrajectoryMeta {
                alg_id: alg,
                k,
                m,
                function_id: 1,
                dim: 5,
                instance_seed: 0,
                episode_seed: 0,
                horizon: steps.len(),
                policy_id: "t".into(),
                exploitation: false,
                f_best_init: 1.0,
                f_star: 0.0,
            },
            steps,
        }
    }

    #[test]
    fn zero_q_zero_reward_zero_loss() {
        let tr = traj(3, 16, vec![vec![1, 2, 3]; 2], vec![0.0; 2]);
        let q = vec![vec![0.0; 16]; 6];
        let (parts, dq) = q_loss(&q, &tr, &LossConfig::default()).unwrap();
        assert_eq!(parts.total, 0.0);
        assert!(dq.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn adamw_zero_lr_is_identity() {
        let cfg = LossConfig { learning_rate: 0.0, ..Default::default() };
        let mut opt = AdamW::new(&cfg, 3);
        let mut p = vec![1.0, -2.0, 3.5];
        opt.step(&mut p, &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn adamw_first_step_magnitude() {
        // first bias-corrected step is lr * sign(g) (up to eps) plus decay
        let cfg = LossConfig { learning_rate: 0.1, weight_decay: 0.0, ..Default::default() };
        let mut opt = AdamW::new(&cfg, 2);
        let mut p = vec![0.0, 0.0];
        opt.step(&mut p, &[3.0, -0.5]).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-8 && (p[1] - 0.1).abs() < 1e-8);
    }

    #[test]
    fn gamma_zero_decomposition_equals_reward() {
        let mdp = TabularMdp::random(3, 2, 2, 0.0, &mut rng_from_seed(1));
        let dec = decomposed_value_iteration(&mdp);
        assert_eq!(dec[1], mdp.rewards);
    }

    #[test]
    fn one_state_identity_rewards() {
        let mdp = TabularMdp {
            states: 1,
            k: 1,
            m: 4,
            rewards: vec![0.0, 1.0, 2.0, 3.0],
            transitions: vec![1.0; 4],
            gamma: 0.0,
        };
        assert_eq!(full_value_iteration(&mdp), mdp.rewards);
        assert_eq!(decomposed_value_iteration(&mdp)[0], mdp.rewards);
        assert!(verify_decomposition(&mdp, 0.0).unwrap().passed);
    }

    #[test]
    fn non_stochastic_rejected() {
        let mut mdp = TabularMdp::random(2, 1, 2, 0.5, &mut rng_from_seed(2));
        mdp.transitions[0] += 0.1;
        assert!(matches!(verify_decomposition(&mdp, 1e-8), Err(Error::NonStochastic { state: 0, action: 0, .. })));
    }

    #[test]
    fn lr_zero_training_keeps_parameters() {
        let cfg = QConfig { k: 3, m: 16, d_model: 4, d_state: 2, depth: 1 };
        let mut net = QNetwork::init(cfg, &mut rng_from_seed(3)).unwrap();
        let before = net.clone();
        let data = vec![traj(3, 16, vec![vec![1, 2, 3]; 3], vec![0.5, 0.2, 0.1])];
        let lc = LossConfig { learning_rate: 0.0, epochs: 1, batch_size: 1, ..Default::default() };
        train(&data, &mut net, &lc, 0, 0, None, &mut |_, _, _| Ok(())).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn rejects_mismatched_model() {
        let cfg = QConfig { k: 10, m: 16, d_model: 4, d_state: 2, depth: 1 };
        let mut net = QNetwork::init(cfg, &mut rng_from_seed(3)).unwrap();
        let data = vec![traj(3, 16, vec![vec![1, 2, 3]], vec![0.5])];
        let lc = LossConfig { epochs: 1, ..Default::default() };
        assert!(matches!(
            train(&data, &mut net, &lc, 0, 0, None, &mut |_, _, _| Ok(())),
            Err(Error::ConfigMismatch(_))
        ));
        assert!(matches!(train(&[], &mut net, &lc, 0, 0, None, &mut |_, _, _| Ok(())), Err(Error::EmptyDataset)));
    }
}

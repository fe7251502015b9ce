//! The three controllable evolutionary algorithms and their configuration spaces.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ea::{
    bound_control, crossover, de_mutate, ga_mutate, halton_init, lpsr, select, share_information,
    BoundMethod, Crossover, DeMutation, GaMutation, ParentSelection, Population, Selection,
};
use crate::error::{Error, Result};
use crate::problem::{Interval, ProblemInstance};
use crate::rng::{rng_from_seed, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum AlgorithmId {
    /// DE/current-to-rand/1/exponential, K = 3.
    Alg0,
    /// GA + DE/best/2/binomial hybrid with sharing, K = 10.
    Alg1,
    /// Four sub-population GA/DE hybrid with sharing, K = 16.
    Alg2,
}

impl TryFrom<u8> for AlgorithmId {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Self::Alg0),
            1 => Ok(Self::Alg1),
            2 => Ok(Self::Alg2),
            _ => Err(Error::UnknownAlgorithm(v)),
        }
    }
}

impl From<AlgorithmId> for u8 {
    fn from(a: AlgorithmId) -> u8 {
        match a {
            AlgorithmId::Alg0 => 0,
            AlgorithmId::Alg1 => 1,
            AlgorithmId::Alg2 => 2,
        }
    }
}

impl AlgorithmId {
    pub fn k(self) -> usize {
        match self {
            Self::Alg0 => 3,
            Self::Alg1 => 10,
            Self::Alg2 => 16,
        }
    }

    pub fn initial_sizes(self) -> &'static [usize] {
        match self {
            Self::Alg0 => &[100],
            Self::Alg1 => &[50, 200],
            Self::Alg2 => &[200, 100, 100, 100],
        }
    }
}

/// A concrete hyper-parameter value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamValue {
    Real(f64),
    Bound(BoundMethod),
    Parent(ParentSelection),
    /// Index of the sub-population to share with.
    Target(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParamKind {
    Continuous { lo: f64, hi: f64 },
    Discrete(Vec<ParamValue>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperParameterSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    /// Position in the action sequence (0-based).
    pub index: usize,
}

impl HyperParameterSpec {
    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, ParamKind::Continuous { .. })
    }

    fn accepts(&self, v: &ParamValue) -> bool {
        match (&self.kind, v) {
            (ParamKind::Continuous { lo, hi }, ParamValue::Real(x)) => *x >= *lo && *x <= *hi,
            (ParamKind::Discrete(choices), v) => choices.contains(v),
            _ => false,
        }
    }
}

fn unit(name: &'static str) -> (&'static str, ParamKind) {
    (name, ParamKind::Continuous { lo: 0.0, hi: 1.0 })
}

fn bound_selector(name: &'static str) -> (&'static str, ParamKind) {
    (name, ParamKind::Discrete(BoundMethod::ALL.iter().map(|&b| ParamValue::Bound(b)).collect()))
}

fn parent_selector(name: &'static str) -> (&'static str, ParamKind) {
    (
        name,
        ParamKind::Discrete(vec![
            ParamValue::Parent(ParentSelection::Uniform),
            ParamValue::Parent(ParentSelection::FitnessRank),
        ]),
    )
}

fn share_selector(name: &'static str, n: usize) -> (&'static str, ParamKind) {
    (name, ParamKind::Discrete((0..n).map(ParamValue::Target).collect()))
}

fn eta_selector(name: &'static str) -> (&'static str, ParamKind) {
    (name, ParamKind::Discrete([1.0, 2.0, 3.0].map(ParamValue::Real).to_vec()))
}

/// Ordered configuration space of an algorithm.
pub fn alg_spec(alg: AlgorithmId) -> Vec<HyperParameterSpec> {
    let entries = match alg {
        AlgorithmId::Alg0 => vec![unit("F1"), unit("F2"), unit("Cr")],
        AlgorithmId::Alg1 => vec![
            unit("Cr1"),
            parent_selector("Xr_mpx"),
            unit("sigma"),
            bound_selector("bc1"),
            share_selector("cm1", 2),
            unit("F1"),
            unit("F2"),
            unit("Cr2"),
            bound_selector("bc2"),
            share_selector("cm2", 2),
        ],
        AlgorithmId::Alg2 => vec![
            unit("Cr1"),
            parent_selector("Xr_mpx"),
            eta_selector("eta_m"),
            eta_selector("eta_c"),
            parent_selector("Xr_sbx"),
            unit("sigma"),
            unit("F1_3"),
            unit("F2_3"),
            unit("Cr3"),
            unit("F1_4"),
            unit("F2_4"),
            unit("Cr4"),
            share_selector("cm1", 4),
            share_selector("cm2", 4),
            share_selector("cm3", 4),
            share_selector("cm4", 4),
        ],
    };
    entries
        .into_iter()
        .enumerate()
        .map(|(index, (name, kind))| HyperParameterSpec { name, kind, index })
        .collect()
}

/// Settings that are not part of the controllable configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmOptions {
    /// Final size of Alg0's LPSR schedule; `None` keeps the initial 100.
    pub alg0_lpsr_final: Option<usize>,
    /// Final size of Alg1's GA sub-population.
    pub alg1_ga_final: usize,
    /// When false, sharing selectors are ignored.
    pub sharing: bool,
}

impl Default for AlgorithmOptions {
    fn default() -> Self {
        Self {
            alg0_lpsr_final: None,
            alg1_ga_final: 10,
            sharing: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmState {
    alg: AlgorithmId,
    options: AlgorithmOptions,
    subpops: Vec<Population>,
    /// (initial, final) size per sub-population.
    schedules: Vec<(usize, usize)>,
    t: usize,
    horizon: usize,
    stagnation: usize,
    improved: bool,
    best_so_far_f: f64,
    best_so_far_x: Vec<f64>,
    evaluations: u64,
    range: Interval,
}

/// Evaluates the initial sub-populations.
pub fn init_state(
    alg: AlgorithmId,
    problem: &ProblemInstance,
    horizon: usize,
    seed: u64,
    options: AlgorithmOptions,
) -> Result<AlgorithmState> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let dim = problem.dim();
    let range = problem.range();
    let sizes = alg.initial_sizes();
    let total: usize = sizes.iter().sum();
    let mut rng = rng_from_seed(seed);
    let points = match alg {
        AlgorithmId::Alg0 => (0..total)
            .map(|_| (0..dim).map(|_| rng.random_range(range.lo..=range.hi)).collect())
            .collect(),
        _ => halton_init(total, dim, range, Some(rng.random())),
    };
    let mut subpops = Vec::with_capacity(sizes.len());
    let mut it = points.into_iter();
    for &n in sizes {
        let x: Vec<Vec<f64>> = it.by_ref().take(n).collect();
        subpops.push(Population::evaluate(problem, x)?);
    }
    let schedules = match alg {
        AlgorithmId::Alg0 => vec![(100, options.alg0_lpsr_final.unwrap_or(100))],
        AlgorithmId::Alg1 => vec![(50, options.alg1_ga_final), (200, 200)],
        AlgorithmId::Alg2 => sizes.iter().map(|&n| (n, n)).collect(),
    };
    for &(init, fin) in &schedules {
        if fin > init || fin == 0 {
            return Err(Error::InvalidParameter(format!("LPSR final size {fin} must be in 1..={init}")));
        }
    }
    let (bx, bf) = global_best(&subpops);
    Ok(AlgorithmState {
        alg,
        options,
        subpops,
        schedules,
        t: 0,
        horizon,
        stagnation: 0,
        improved: false,
        best_so_far_f: bf,
        best_so_far_x: bx,
        evaluations: total as u64,
        range,
    })
}

/// Wraps already evaluated sub-populations at generation 0 without any size
/// schedule. Useful for inspecting features of hand-made populations.
pub fn state_from_populations(
    alg: AlgorithmId,
    subpops: Vec<Population>,
    horizon: usize,
    range: Interval,
) -> Result<AlgorithmState> {
    if subpops.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let (bx, bf) = global_best(&subpops);
    let evaluations = subpops.iter().map(|p| p.len() as u64).sum();
    Ok(AlgorithmState {
        alg,
        options: AlgorithmOptions::default(),
        schedules: subpops.iter().map(|p| (p.len(), p.len())).collect(),
        subpops,
        t: 0,
        horizon,
        stagnation: 0,
        improved: false,
        best_so_far_f: bf,
        best_so_far_x: bx,
        evaluations,
        range,
    })
}

fn global_best(pops: &[Population]) -> (Vec<f64>, f64) {
    let best = pops
        .iter()
        .min_by(|a, b| a.best_so_far_f().total_cmp(&b.best_so_far_f()))
        .expect("at least one sub-population");
    (best.best_so_far_x().to_vec(), best.best_so_far_f())
}

struct Config<'a>(&'a [ParamValue]);

impl Config<'_> {
    fn real(&self, i: usize) -> f64 {
        match self.0[i] {
            ParamValue::Real(v) => v,
            _ => unreachable!("validated"),
        }
    }
    fn bound(&self, i: usize) -> BoundMethod {
        match self.0[i] {
            ParamValue::Bound(b) => b,
            _ => unreachable!("validated"),
        }
    }
    fn parent(&self, i: usize) -> ParentSelection {
        match self.0[i] {
            ParamValue::Parent(p) => p,
            _ => unreachable!("validated"),
        }
    }
    fn target(&self, i: usize) -> usize {
        match self.0[i] {
            ParamValue::Target(t) => t,
            _ => unreachable!("validated"),
        }
    }
}

/// Checks a configuration against the algorithm's space.
pub fn validate_config(alg: AlgorithmId, config: &[ParamValue]) -> Result<()> {
    let spec = alg_spec(alg);
    if config.len() != spec.len() {
        return Err(Error::ConfigMismatch(format!(
            "expected {} values, got {}",
            spec.len(),
            config.len()
        )));
    }
    for (s, v) in spec.iter().zip(config) {
        if !s.accepts(v) {
            return Err(Error::ConfigMismatch(format!("{v:?} is not a legal value for {}", s.name)));
        }
    }
    Ok(())
}

impl AlgorithmState {
    pub fn alg(&self) -> AlgorithmId {
        self.alg
    }
    pub fn subpops(&self) -> &[Population] {
        &self.subpops
    }
    pub fn generation(&self) -> usize {
        self.t
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn stagnation(&self) -> usize {
        self.stagnation
    }
    /// Whether the last generation beat the previous best-so-far.
    pub fn improved(&self) -> bool {
        self.improved
    }
    pub fn best_so_far_f(&self) -> f64 {
        self.best_so_far_f
    }
    pub fn best_so_far_x(&self) -> &[f64] {
        &self.best_so_far_x
    }
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }
    pub fn range(&self) -> Interval {
        self.range
    }
    pub fn sizes(&self) -> Vec<usize> {
        self.subpops.iter().map(Population::len).collect()
    }

    /// Best member of the current generation across all sub-populations.
    pub fn generation_best(&self) -> (&[f64], f64) {
        let p = self
            .subpops
            .iter()
            .min_by(|a, b| a.best_f().total_cmp(&b.best_f()))
            .expect("at least one sub-population");
        (p.best_x(), p.best_f())
    }

    /// Runs one generation with a fully specified configuration and returns
    /// the number of objective evaluations it consumed.
    pub fn step(&mut self, config: &[ParamValue], problem: &ProblemInstance, rng: &mut Rng) -> Result<u64> {
        validate_config(self.alg, config)?;
        if problem.dim() != self.subpops[0].dim() {
            return Err(Error::DimensionMismatch {
                expected: self.subpops[0].dim(),
                got: problem.dim(),
            });
        }
        let c = Config(config);
        let before = self.evaluations;
        let range = self.range;
        match self.alg {
            AlgorithmId::Alg0 => {
                let pop = &self.subpops[0];
                let trial = de_mutate(DeMutation::CurrentToRand1, pop, c.real(0), c.real(1), rng)?;
                let x2 = crossover(Crossover::Exponential { cr: c.real(2) }, pop.x(), &trial, pop.fitness(), rng)?;
                let x2 = bound_control(BoundMethod::Clip, &x2, pop.x(), range, rng)?;
                let next = self.evaluate_and_select(0, x2, Selection::GreedyPairwise, problem, rng)?;
                self.subpops[0] = next;
            }
            AlgorithmId::Alg1 => {
                // GA sub-population: MPX -> Gaussian -> bound control -> roulette
                let pop = &self.subpops[0];
                let x1 = crossover(
                    Crossover::Mpx { cr: c.real(0), parent: c.parent(1) },
                    pop.x(),
                    pop.x(),
                    pop.fitness(),
                    rng,
                )?;
                let x1 = ga_mutate(GaMutation::Gaussian { sigma: c.real(2) }, &x1, range, rng)?;
                let x1 = bound_control(c.bound(3), &x1, pop.x(), range, rng)?;
                let ga = self.evaluate_and_select(0, x1, Selection::Roulette, problem, rng)?;
                // DE sub-population: best/2 -> binomial -> bound control -> greedy
                let pop = &self.subpops[1];
                let trial = de_mutate(DeMutation::Best2, pop, c.real(5), c.real(6), rng)?;
                let x2 = crossover(Crossover::Binomial { cr: c.real(7) }, pop.x(), &trial, pop.fitness(), rng)?;
                let x2 = bound_control(c.bound(8), &x2, pop.x(), range, rng)?;
                let de = self.evaluate_and_select(1, x2, Selection::GreedyPairwise, problem, rng)?;
                self.subpops = vec![ga, de];
                if self.options.sharing {
                    share_information(&mut self.subpops, &[c.target(4), c.target(9)])?;
                }
            }
            AlgorithmId::Alg2 => {
                let pop = &self.subpops[0];
                let x1 = crossover(
                    Crossover::Mpx { cr: c.real(0), parent: c.parent(1) },
                    pop.x(),
                    pop.x(),
                    pop.fitness(),
                    rng,
                )?;
                let x1 = ga_mutate(GaMutation::Polynomial { eta_m: c.real(2) }, &x1, range, rng)?;
                let x1 = bound_control(BoundMethod::Clip, &x1, pop.x(), range, rng)?;
                let s1 = self.evaluate_and_select(0, x1, Selection::Roulette, problem, rng)?;

                let pop = &self.subpops[1];
                let x2 = crossover(
                    Crossover::Sbx { eta_c: c.real(3), parent: c.parent(4) },
                    pop.x(),
                    pop.x(),
                    pop.fitness(),
                    rng,
                )?;
                let x2 = ga_mutate(GaMutation::Gaussian { sigma: c.real(5) }, &x2, range, rng)?;
                let x2 = bound_control(BoundMethod::Clip, &x2, pop.x(), range, rng)?;
                let s2 = self.evaluate_and_select(1, x2, Selection::Tournament, problem, rng)?;

                let pop = &self.subpops[2];
                let trial = de_mutate(DeMutation::Rand2, pop, c.real(6), c.real(7), rng)?;
                let x3 = crossover(Crossover::Exponential { cr: c.real(8) }, pop.x(), &trial, pop.fitness(), rng)?;
                let x3 = bound_control(BoundMethod::Clip, &x3, pop.x(), range, rng)?;
                let s3 = self.evaluate_and_select(2, x3, Selection::GreedyPairwise, problem, rng)?;

                let pop = &self.subpops[3];
                let trial = de_mutate(DeMutation::CurrentToBest1, pop, c.real(9), c.real(10), rng)?;
                let x4 = crossover(Crossover::Binomial { cr: c.real(11) }, pop.x(), &trial, pop.fitness(), rng)?;
                let x4 = bound_control(BoundMethod::Clip, &x4, pop.x(), range, rng)?;
                let s4 = self.evaluate_and_select(3, x4, Selection::GreedyPairwise, problem, rng)?;

                self.subpops = vec![s1, s2, s3, s4];
                if self.options.sharing {
                    let cm: Vec<usize> = (12..16).map(|i| c.target(i)).collect();
                    share_information(&mut self.subpops, &cm)?;
                }
            }
        }
        self.t += 1;
        for (pop, &(init, fin)) in self.subpops.iter_mut().zip(&self.schedules) {
            if fin < init {
                lpsr(pop, self.t, self.horizon, init, fin);
            }
        }
        let (bx, bf) = global_best(&self.subpops);
        self.improved = bf < self.best_so_far_f;
        if self.improved {
            self.best_so_far_f = bf;
            self.best_so_far_x = bx;
            self.stagnation = 0;
        } else {
            self.stagnation += 1;
        }
        Ok(self.evaluations - before)
    }

    fn evaluate_and_select(
        &mut self,
        which: usize,
        offspring: Vec<Vec<f64>>,
        selection: Selection,
        problem: &ProblemInstance,
        rng: &mut Rng,
    ) -> Result<Population> {
        let f = problem.evaluate(&offspring)?;
        self.evaluations += f.len() as u64;
        select(selection, &self.subpops[which], offspring, f, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::make_instance;
    use crate::rng::rng_from_seed;

    fn mid_config(alg: AlgorithmId) -> Vec<ParamValue> {
        alg_spec(alg)
            .iter()
            .map(|s| match &s.kind {
                ParamKind::Continuous { lo, hi } => ParamValue::Real(0.5 * (lo + hi)),
                ParamKind::Discrete(c) => c[c.len() - 1],
            })
            .collect()
    }

    #[test]
    fn spec_sizes() {
        assert_eq!(alg_spec(AlgorithmId::Alg0).len(), 3);
        let s1 = alg_spec(AlgorithmId::Alg1);
        assert_eq!(s1.len(), 10);
        let bc = s1
            .iter()
            .filter(|s| matches!(&s.kind, ParamKind::Discrete(c) if c.len() == 5))
            .count();
        assert_eq!(bc, 2);
        assert_eq!(alg_spec(AlgorithmId::Alg2).len(), 16);
        assert!(matches!(AlgorithmId::try_from(3), Err(Error::UnknownAlgorithm(3))));
    }

    #[test]
    fn initial_sizes() {
        let p = make_instance(1, 5, 1).unwrap();
        let s0 = init_state(AlgorithmId::Alg0, &p, 10, 1, AlgorithmOptions::default()).unwrap();
        assert_eq!(s0.sizes(), vec![100]);
        let s1 = init_state(AlgorithmId::Alg1, &p, 10, 1, AlgorithmOptions::default()).unwrap();
        assert_eq!(s1.sizes(), vec![50, 200]);
        let s2 = init_state(AlgorithmId::Alg2, &p, 10, 1, AlgorithmOptions::default()).unwrap();
        assert_eq!(s2.sizes().iter().sum::<usize>(), 500);
        assert_eq!(s2.sizes(), vec![200, 100, 100, 100]);
        assert_eq!(s2.evaluations(), 500);
    }

    #[test]
    fn alg0_zero_config_keeps_population() {
        let p = make_instance(3, 5, 2).unwrap();
        let mut s = init_state(AlgorithmId::Alg0, &p, 10, 4, AlgorithmOptions::default()).unwrap();
        let before = s.subpops()[0].clone();
        let used = s.step(&[ParamValue::Real(0.0); 3], &p, &mut rng_from_seed(9)).unwrap();
        assert_eq!(used, 100);
        assert_eq!(s.subpops()[0].x(), before.x());
        assert_eq!(s.subpops()[0].fitness(), before.fitness());
        assert_eq!(s.stagnation(), 1);
        assert!(!s.improved());
    }

    #[test]
    fn best_so_far_monotone_and_sizes_follow_schedule() {
        let p = make_instance(15, 10, 3).unwrap();
        for alg in [AlgorithmId::Alg0, AlgorithmId::Alg1, AlgorithmId::Alg2] {
            let horizon = 8;
            let mut s = init_state(alg, &p, horizon, 5, AlgorithmOptions::default()).unwrap();
            let mut rng = rng_from_seed(6);
            let cfg = mid_config(alg);
            let mut prev = s.best_so_far_f();
            let mut evals = s.evaluations();
            for t in 1..=horizon {
                let sizes_before = s.sizes();
                let used = s.step(&cfg, &p, &mut rng).unwrap();
                assert_eq!(used, sizes_before.iter().sum::<usize>() as u64);
                evals += used;
                assert_eq!(s.evaluations(), evals);
                assert!(s.best_so_far_f() <= prev);
                prev = s.best_so_far_f();
                assert_eq!(s.generation(), t);
                if alg == AlgorithmId::Alg1 {
                    assert_eq!(s.sizes()[0], crate::ea::lpsr_target(t, horizon, 50, 10));
                }
                for pop in s.subpops() {
                    assert!(pop.x().iter().flatten().all(|&v| p.range().contains(v)));
                }
            }
            if alg == AlgorithmId::Alg1 {
                assert_eq!(s.sizes(), vec![10, 200]);
            }
        }
    }

    #[test]
    fn alg2_self_sharing_equals_disabled_sharing() {
        let p = make_instance(8, 5, 7).unwrap();
        let mut cfg = mid_config(AlgorithmId::Alg2);
        for (k, i) in (12..16).enumerate() {
            cfg[i] = ParamValue::Target(k);
        }
        let mut a = init_state(AlgorithmId::Alg2, &p, 5, 1, AlgorithmOptions::default()).unwrap();
        let off = AlgorithmOptions { sharing: false, ..Default::default() };
        let mut b = init_state(AlgorithmId::Alg2, &p, 5, 1, off).unwrap();
        let (mut ra, mut rb) = (rng_from_seed(2), rng_from_seed(2));
        for _ in 0..3 {
            a.step(&cfg, &p, &mut ra).unwrap();
            b.step(&cfg, &p, &mut rb).unwrap();
        }
        assert_eq!(a.subpops(), b.subpops());
    }

    #[test]
    fn rejects_bad_config() {
        let p = make_instance(1, 5, 1).unwrap();
        let mut s = init_state(AlgorithmId::Alg0, &p, 5, 1, AlgorithmOptions::default()).unwrap();
        let mut rng = rng_from_seed(0);
        assert!(matches!(s.step(&[ParamValue::Real(0.5); 2], &p, &mut rng), Err(Error::ConfigMismatch(_))));
        assert!(matches!(
            s.step(&[ParamValue::Real(0.5), ParamValue::Real(1.5), ParamValue::Real(0.5)], &p, &mut rng),
            Err(Error::ConfigMismatch(_))
        ));
        assert!(matches!(
            s.step(&[ParamValue::Target(0), ParamValue::Real(0.5), ParamValue::Real(0.5)], &p, &mut rng),
            Err(Error::ConfigMismatch(_))
        ));
    }

    #[test]
    fn episodes_reproducible() {
        let p = make_instance(21, 5, 1).unwrap();
        let run = || {
            let mut s = init_state(AlgorithmId::Alg1, &p, 5, 3, AlgorithmOptions::default()).unwrap();
            let mut rng = rng_from_seed(11);
            let cfg = mid_config(AlgorithmId::Alg1);
            for _ in 0..5 {
                s.step(&cfg, &p, &mut rng).unwrap();
            }
            s
        };
        assert_eq!(run(), run());
    }
}

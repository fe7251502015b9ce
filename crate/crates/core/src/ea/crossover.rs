//! Recombination operators. Binomial and exponential crossover mix each base
//! row with its row-aligned trial vector; MPX and SBX pick a partner row from
//! the donor population.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// How MPX and SBX choose the partner solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParentSelection {
    Uniform,
    /// Rank-proportional: the best of n members has weight n, the worst 1.
    FitnessRank,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Crossover {
    Binomial { cr: f64 },
    Exponential { cr: f64 },
    Mpx { cr: f64, parent: ParentSelection },
    Sbx { eta_c: f64, parent: ParentSelection },
}

/// Random choices for one row of a crossover.
#[derive(Clone, Debug, PartialEq)]
pub enum CrossoverDraw {
    Binomial { rand: Vec<f64>, jrand: usize },
    Exponential { start: usize, len: usize },
    Mpx { partner: usize, rand: Vec<f64> },
    Sbx { partner: usize, u: Vec<f64>, flip: bool },
}

/// Rank weights for minimization: rank 1 (lowest fitness) gets weight n.
pub fn rank_weights(fitness: &[f64]) -> Vec<f64> {
    let n = fitness.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
    let mut w = vec![0.0; n];
    for (rank0, &i) in order.iter().enumerate() {
        w[i] = (n - rank0) as f64;
    }
    w
}

fn pick_partner(i: usize, np: usize, sel: ParentSelection, weights: Option<&WeightedIndex<f64>>, rng: &mut Rng) -> usize {
    if np < 2 {
        return i;
    }
    match sel {
        ParentSelection::Uniform => {
            let j = rng.random_range(0..np - 1);
            if j >= i {
                j + 1
            } else {
                j
            }
        }
        ParentSelection::FitnessRank => {
            let dist = weights.expect("rank weights prepared");
            loop {
                let j = dist.sample(rng);
                if j != i {
                    return j;
                }
            }
        }
    }
}

impl Crossover {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Crossover::Binomial { cr } | Crossover::Exponential { cr } | Crossover::Mpx { cr, .. } => {
                if !(0.0..=1.0).contains(&cr) {
                    return Err(Error::InvalidParameter(format!("Cr = {cr} outside [0, 1]")));
                }
            }
            Crossover::Sbx { eta_c, .. } => {
                if !(eta_c.is_finite() && eta_c >= 0.0) {
                    return Err(Error::InvalidParameter(format!("eta_c = {eta_c} must be a nonnegative number")));
                }
            }
        }
        Ok(())
    }

    /// Draws the per-row randomness. `donor_fitness` is only used for rank-based
    /// partner choice.
    pub fn sample(&self, np: usize, dim: usize, donor_fitness: &[f64], rng: &mut Rng) -> Result<Vec<CrossoverDraw>> {
        self.validate()?;
        let weights = match self {
            Crossover::Mpx { parent: ParentSelection::FitnessRank, .. }
            | Crossover::Sbx { parent: ParentSelection::FitnessRank, .. } => Some(
                WeightedIndex::new(rank_weights(donor_fitness))
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?,
            ),
            _ => None,
        };
        let draws = (0..np)
            .map(|i| match *self {
                Crossover::Binomial { .. } => {
                    let rand = (0..dim).map(|_| rng.random::<f64>()).collect();
                    let jrand = rng.random_range(0..dim);
                    CrossoverDraw::Binomial { rand, jrand }
                }
                Crossover::Exponential { cr } => {
                    let start = rng.random_range(0..dim);
                    let mut len = 1;
                    while len < dim && rng.random::<f64>() < cr {
                        len += 1;
                    }
                    CrossoverDraw::Exponential { start, len }
                }
                Crossover::Mpx { parent, .. } => {
                    let partner = pick_partner(i, donor_fitness.len(), parent, weights.as_ref(), rng);
                    let rand = (0..dim).map(|_| rng.random::<f64>()).collect();
                    CrossoverDraw::Mpx { partner, rand }
                }
                Crossover::Sbx { parent, .. } => {
                    let partner = pick_partner(i, donor_fitness.len(), parent, weights.as_ref(), rng);
                    let u = (0..dim).map(|_| rng.random::<f64>()).collect();
                    let flip = rng.random_bool(0.5);
                    CrossoverDraw::Sbx { partner, u, flip }
                }
            })
            .collect();
        Ok(draws)
    }

    /// Combines `base` with `donor` according to pre-drawn randomness.
    pub fn apply(&self, base: &[Vec<f64>], donor: &[Vec<f64>], draws: &[CrossoverDraw]) -> Result<Vec<Vec<f64>>> {
        if draws.len() != base.len() {
            return Err(Error::ShapeMismatch(format!("{} draws for {} rows", draws.len(), base.len())));
        }
        base.iter()
            .zip(draws)
            .enumerate()
            .map(|(i, (x, draw))| {
                let dim = x.len();
                Ok(match (*self, draw) {
                    (Crossover::Binomial { cr }, CrossoverDraw::Binomial { rand, jrand }) => {
                        let t = &donor[i];
                        (0..dim).map(|j| if rand[j] < cr || j == *jrand { t[j] } else { x[j] }).collect()
                    }
                    (Crossover::Exponential { .. }, CrossoverDraw::Exponential { start, len }) => {
                        let t = &donor[i];
                        let mut out = x.clone();
                        for step in 0..*len {
                            let j = (start + step) % dim;
                            out[j] = t[j];
                        }
                        out
                    }
                    (Crossover::Mpx { cr, .. }, CrossoverDraw::Mpx { partner, rand }) => {
                        let p = &donor[*partner];
                        (0..dim).map(|j| if rand[j] < cr { p[j] } else { x[j] }).collect()
                    }
                    (Crossover::Sbx { eta_c, .. }, CrossoverDraw::Sbx { partner, u, flip }) => {
                        let p = &donor[*partner];
                        (0..dim)
                            .map(|j| {
                                let beta = sbx_beta(u[j], eta_c);
                                if *flip {
                                    0.5 * ((1.0 + beta) * x[j] + (1.0 - beta) * p[j])
                                } else {
                                    0.5 * ((1.0 - beta) * x[j] + (1.0 + beta) * p[j])
                                }
                            })
                            .collect()
                    }
                    _ => return Err(Error::InvalidParameter("crossover draw does not match variant".into())),
                })
            })
            .collect()
    }
}

/// Spread factor of the SBX variant used here: (2u)^(1/(1+eta)) - 1 for u <= 0.5,
/// (1/(2-2u))^(1/(1+eta)) otherwise.
pub fn sbx_beta(u: f64, eta_c: f64) -> f64 {
    let e = 1.0 / (1.0 + eta_c);
    if u <= 0.5 {
        (2.0 * u).powf(e) - 1.0
    } else {
        (1.0 / (2.0 - 2.0 * u)).powf(e)
    }
}

/// Recombines `base` with `donor` (trial vectors for binomial/exponential,
/// partner pool for MPX/SBX).
pub fn crossover(
    variant: Crossover,
    base: &[Vec<f64>],
    donor: &[Vec<f64>],
    donor_fitness: &[f64],
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>> {
    if base.is_empty() {
        return Ok(Vec::new());
    }
    let dim = base[0].len();
    if donor.iter().chain(base).any(|r| r.len() != dim) {
        return Err(Error::ShapeMismatch("rows of differing dimension".into()));
    }
    if matches!(variant, Crossover::Binomial { .. } | Crossover::Exponential { .. }) && donor.len() != base.len() {
        return Err(Error::ShapeMismatch(format!("{} trial rows for {} base rows", donor.len(), base.len())));
    }
    let draws = variant.sample(base.len(), dim, donor_fitness, rng)?;
    variant.apply(base, donor, &draws)
}

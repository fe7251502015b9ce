//! Survivor selection. Every variant folds all offspring into the best-so-far
//! record, whether or not they survive.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use super::crossover::rank_weights;
use super::Population;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Keep the better of parent i and offspring i.
    GreedyPairwise,
    /// Rank-proportional sampling with replacement from parents ∪ offspring.
    Roulette,
    /// Binary tournaments over parents ∪ offspring.
    Tournament,
}

pub fn select(
    variant: Selection,
    parents: &Population,
    offspring_x: Vec<Vec<f64>>,
    offspring_f: Vec<f64>,
    rng: &mut Rng,
) -> Result<Population> {
    if offspring_x.len() != offspring_f.len() {
        return Err(Error::ShapeMismatch("offspring and fitness lengths differ".into()));
    }
    let np = parents.len();
    let mut next = parents.clone();
    next.observe_all(&offspring_x, &offspring_f);
    match variant {
        Selection::GreedyPairwise => {
            if offspring_x.len() != np {
                return Err(Error::ShapeMismatch(format!(
                    "{} offspring for {} parents",
                    offspring_x.len(),
                    np
                )));
            }
            let mut x = Vec::with_capacity(np);
            let mut f = Vec::with_capacity(np);
            for (i, (ox, of)) in offspring_x.into_iter().zip(offspring_f).enumerate() {
                if of <= parents.fitness()[i] {
                    x.push(ox);
                    f.push(of);
                } else {
                    x.push(parents.x()[i].clone());
                    f.push(parents.fitness()[i]);
                }
            }
            next.replace_members(x, f);
        }
        Selection::Roulette | Selection::Tournament => {
            let mut pool_x = parents.x().to_vec();
            pool_x.extend(offspring_x);
            let mut pool_f = parents.fitness().to_vec();
            pool_f.extend(offspring_f);
            let chosen = if variant == Selection::Roulette {
                roulette_indices(&pool_f, np, rng)?
            } else {
                tournament_indices(&pool_f, np, rng)
            };
            let x = chosen.iter().map(|&i| pool_x[i].clone()).collect();
            let f = chosen.iter().map(|&i| pool_f[i]).collect();
            next.replace_members(x, f);
        }
    }
    Ok(next)
}

/// `count` draws with replacement, probability proportional to rank weight.
pub fn roulette_indices(pool_f: &[f64], count: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(rank_weights(pool_f)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// `count` binary tournaments between two distinct uniformly drawn candidates.
pub fn tournament_indices(pool_f: &[f64], count: usize, rng: &mut Rng) -> Vec<usize> {
    let n = pool_f.len();
    (0..count)
        .map(|_| {
            if n == 1 {
                return 0;
            }
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            if pool_f[b] < pool_f[a] {
                b
            } else {
                a
            }
        })
        .collect()
}

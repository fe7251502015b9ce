//! Differential-evolution mutation strategies.

use rand::seq::index::sample;

use super::Population;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeMutation {
    /// x_i + F1 (x_r1 - x_i) + F2 (x_r2 - x_r3)
    CurrentToRand1,
    /// x* + F1 (x_r1 - x_r2) + F2 (x_r3 - x_r4)
    Best2,
    /// x_r1 + F1 (x_r2 - x_r3) + F2 (x_r4 - x_r5)
    Rand2,
    /// x_i + F1 (x* - x_i) + F2 (x_r1 - x_r2)
    CurrentToBest1,
}

impl DeMutation {
    pub fn random_indices(self) -> usize {
        match self {
            Self::CurrentToRand1 => 3,
            Self::Best2 => 4,
            Self::Rand2 => 5,
            Self::CurrentToBest1 => 2,
        }
    }

    pub fn min_population(self) -> usize {
        self.random_indices() + 1
    }
}

/// Draws, for every base index `i`, distinct random indices that also differ from `i`.
pub fn sample_de_indices(variant: DeMutation, np: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    let k = variant.random_indices();
    if np < variant.min_population() {
        return Err(Error::PopulationTooSmall {
            needed: variant.min_population(),
            got: np,
        });
    }
    Ok((0..np)
        .map(|i| {
            sample(rng, np - 1, k)
                .into_iter()
                .map(|j| if j >= i { j + 1 } else { j })
                .collect()
        })
        .collect())
}

/// Applies the mutation formula given pre-drawn indices.
pub fn apply_de(
    variant: DeMutation,
    x: &[Vec<f64>],
    best: usize,
    f1: f64,
    f2: f64,
    indices: &[Vec<usize>],
) -> Vec<Vec<f64>> {
    x.iter()
        .zip(indices)
        .map(|(xi, r)| {
            let xb = &x[best];
            (0..xi.len())
                .map(|j| match variant {
                    DeMutation::CurrentToRand1 => {
                        xi[j] + f1 * (x[r[0]][j] - xi[j]) + f2 * (x[r[1]][j] - x[r[2]][j])
                    }
                    DeMutation::Best2 => {
                        xb[j] + f1 * (x[r[0]][j] - x[r[1]][j]) + f2 * (x[r[2]][j] - x[r[3]][j])
                    }
                    DeMutation::Rand2 => {
                        x[r[0]][j] + f1 * (x[r[1]][j] - x[r[2]][j]) + f2 * (x[r[3]][j] - x[r[4]][j])
                    }
                    DeMutation::CurrentToBest1 => {
                        xi[j] + f1 * (xb[j] - xi[j]) + f2 * (x[r[0]][j] - x[r[1]][j])
                    }
                })
                .collect()
        })
        .collect()
}

/// Produces one trial vector per member of `pop`.
pub fn de_mutate(
    variant: DeMutation,
    pop: &Population,
    f1: f64,
    f2: f64,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>> {
    let idx = sample_de_indices(variant, pop.len(), rng)?;
    Ok(apply_de(variant, pop.x(), pop.best_index(), f1, f2, &idx))
}

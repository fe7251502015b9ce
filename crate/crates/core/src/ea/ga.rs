//! GA mutation operators.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::problem::Interval;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GaMutation {
    /// x + sigma (ub - lb) N(0, 1), sigma in [0, 1]
    Gaussian { sigma: f64 },
    /// Two-branch polynomial mutation with distribution index eta_m.
    Polynomial { eta_m: f64 },
}

impl GaMutation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GaMutation::Gaussian { sigma } if !(0.0..=1.0).contains(&sigma) => {
                Err(Error::InvalidParameter(format!("sigma = {sigma} outside [0, 1]")))
            }
            GaMutation::Polynomial { eta_m } if !(eta_m.is_finite() && eta_m >= 0.0) => {
                Err(Error::InvalidParameter(format!("eta_m = {eta_m} must be a nonnegative number")))
            }
            _ => Ok(()),
        }
    }

    /// One random number per gene: a standard normal for Gaussian, u ~ U[0,1) for polynomial.
    pub fn sample(&self, np: usize, dim: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        (0..np)
            .map(|_| {
                (0..dim)
                    .map(|_| match self {
                        GaMutation::Gaussian { .. } => StandardNormal.sample(rng),
                        GaMutation::Polynomial { .. } => rng.random::<f64>(),
                    })
                    .collect()
            })
            .collect()
    }

    pub fn apply(&self, x: &[Vec<f64>], draws: &[Vec<f64>], range: Interval) -> Vec<Vec<f64>> {
        x.iter()
            .zip(draws)
            .map(|(row, d)| {
                row.iter()
                    .zip(d)
                    .map(|(&v, &r)| match *self {
                        GaMutation::Gaussian { sigma } => v + sigma * range.width() * r,
                        GaMutation::Polynomial { eta_m } => polynomial_gene(v, r, eta_m, range),
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn polynomial_gene(x: f64, u: f64, eta_m: f64, range: Interval) -> f64 {
    let e = 1.0 / (1.0 + eta_m);
    if u <= 0.5 {
        x + ((2.0 * u).powf(e) - 1.0) * (x - range.lo)
    } else {
        x + (1.0 - (2.0 - 2.0 * u).powf(e)) * (range.hi - x)
    }
}

pub fn ga_mutate(variant: GaMutation, x: &[Vec<f64>], range: Interval, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
    variant.validate()?;
    let dim = x.first().map_or(0, Vec::len);
    let draws = variant.sample(x.len(), dim, rng);
    Ok(variant.apply(x, &draws, range))
}

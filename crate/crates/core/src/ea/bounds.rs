use rand::Rng as _;

use crate::error::{Error, Result};
use crate::problem::Interval;
use crate::rng::Rng;

/// Repair strategies for coordinates that left the search box. The order is
/// the selector order used by the algorithms' `bc` parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundMethod {
    Clip,
    Random,
    Periodic,
    Reflect,
    Halving,
}

impl BoundMethod {
    pub const ALL: [BoundMethod; 5] = [
        BoundMethod::Clip,
        BoundMethod::Random,
        BoundMethod::Periodic,
        BoundMethod::Reflect,
        BoundMethod::Halving,
    ];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or(Error::InvalidBoundMethod(i))
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundMethod::Clip => "clip",
            BoundMethod::Random => "rand",
            BoundMethod::Periodic => "periodic",
            BoundMethod::Reflect => "reflect",
            BoundMethod::Halving => "halving",
        }
    }

    /// Repairs one coordinate. `parent` is the in-range value the coordinate was derived from.
    pub fn repair(self, v: f64, parent: f64, range: Interval, rng: &mut Rng) -> f64 {
        if range.contains(v) {
            return v;
        }
        let w = range.width();
        let out = match self {
            BoundMethod::Clip => range.clamp(v),
            BoundMethod::Random => rng.random_range(range.lo..=range.hi),
            BoundMethod::Periodic => range.lo + (v - range.lo).rem_euclid(w),
            BoundMethod::Reflect => {
                let y = (v - range.lo).rem_euclid(2.0 * w);
                range.lo + if y > w { 2.0 * w - y } else { y }
            }
            BoundMethod::Halving => {
                let p = range.clamp(parent);
                if v > range.hi {
                    0.5 * (range.hi + p)
                } else {
                    0.5 * (range.lo + p)
                }
            }
        };
        range.clamp(out)
    }
}

/// Repairs every out-of-range coordinate of `x`; in-range coordinates pass through.
pub fn bound_control(
    method: BoundMethod,
    x: &[Vec<f64>],
    parent_x: &[Vec<f64>],
    range: Interval,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>> {
    if x.len() != parent_x.len() {
        return Err(Error::ShapeMismatch(format!("{} rows but {} parents", x.len(), parent_x.len())));
    }
    Ok(x.iter()
        .zip(parent_x)
        .map(|(row, par)| {
            row.iter()
                .zip(par)
                .map(|(&v, &p)| method.repair(v, p, range, rng))
                .collect()
        })
        .collect())
}

//! Halton sequence with optional seeded digit-permutation scrambling.

use rand::Rng as _;

use crate::problem::Interval;
use crate::rng::rng_from_seed;

const PRIMES: [u64; 50] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229,
];

/// Multi-dimensional Halton generator. Dimension `d` uses the `d`-th prime as base.
///
/// With scrambling, every digit of dimension `d` is mapped through a fixed random
/// permutation of `0..base` that keeps 0 in place, so trailing zero digits stay
/// zero and every point remains a finite expansion.
#[derive(Clone, Debug)]
pub struct Halton {
    bases: Vec<u64>,
    perms: Option<Vec<Vec<u64>>>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, scramble_seed: Option<u64>) -> Self {
        assert!(dim <= PRIMES.len(), "Halton supports up to {} dimensions", PRIMES.len());
        let bases = PRIMES[..dim].to_vec();
        let perms = scramble_seed.map(|seed| {
            let mut rng = rng_from_seed(seed);
            bases
                .iter()
                .map(|&b| {
                    let mut p: Vec<u64> = (0..b).collect();
                    for i in (2..b as usize).rev() {
                        let j = rng.random_range(1..=i);
                        p.swap(i, j);
                    }
                    p
                })
                .collect()
        });
        Self {
            bases,
            perms,
            index: 1,
        }
    }

    fn radical_inverse(&self, dim: usize, mut n: u64) -> f64 {
        let base = self.bases[dim];
        let inv = 1.0 / base as f64;
        let mut factor = inv;
        let mut value = 0.0;
        while n > 0 {
            let digit = n % base;
            let digit = match &self.perms {
                Some(p) => p[dim][digit as usize],
                None => digit,
            };
            value += digit as f64 * factor;
            factor *= inv;
            n /= base;
        }
        value
    }
}

impl Iterator for Halton {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        let n = self.index;
        self.index += 1;
        Some((0..self.bases.len()).map(|d| self.radical_inverse(d, n)).collect())
    }
}

/// First `np` Halton points scaled into `range` in every coordinate.
pub fn halton_init(np: usize, dim: usize, range: Interval, seed: Option<u64>) -> Vec<Vec<f64>> {
    Halton::new(dim, seed)
        .take(np)
        .map(|p| p.into_iter().map(|u| range.lo + u * range.width()).collect())
        .collect()
}

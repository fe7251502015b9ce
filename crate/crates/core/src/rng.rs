//! Seed plumbing. Every stochastic component draws from its own ChaCha8
//! stream whose seed is derived from a parent seed plus a few tags, so
//! episodes can run in any order and still produce identical content.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `tags` into `base` to produce an independent child seed.
///
/// Tags are offset before hashing so that a tag equal to the running state
/// (e.g. `derive_seed(s, &[s])`) cannot cancel it out.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(base), |acc, &t| {
        splitmix64(acc.rotate_left(23) ^ splitmix64(t.wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(base: u64, tags: &[u64]) -> Rng {
    rng_from_seed(derive_seed(base, tags))
}

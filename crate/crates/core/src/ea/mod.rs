//! Evolutionary operators shared by the controllable algorithms.
//!
//! Stochastic operators are split into a `sample` step that draws all random
//! numbers and a deterministic `apply` step, so results can be replayed from
//! recorded draws.

pub mod bounds;
pub mod crossover;
pub mod ga;
pub mod halton;
pub mod mutation;
mod population;
pub mod selection;

pub use bounds::{bound_control, BoundMethod};
pub use crossover::{crossover, Crossover, CrossoverDraw, ParentSelection};
pub use ga::{ga_mutate, GaMutation};
pub use halton::{halton_init, Halton};
pub use mutation::{de_mutate, DeMutation};
pub use population::Population;
pub use selection::{select, Selection};

use crate::error::{Error, Result};

/// Linear population size schedule: round(init + (final - init) t / horizon).
pub fn lpsr_target(t: usize, horizon: usize, np_init: usize, np_final: usize) -> usize {
    if horizon == 0 {
        return np_init;
    }
    let t = t.min(horizon) as f64;
    let v = np_init as f64 + (np_final as f64 - np_init as f64) * t / horizon as f64;
    v.round() as usize
}

/// Drops the worst members until the population matches the schedule at `t`.
pub fn lpsr(pop: &mut Population, t: usize, horizon: usize, np_init: usize, np_final: usize) {
    let target = lpsr_target(t, horizon, np_init, np_final).max(1);
    pop.keep_best(target);
}

/// Replaces the worst member of `pops[i]` by the best member of `pops[cm[i]]`
/// for every `i` with `cm[i] != i`. All donor bests are read before any write.
pub fn share_information(pops: &mut [Population], cm: &[usize]) -> Result<()> {
    if cm.len() != pops.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} sharing targets for {} sub-populations",
            cm.len(),
            pops.len()
        )));
    }
    if let Some(&bad) = cm.iter().find(|&&c| c >= pops.len()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: pops.len(),
        });
    }
    let donors: Vec<(Vec<f64>, f64)> = pops
        .iter()
        .map(|p| (p.best_x().to_vec(), p.best_f()))
        .collect();
    for (i, &target) in cm.iter().enumerate() {
        if target == i {
            continue;
        }
        let worst = pops[i].worst_index();
        let (x, f) = donors[target].clone();
        pops[i].set_member(worst, x, f);
    }
    Ok(())
}

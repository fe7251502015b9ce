//! Shared helpers for integration tests.
#![allow(dead_code)]

pub mod oracles;

use dac_core::algorithms::AlgorithmId;
use dac_core::env::{OptimizationState, StepRecord, Trajectory, TrajectoryMeta};

/// Hand-built trajectory with a consistent best-so-far sequence.
pub fn trajectory(alg: AlgorithmId, m: usize, actions: Vec<Vec<usize>>, rewards: Vec<f64>, seed: u64) -> Trajectory {
    let mut best = 1.0;
    let steps: Vec<StepRecord> = actions
        .into_iter()
        .zip(rewards)
        .enumerate()
        .map(|(t, (a, r))| {
            best -= r;
            let phase = seed as f64 * 0.37 + t as f64;
            StepRecord {
                state: OptimizationState([
                    0.5 + 0.3 * phase.sin(),
                    0.4,
                    0.2 + 0.1 * phase.cos(),
                    0.3,
                    0.1,
                    0.05,
                    1.0 - 0.1 * t as f64,
                    0.0,
                    (t % 2) as f64,
                ]),
                actions: a,
                reward: r,
                best_so_far_f: best,
            }
        })
        .collect();
    Trajectory {
        meta: TrajectoryMeta {
            alg_id: alg,
            k: alg.k(),
            m,
            function_id: 1,
            dim: 5,
            instance_seed: 0,
            episode_seed: seed,
            horizon: steps.len(),
            policy_id: "fixture".into(),
            exploitation: false,
            f_best_init: 1.0,
            f_star: 0.0,
        },
        steps,
    }
}

/// Like [`trajectory`] but with an arbitrary K; every bin counts as legal.
pub fn trajectory_k(k: usize, m: usize, actions: Vec<Vec<usize>>, rewards: Vec<f64>, seed: u64) -> Trajectory {
    let mut tr = trajectory(AlgorithmId::Alg0, m, actions, rewards, seed);
    tr.meta.k = k;
    tr
}

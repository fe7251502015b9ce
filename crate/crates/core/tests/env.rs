mod support;

use dac_core::algorithms::{init_state, AlgorithmId, AlgorithmOptions};
use dac_core::env::{
    cal_state, reward, run_episode, EpisodeConfig, EpisodeContext, OptimizationState, REWARD_TOL,
};
use dac_core::problem::make_instance;
use dac_core::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng as _;
use support::oracles;

fn random_policy(seed: u64) -> impl FnMut(&OptimizationState, usize, &[usize]) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    move |_, _, limits| limits.iter().map(|&m| rng.random_range(0..m)).collect()
}

fn check_against_oracle(alg: AlgorithmId, fid: u8, seed: u64, steps: usize) {
    let p = make_instance(fid, 5, seed).unwrap();
    let mut st = init_state(alg, &p, 20, seed, AlgorithmOptions::default()).unwrap();
    let mut rng = rng_from_seed(seed + 1);
    let specs = dac_core::algorithms::alg_spec(alg);
    for _ in 0..steps {
        let bins: Vec<usize> = specs.iter().map(|s| rng.random_range(0..dac_core::env::mask_bins(s, 16))).collect();
        let cfg = dac_core::env::decode_config(&specs, &bins, 16).unwrap();
        st.step(&cfg, &p, &mut rng).unwrap();
    }
    let ctx = EpisodeContext::new(&st, p.f_opt(), false);
    let s = cal_state(&st, &ctx).unwrap();
    let x: Vec<Vec<f64>> = st.subpops().iter().flat_map(|q| q.x().to_vec()).collect();
    let f: Vec<f64> = st.subpops().iter().flat_map(|q| q.fitness().to_vec()).collect();
    let mut gen_best = 0;
    for i in 1..f.len() {
        if f[i] < f[gen_best] {
            gen_best = i;
        }
    }
    let want = oracles::raw_features(&x, &f, gen_best, st.best_so_far_x(), st.best_so_far_f());
    for k in 0..6 {
        let tol = 1e-12 * want[k].abs().max(1.0);
        assert!((s.0[k] - want[k]).abs() <= tol, "feature {k}: {} vs {}", s.0[k], want[k]);
    }
    assert!(s.0[3] >= s.0[4] && s.0[4] >= 0.0);
}

#[test]
fn features_match_scalar_oracle() {
    check_against_oracle(AlgorithmId::Alg0, 3, 1, 0);
    check_against_oracle(AlgorithmId::Alg0, 7, 2, 4);
    check_against_oracle(AlgorithmId::Alg1, 12, 3, 3);
    check_against_oracle(AlgorithmId::Alg2, 20, 4, 2);
}

#[test]
fn collapsed_population_has_zero_spread() {
    let p = make_instance(1, 5, 1).unwrap();
    let pop = dac_core::ea::Population::evaluate(&p, vec![vec![0.3; 5]; 10]).unwrap();
    let st = dac_core::algorithms::state_from_populations(AlgorithmId::Alg0, vec![pop], 10, p.range()).unwrap();
    for normalize in [false, true] {
        let ctx = EpisodeContext::new(&st, p.f_opt(), normalize);
        let s = cal_state(&st, &ctx).unwrap();
        assert_eq!((s.0[0], s.0[1], s.0[5]), (0.0, 0.0, 0.0));
        assert_eq!((s.0[6], s.0[7]), (1.0, 0.0));
    }
}

#[test]
fn reward_telescopes() {
    let mut rng = rng_from_seed(5);
    for _ in 0..100 {
        let f_star = rng.random_range(-50.0..50.0);
        let f0 = f_star + rng.random_range(0.1..1000.0);
        let mut seq = vec![f0];
        for _ in 0..30 {
            let last = *seq.last().unwrap();
            seq.push(last - rng.random_range(0.0..1.0) * (last - f_star) * 0.3);
        }
        let sum: f64 = seq.windows(2).map(|w| reward(w[0], w[1], f0, f_star)).sum();
        let want = (f0 - seq.last().unwrap()) / (f0 - f_star);
        assert!((sum - want).abs() <= 1e-12, "{sum} vs {want}");
    }
}

#[test]
fn random_policy_improves_sphere() {
    let p = make_instance(1, 5, 9).unwrap();
    let cfg = EpisodeConfig::new(AlgorithmId::Alg0, 50);
    let mut improved = 0;
    for seed in 0..19u64 {
        let mut pol = random_policy(seed);
        let tr = run_episode(&cfg, &p, &mut pol, seed, "random").unwrap();
        tr.validate().unwrap();
        if tr.steps.last().unwrap().best_so_far_f < tr.meta.f_best_init {
            improved += 1;
        }
    }
    assert!(improved > 9, "only {improved}/19 improved");
}

#[test]
fn every_function_and_algorithm_keeps_reward_bounds() {
    for alg in [AlgorithmId::Alg0, AlgorithmId::Alg1, AlgorithmId::Alg2] {
        let cfg = EpisodeConfig::new(alg, 6);
        for fid in 1..=24u8 {
            let p = make_instance(fid, 5, fid as u64).unwrap();
            let mut pol = random_policy(fid as u64);
            let tr = run_episode(&cfg, &p, &mut pol, 3, "random").unwrap();
            tr.validate().unwrap();
            assert!(tr.episode_return() <= 1.0 + REWARD_TOL);
            for st in &tr.steps {
                assert!(st.reward >= 0.0);
                assert!(st.state.0[..6].iter().all(|v| (0.0..=1.0).contains(v)));
                assert!((0.0..=1.0).contains(&st.state.0[6]) && (0.0..=1.0).contains(&st.state.0[7]));
                assert!(st.state.0[8] == 0.0 || st.state.0[8] == 1.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reward_nonnegative_and_bounded(
        f_star in -100.0f64..100.0,
        gap0 in 1e-3f64..1e4,
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let f0 = f_star + gap0;
        let prev = f_star + gap0 * a.max(b);
        let now = f_star + gap0 * a.min(b);
        let r = reward(prev, now, f0, f_star);
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn decode_inverts_grid(bin in 0usize..16, m_idx in 0usize..2) {
        let m = [16, 32][m_idx];
        let spec = &dac_core::algorithms::alg_spec(AlgorithmId::Alg0)[0];
        let b = bin * m / 16;
        match dac_core::env::decode_action(spec, b, m).unwrap() {
            dac_core::algorithms::ParamValue::Real(v) => prop_assert_eq!(dac_core::env::encode_value(0.0, 1.0, v, m), b),
            _ => prop_assert!(false),
        }
    }

    #[test]
    fn episode_return_at_most_one(seed in 0u64..1000, fid in 1u8..=24) {
        let p = make_instance(fid, 5, seed).unwrap();
        let cfg = EpisodeConfig::new(AlgorithmId::Alg0, 5);
        let mut pol = random_policy(seed);
        let tr = run_episode(&cfg, &p, &mut pol, seed, "random").unwrap();
        prop_assert!(tr.validate().is_ok());
        prop_assert!(tr.episode_return() <= 1.0 + REWARD_TOL);
    }
}

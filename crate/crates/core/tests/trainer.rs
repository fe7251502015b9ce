mod support;

use dac_core::algorithms::AlgorithmId;
use dac_core::qnet::{QConfig, QNetwork};
use dac_core::rng::rng_from_seed;
use dac_core::trainer::{
    dataset_loss, grad_check, q_loss, train, verify_decomposition, LossConfig, TabularMdp,
};
use proptest::prelude::*;
use rand::Rng as _;
use support::{oracles, trajectory, trajectory_k};

fn small_net(k: usize, m: usize, seed: u64) -> QNetwork {
    let cfg = QConfig { d_model: 8, d_state: 4, ..QConfig::new(k, m) };
    QNetwork::init(cfg, &mut rng_from_seed(seed)).unwrap()
}

#[test]
fn analytic_loss_example() {
    let tr = trajectory_k(1, 2, vec![vec![0]], vec![0.5], 0);
    let (parts, dq) = q_loss(&[vec![1.0, 0.2]], &tr, &LossConfig::default()).unwrap();
    assert!((parts.total - 1.27).abs() <= 1e-12, "{}", parts.total);
    assert!((parts.last - 1.25).abs() <= 1e-12 && (parts.conservative - 0.02).abs() <= 1e-12);
    assert!((dq[0][0] - 5.0).abs() <= 1e-12 && (dq[0][1] - 0.2).abs() <= 1e-12);
}

#[test]
fn all_zero_case_has_zero_loss() {
    let tr = trajectory_k(2, 4, vec![vec![1, 2], vec![0, 3]], vec![0.0, 0.0], 0);
    let (parts, dq) = q_loss(&vec![vec![0.0; 4]; 4], &tr, &LossConfig::default()).unwrap();
    assert_eq!(parts.total, 0.0);
    assert!(dq.iter().flatten().all(|&g| g == 0.0));
}

#[test]
fn loss_matches_triple_loop_oracle() {
    let mut rng = rng_from_seed(11);
    for (alg, m) in [(AlgorithmId::Alg0, 16), (AlgorithmId::Alg1, 16), (AlgorithmId::Alg2, 32)] {
        let k = alg.k();
        let t_len = 4;
        let tr0 = trajectory(alg, m, vec![vec![0; k]; t_len], vec![0.1; t_len], 3);
        let limits = tr0.limits();
        let actions: Vec<Vec<usize>> =
            (0..t_len).map(|_| limits.iter().map(|&l| rng.random_range(0..l)).collect()).collect();
        let rewards: Vec<f64> = (0..t_len).map(|_| rng.random_range(0.0..0.2)).collect();
        let tr = trajectory(alg, m, actions.clone(), rewards.clone(), 3);
        let q3: Vec<Vec<Vec<f64>>> = (0..t_len)
            .map(|_| (0..k).map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
            .collect();
        let flat: Vec<Vec<f64>> = q3.iter().flatten().cloned().collect();
        let cfg = LossConfig { beta: 3.0, lambda: 0.7, gamma: 0.9, ..LossConfig::default() };
        let got = q_loss(&flat, &tr, &cfg).unwrap().0.total;
        let want = oracles::q_loss(&q3, &actions, &rewards, &limits, 3.0, 0.7, 0.9);
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }
}

fn fixture() -> dac_core::env::Trajectory {
    trajectory(AlgorithmId::Alg0, 16, vec![vec![3, 9, 1], vec![15, 0, 2], vec![7, 7, 0]], vec![0.3, 0.1, 0.05], 2)
}

#[test]
fn gradient_check_passes_and_catches_sign_error() {
    let net = small_net(3, 16, 5);
    let tr = fixture();
    let cfg = LossConfig::default();
    let ok = grad_check(&net, &tr, &cfg, 1e-4, false).unwrap();
    assert!(ok.compared > 0 && ok.max_rel_error <= 1e-4, "{ok:?}");
    let bad = grad_check(&net, &tr, &cfg, 1e-4, true).unwrap();
    assert!(bad.max_rel_error > 1e-4, "{bad:?}");
}

#[test]
fn finite_difference_error_is_second_order() {
    // a smooth functional of Q on the coordinate of block0.a_log with the
    // largest gradient; central differences should lose accuracy as h²
    let net = small_net(3, 16, 6);
    let tr = fixture();
    let weights: Vec<Vec<f64>> = (0..9).map(|r| (0..16).map(|j| ((r * 16 + j) as f64 * 0.37).cos()).collect()).collect();
    let functional = |n: &QNetwork| -> f64 {
        let (q, _) = n.q_values_for_trajectory(&tr).unwrap();
        q.iter().flatten().zip(weights.iter().flatten()).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = net.q_values_for_trajectory(&tr).unwrap();
    let grads = net.backward(&cache, &weights).unwrap();
    let g = &grads.blocks[0].a_log.data;
    let coord = (0..g.len()).max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs())).unwrap();
    let fd_error = |h: f64| {
        let mut p = net.clone();
        p.blocks[0].a_log.data[coord] += h;
        let up = functional(&p);
        p.blocks[0].a_log.data[coord] -= 2.0 * h;
        ((up - functional(&p)) / (2.0 * h) - g[coord]).abs()
    };
    let (e1, e2) = (fd_error(0.05), fd_error(0.1));
    let ratio = e2 / e1;
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio} ({e1} -> {e2})");
}

#[test]
fn decomposition_matches_policy_iteration() {
    let mut rng = rng_from_seed(12);
    let mut strict_failures = 0;
    for _ in 0..100 {
        let mdp = TabularMdp::random(3, 2, 2, 0.9, &mut rng);
        mdp.validate().unwrap();
        let report = verify_decomposition(&mdp, 1e-8).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.greedy_agree, report.greedy_checked);
        if !verify_decomposition(&mdp, 1e-14).unwrap().passed {
            strict_failures += 1;
        }
    }
    assert!(strict_failures > 0, "1e-14 should be below the iteration's rounding floor");
}

#[test]
fn singleton_dataset_loss_descends() {
    let mut net = small_net(3, 16, 7);
    let data = vec![fixture()];
    let cfg = LossConfig { epochs: 60, batch_size: 1, ..LossConfig::default() };
    let report = train(&data, &mut net, &cfg, 1, 0, None, &mut |_, _, _| Ok(())).unwrap();
    let first = report.curve[0].loss.total;
    let last = report.curve.last().unwrap().loss.total;
    assert!(last < 0.5 * first, "{first} -> {last}");
}

fn toy_dataset(n: usize) -> Vec<dac_core::env::Trajectory> {
    let mut rng = rng_from_seed(13);
    (0..n)
        .map(|s| {
            let actions = (0..5).map(|_| vec![rng.random_range(0..16), rng.random_range(0..16), rng.random_range(0..3)]).collect();
            let rewards = (0..5).map(|_| rng.random_range(0.0..0.15)).collect();
            trajectory(AlgorithmId::Alg0, 16, actions, rewards, s as u64)
        })
        .collect()
}

#[test]
fn toy_dataset_trains_to_finite_loss() {
    let data = toy_dataset(50);
    let mut net = small_net(3, 16, 8);
    let cfg = LossConfig { epochs: 5, batch_size: 16, ..LossConfig::default() };
    let report = train(&data, &mut net, &cfg, 2, 0, None, &mut |_, _, _| Ok(())).unwrap();
    assert!(report.curve.iter().all(|s| s.loss.total.is_finite()));
    assert!(dataset_loss(&net, &data, &cfg).unwrap().total.is_finite());
}

#[test]
fn training_is_bit_reproducible() {
    let data = toy_dataset(20);
    let cfg = LossConfig { epochs: 3, batch_size: 8, ..LossConfig::default() };
    let run = || {
        let mut net = small_net(3, 16, 9);
        let report = train(&data, &mut net, &cfg, 4, 0, None, &mut |_, _, _| Ok(())).unwrap();
        (net.to_flat(), report.curve)
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_nonnegative_and_zero_gradient_without_mass(
        q in prop::collection::vec(-3.0f64..3.0, 6),
        r in 0.0f64..0.5,
        a in 0usize..3,
        b in 0usize..3,
    ) {
        let tr = trajectory_k(2, 3, vec![vec![a, b]], vec![r], 0);
        let rows = vec![q[..3].to_vec(), q[3..].to_vec()];
        let (parts, _) = q_loss(&rows, &tr, &LossConfig::default()).unwrap();
        prop_assert!(parts.total >= 0.0 && parts.intra >= 0.0 && parts.last >= 0.0 && parts.conservative >= 0.0);
        prop_assert!((parts.total - parts.intra - parts.last - parts.conservative).abs() <= 1e-12);
    }
}

mod common;

use common::{garnets, max_abs_diff, naive_fixed_point, twin_policy, with_twins, Operator};
use mdp_metrics::analysis::kernel_partition;
use mdp_metrics::mdp::generate_garnet;
use mdp_metrics::metrics::{
    avf_metric, bisimulation_metric, bisimulation_partition, delta_forall_metric_bruteforce, delta_pi_metric,
    delta_star_metric, eta_abstraction, lax_bisimulation_metric, lax_bisimulation_partition,
    pi_bisimulation_metric, pi_bisimulation_partition, DEFAULT_PARTITION_EPS,
};
use mdp_metrics::rng;
use mdp_metrics::{Partition, Policy, StateMetric};
use ndarray::array;
use rand::Rng;

const TOL: f64 = 1e-6;

fn twin_partition(n: usize) -> Partition {
    Partition::from_indices(&(0..2 * n).map(|s| s % n).collect::<Vec<_>>())
}

#[test]
fn pruned_fixed_points_match_the_plain_lp_iteration() {
    for (i, mdp) in garnets(4, 6, 3).into_iter().enumerate() {
        let pi = Policy::uniform(6, 3);
        let cases: [(StateMetric, Operator<'_>); 3] = [
            (bisimulation_metric(&mdp, TOL).unwrap(), Operator::Bisim),
            (lax_bisimulation_metric(&mdp, TOL).unwrap(), Operator::Lax),
            (pi_bisimulation_metric(&mdp, &pi, TOL).unwrap(), Operator::Pi(&pi)),
        ];
        for (ours, op) in cases {
            let reference = naive_fixed_point(&mdp, op, TOL);
            let gap = max_abs_diff(&ours.d, &reference);
            assert!(gap < 1e-9, "garnet {i}, {}: {gap}", ours.kind);
        }
    }
}

#[test]
fn pruned_fixed_points_match_on_twinned_states() {
    let base = generate_garnet(4, 2, 11).unwrap();
    let mdp = with_twins(&base, &[1, 0]);
    let ours = lax_bisimulation_metric(&mdp, TOL).unwrap();
    assert!(max_abs_diff(&ours.d, &naive_fixed_point(&mdp, Operator::Lax, TOL)) < 1e-9);
    let ours = bisimulation_metric(&mdp, TOL).unwrap();
    assert!(max_abs_diff(&ours.d, &naive_fixed_point(&mdp, Operator::Bisim, TOL)) < 1e-9);
}

#[test]
fn metrics_are_valid_pseudometrics() {
    let mut rng = rng::stream(23);
    for seed in 0..25u64 {
        let (ns, na) = (rng.random_range(2..=10), rng.random_range(1..=4));
        let mdp = generate_garnet(ns, na, seed).unwrap();
        let pi = Policy::uniform(ns, na);
        let bound = mdp.r_max() / (1.0 - mdp.gamma()) + TOL;
        let metrics = [
            bisimulation_metric(&mdp, TOL).unwrap(),
            lax_bisimulation_metric(&mdp, TOL).unwrap(),
            pi_bisimulation_metric(&mdp, &pi, TOL).unwrap(),
            delta_star_metric(&mdp, TOL).unwrap(),
            delta_pi_metric(&mdp, &pi, TOL).unwrap(),
            avf_metric(&mdp, 10, seed).unwrap(),
        ];
        for d in &metrics {
            assert!(d.is_valid_pseudometric_shape(), "{}", d.kind);
            assert!(d.max_triangle_violation() <= 1e-9, "{}: {}", d.kind, d.max_triangle_violation());
            assert!(d.d.iter().all(|&x| x <= bound), "{}", d.kind);
        }
    }
}

#[test]
fn fixed_point_iterates_contract() {
    for mdp in garnets(10, 8, 3) {
        for d in [bisimulation_metric(&mdp, 1e-8).unwrap(), lax_bisimulation_metric(&mdp, 1e-8).unwrap()] {
            let h = &d.meta.residual_history;
            assert_eq!(h.len(), d.meta.iterations);
            assert!(d.meta.residual <= 1e-8);
            for w in h.windows(2) {
                assert!(w[1] <= mdp.gamma() * w[0] + 1e-12, "{} {w:?}", d.kind);
            }
        }
    }
}

#[test]
fn kernels_recover_twin_classes() {
    let root = TOL.sqrt();
    for seed in 0..10 {
        let base = generate_garnet(5, 3, seed).unwrap();
        let twins = twin_partition(5);

        let same = with_twins(&base, &[0, 1, 2]);
        assert_eq!(bisimulation_partition(&same, DEFAULT_PARTITION_EPS), twins);
        assert_eq!(kernel_partition(&bisimulation_metric(&same, TOL).unwrap(), root), twins);

        let permuted = with_twins(&base, &[2, 0, 1]);
        assert_eq!(bisimulation_partition(&permuted, DEFAULT_PARTITION_EPS), Partition::singletons(10));
        assert_eq!(kernel_partition(&bisimulation_metric(&permuted, TOL).unwrap(), root), Partition::singletons(10));
        assert_eq!(lax_bisimulation_partition(&permuted, DEFAULT_PARTITION_EPS), twins);
        assert_eq!(kernel_partition(&lax_bisimulation_metric(&permuted, TOL).unwrap(), root), twins);

        let pi = twin_policy(&Policy::deterministic(&[0, 1, 2, 0, 1], 3).unwrap(), &[2, 0, 1]);
        assert_eq!(pi_bisimulation_partition(&permuted, &pi, DEFAULT_PARTITION_EPS).unwrap(), twins);
        assert_eq!(kernel_partition(&pi_bisimulation_metric(&permuted, &pi, TOL).unwrap(), root), twins);
    }
}

#[test]
fn value_metrics_vanish_on_twins() {
    let base = generate_garnet(4, 2, 5).unwrap();
    let mdp = with_twins(&base, &[0, 1]);
    let pi = twin_policy(&Policy::uniform(4, 2), &[0, 1]);
    for d in [
        delta_star_metric(&mdp, 1e-10).unwrap(),
        delta_pi_metric(&mdp, &pi, 1e-10).unwrap(),
        delta_forall_metric_bruteforce(&mdp, 1 << 20).unwrap(),
        avf_metric(&mdp, 20, 3).unwrap(),
    ] {
        for s in 0..4 {
            assert!(d.get(s, s + 4) < 1e-8, "{}", d.kind);
        }
    }
}

#[test]
fn delta_forall_dominates_every_policy_metric() {
    let mdp = generate_garnet(4, 2, 3).unwrap();
    let all = delta_forall_metric_bruteforce(&mdp, 1 << 20).unwrap();
    let star = delta_star_metric(&mdp, 1e-10).unwrap();
    assert!(star.d.iter().zip(&all.d).all(|(a, b)| *a <= b + 1e-8));
    for actions in common::all_deterministic(4, 2) {
        let pi = Policy::deterministic(&actions, 2).unwrap();
        let dpi = delta_pi_metric(&mdp, &pi, 1e-10).unwrap();
        assert!(dpi.d.iter().zip(&all.d).all(|(a, b)| *a <= b + 1e-8));
    }
    let avf = avf_metric(&mdp, 30, 1).unwrap();
    assert!(avf.d.iter().zip(&all.d).all(|(a, b)| *a <= b + 1e-12));
}

#[test]
fn eta_abstraction_is_not_transitive() {
    let eta = 0.5;
    let f = array![[0.0], [eta], [2.0 * eta]];
    let p = eta_abstraction(f.view(), eta).unwrap();
    assert_eq!(p.num_blocks(), 2);
    let merged = eta_abstraction(array![[0.0], [0.4], [0.8]].view(), eta).unwrap();
    // 0.4 joins 0.0; 0.8 is within eta of 0.4 but not of the representative
    assert_eq!(merged.block_of(), &[0, 0, 1]);
}

#[test]
fn pi_bisimulation_bounds_values_but_not_action_values() {
    // state 0 pays 1 or 0, state 1 pays 0.5 either way; both self-loop and the uniform policy averages them out
    let mut p = ndarray::Array3::zeros((2, 2, 2));
    for a in 0..2 {
        p[[0, a, 0]] = 1.0;
        p[[1, a, 1]] = 1.0;
    }
    let mdp = mdp_metrics::FiniteMdp::new(array![[1.0, 0.0], [0.5, 0.5]], p, 0.9).unwrap();
    let pi = Policy::uniform(2, 2);
    let d = pi_bisimulation_metric(&mdp, &pi, 1e-9).unwrap();
    assert!(d.get(0, 1) < 1e-9);

    let qpi = mdp_metrics::solvers::evaluate_policy_exact(&mdp, &pi).unwrap();
    assert!((qpi.v[0] - qpi.v[1]).abs() < 1e-9);
    let audit = mdp_metrics::analysis::lipschitz_audit(qpi.q.view(), &d, 1e-6).unwrap();
    assert_eq!(audit.kernel_violations, vec![(0, 1)]);
    assert!((qpi.q[[0, 0]] - qpi.q[[1, 0]] - 0.5).abs() < 1e-9);
}

use mdp_metrics::analysis::{dominance_check, kernel_partition, lipschitz_audit};
use mdp_metrics::mdp::{build_gridworld, generate_garnet, Cell, GridSpec};
use mdp_metrics::metrics::{bisimulation_metric, MetricKind, MetricMeta};
use mdp_metrics::{FiniteMdp, StateMetric};
use ndarray::Array2;
use proptest::prelude::*;

fn metric(d: Array2<f64>) -> StateMetric {
    StateMetric::new(d, MetricKind::Aggregation, MetricMeta::default())
}

/// Random metric on `n` points: distances between points on a line, optionally collapsed.
fn line_metric() -> impl Strategy<Value = StateMetric> {
    (2usize..8).prop_flat_map(|n| prop::collection::vec(0u8..6, n)).prop_map(|xs| {
        let n = xs.len();
        metric(Array2::from_shape_fn((n, n), |(i, j)| (xs[i] as f64 - xs[j] as f64).abs()))
    })
}

fn layout() -> impl Strategy<Value = Vec<Vec<Cell>>> {
    (1usize..7, 1usize..7).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop::collection::vec(prop_oneof![4 => Just(Cell::Floor), 2 => Just(Cell::Wall), 1 => Just(Cell::Goal)], c), r)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn garnets_always_validate(n in 1usize..=50, a in 1usize..=10, seed in any::<u64>()) {
        let m = generate_garnet(n, a, seed).unwrap();
        let again = FiniteMdp::new(m.rewards().to_owned(), m.transitions().clone(), m.gamma());
        prop_assert!(again.is_ok());
        prop_assert!(m.rewards().iter().all(|&r| (0.0..1.0).contains(&r)));
    }

    #[test]
    fn gridworld_dynamics_are_deterministic(cells in layout()) {
        let spec = GridSpec { layout: cells, step_reward: 0.0, wall_reward: -1.0, goal_reward: 1.0, gamma: 0.9 };
        match build_gridworld(&spec) {
            Ok(g) => {
                let p = g.mdp.transitions();
                for s in 0..g.mdp.num_states() {
                    for a in 0..4 {
                        let row = p.slice(ndarray::s![s, a, ..]);
                        prop_assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
                        prop_assert_eq!(row.iter().filter(|&&x| x != 0.0).count(), 1);
                    }
                }
            }
            Err(e) => prop_assert!(spec.layout.iter().flatten().all(|c| *c == Cell::Wall), "{e}"),
        }
    }

    #[test]
    fn dominance_is_transitive(d1 in line_metric(), scale2 in 0.1..3.0f64, scale3 in 0.1..3.0f64, alpha in 0.1..3.0f64, beta in 0.1..3.0f64) {
        let n = d1.num_states();
        let d2 = metric(d1.d.mapv(|x| x * scale2) + Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { 0.5 }));
        let d3 = metric(d2.d.mapv(|x| x * scale3));
        let tol = 1e-9;
        let ab = dominance_check(&d1, &d2, alpha, tol).unwrap().holds;
        let bc = dominance_check(&d2, &d3, beta, tol).unwrap().holds;
        if ab && bc {
            prop_assert!(dominance_check(&d1, &d3, alpha * beta, 1e-8).unwrap().holds);
        }
    }

    #[test]
    fn lipschitz_constant_scales_inversely(d in line_metric(), c in 0.1..10.0f64, f in prop::collection::vec(-5.0..5.0f64, 8)) {
        let n = d.num_states();
        let f = Array2::from_shape_fn((n, 1), |(s, _)| f[s]);
        let base = lipschitz_audit(f.view(), &d, 0.0).unwrap();
        let scaled = lipschitz_audit(f.view(), &metric(d.d.mapv(|x| x * c)), 0.0).unwrap();
        prop_assert!((scaled.best_k - base.best_k / c).abs() <= 1e-9 * (1.0 + base.best_k / c));
    }

    #[test]
    fn zero_tolerance_kernel_is_the_zero_distance_relation(d in line_metric()) {
        let p = kernel_partition(&d, 0.0);
        let n = d.num_states();
        for s in 0..n {
            for t in 0..n {
                prop_assert_eq!(p.same_block(s, t), d.get(s, t) == 0.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn converged_bisimulation_kernel_is_exact(seed in any::<u64>()) {
        let m = generate_garnet(5, 2, seed).unwrap();
        let d = bisimulation_metric(&m, 1e-8).unwrap();
        let p = kernel_partition(&d, 0.0);
        for s in 0..5 {
            for t in 0..5 {
                prop_assert_eq!(p.same_block(s, t), d.get(s, t) == 0.0);
            }
        }
    }
}

/// Branching factors of 10k Garnet rows are uniform on `1..=10`.
#[test]
fn garnet_support_sizes_pass_chi_square() {
    let n = 10;
    let mut counts = [0usize; 10];
    for seed in 0..100 {
        let m = generate_garnet(n, 10, seed).unwrap();
        for s in 0..n {
            for a in 0..10 {
                counts[m.support(s, a).len() - 1] += 1;
            }
        }
    }
    let expected = 10_000.0 / 10.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9% quantile of chi-square with 9 degrees of freedom
    assert!(chi2 < 27.877, "chi2 = {chi2}, counts {counts:?}");
}

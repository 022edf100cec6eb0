use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use crate::metrics::{Partition, StateMetric};
use crate::rng;
use crate::solvers::{bellman_optimality_backup, contraction_budget};

pub const K_MEDIAN_MAX_ROUNDS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMedian {
    pub partition: Partition,
    /// Medoid of each cluster, in the partition's block order.
    pub medoids: Vec<usize>,
    pub rounds: usize,
}

/// k-median clustering over a precomputed distance matrix.
///
/// Seeding starts from a uniformly drawn state and greedily adds the state farthest from
/// the chosen medoids (ties to the lowest index). Rounds then alternate assignment (ties to
/// the earliest medoid; a medoid always keeps itself) and medoid updates (member with the
/// least summed in-cluster distance, ties to the lowest index) until stable.
pub fn k_median_aggregate(d: &StateMetric, k: usize, seed: u64) -> Result<KMedian> {
    let n = d.num_states();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let mut rng = rng::stream(seed);
    let mut medoids = vec![rng.random_range(0..n)];
    let mut chosen = vec![false; n];
    chosen[medoids[0]] = true;
    let mut nearest: Vec<f64> = (0..n).map(|s| d.get(s, medoids[0])).collect();
    while medoids.len() < k {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for s in 0..n {
            if !chosen[s] && nearest[s] > best.1 {
                best = (s, nearest[s]);
            }
        }
        let m = best.0;
        chosen[m] = true;
        medoids.push(m);
        for s in 0..n {
            nearest[s] = nearest[s].min(d.get(s, m));
        }
    }

    let mut assign = vec![0usize; n];
    let mut rounds = 0;
    while rounds < K_MEDIAN_MAX_ROUNDS {
        rounds += 1;
        for (s, slot) in assign.iter_mut().enumerate() {
            *slot = match medoids.iter().position(|&m| m == s) {
                Some(own) => own,
                None => {
                    let mut best = (0, f64::INFINITY);
                    for (c, &m) in medoids.iter().enumerate() {
                        if d.get(s, m) < best.1 {
                            best = (c, d.get(s, m));
                        }
                    }
                    best.0
                }
            };
        }
        let mut changed = false;
        for (c, medoid) in medoids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&s| assign[s] == c).collect();
            let mut best = (*medoid, f64::INFINITY);
            for &cand in &members {
                let cost: f64 = members.iter().map(|&u| d.get(cand, u)).sum();
                if cost < best.1 {
                    best = (cand, cost);
                }
            }
            if best.0 != *medoid {
                *medoid = best.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let partition = Partition::from_indices(&assign);
    // blocks are numbered by first appearance; reorder medoids to match
    let medoids = partition.blocks().iter().map(|b| medoids[assign[b[0]]]).collect();
    Ok(KMedian { partition, medoids, rounds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedVi {
    /// `[block][action]`.
    pub q_hat: Array2<f64>,
    /// `max_a (1/|S|) sum_s |Q*(s,a) - q_hat(phi(s),a)|`.
    pub error: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Value iteration on aggregate states: each block's Q-value is the mean over its members
/// of the one-step backup through the lifted estimate. Starts from 0 and uses the same
/// stopping rule and budget as [`crate::solvers::value_iteration`].
pub fn aggregated_value_iteration(
    mdp: &FiniteMdp,
    p: &Partition,
    qstar: ArrayView2<'_, f64>,
    tol: f64,
) -> Result<AggregatedVi> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    if p.num_states() != ns || qstar.dim() != (ns, na) {
        return Err(Error::DimensionMismatch(format!(
            "partition over {} states and Q* of shape {:?} for an MDP with {ns} states and {na} actions",
            p.num_states(),
            qstar.dim()
        )));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let gamma = mdp.gamma();
    let max_iter = contraction_budget(mdp.v_max(), gamma, tol * (1.0 - gamma)) + 1;
    let k = p.num_blocks();
    let mut q_hat = Array2::zeros((k, na));
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let lifted = Array2::from_shape_fn((ns, na), |(s, a)| q_hat[[p.block(s), a]]);
        let backup = bellman_optimality_backup(mdp, lifted.view());
        let mut next = Array2::zeros((k, na));
        for (c, members) in p.blocks().iter().enumerate() {
            for a in 0..na {
                let sum: f64 = members.iter().map(|&s| backup[[s, a]]).sum();
                next[[c, a]] = sum / members.len() as f64;
            }
        }
        residual = next.iter().zip(&q_hat).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        q_hat = next;
        iterations += 1;
        if !residual.is_finite() {
            return Err(Error::NonFiniteValue);
        }
        if residual <= tol {
            break;
        }
    }
    let error = (0..na)
        .map(|a| (0..ns).map(|s| (qstar[[s, a]] - q_hat[[p.block(s), a]]).abs()).sum::<f64>() / ns as f64)
        .fold(0.0_f64, f64::max);
    Ok(AggregatedVi { q_hat, error, iterations, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::generate_garnet;
    use crate::metrics::{identity_metric, MetricKind, MetricMeta};
    use crate::solvers::value_iteration;
    use ndarray::{array, Array3};

    #[test]
    fn k_equal_n_gives_singletons() {
        let r = k_median_aggregate(&identity_metric(5), 5, 3).unwrap();
        assert_eq!(r.partition, Partition::singletons(5));
    }

    #[test]
    fn k_one_picks_the_global_median() {
        let pts = [0.0, 1.0, 2.0, 10.0];
        let d = Array2::from_shape_fn((4, 4), |(i, j)| (pts[i] - pts[j] as f64).abs());
        let d = StateMetric::new(d, MetricKind::Aggregation, MetricMeta::default());
        let r = k_median_aggregate(&d, 1, 9).unwrap();
        assert_eq!(r.partition.num_blocks(), 1);
        // sums: 13, 11, 11, 27; ties go to the lower index
        assert_eq!(r.medoids, vec![1]);
    }

    #[test]
    fn out_of_range_k() {
        assert!(matches!(k_median_aggregate(&identity_metric(3), 0, 0), Err(Error::KOutOfRange { .. })));
        assert!(k_median_aggregate(&identity_metric(3), 4, 0).is_err());
    }

    #[test]
    fn singleton_aggregation_is_value_iteration() {
        let m = generate_garnet(12, 3, 4).unwrap();
        let vf = value_iteration(&m, 1e-8).unwrap();
        let agg = aggregated_value_iteration(&m, &Partition::singletons(12), vf.q.view(), 1e-8).unwrap();
        assert_eq!(agg.q_hat, vf.q);
        assert_eq!(agg.error, 0.0);
    }

    #[test]
    fn identical_states_aggregate_exactly() {
        let p = Array3::from_elem((3, 2, 3), 1.0 / 3.0);
        let m = FiniteMdp::new(array![[0.2, 0.7], [0.2, 0.7], [0.2, 0.7]], p, 0.8).unwrap();
        let vf = value_iteration(&m, 1e-10).unwrap();
        let agg = aggregated_value_iteration(&m, &Partition::single_block(3), vf.q.view(), 1e-10).unwrap();
        assert!(agg.error < 1e-9);
    }
}

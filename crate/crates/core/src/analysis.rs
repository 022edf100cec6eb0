//! Empirical Lipschitz constants, pointwise metric dominance and kernel extraction.
//!
//! Topological coarseness between two metrics is audited through the sufficient pointwise
//! condition `d1 <= alpha * d2`; Lipschitz continuity of a function `f` through the best
//! constant `K` with `|f(s) - f(t)| <= K d(s,t)`.

use ndarray::ArrayView2;
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Partition, StateMetric};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// Smallest `K` with `|f(s) - f(t)| <= K d(s,t)` over pairs with `d(s,t) > tol`.
    pub best_k: f64,
    /// Pairs with `d(s,t) <= tol` whose function values differ by more than `tol`.
    pub kernel_violations: Vec<(usize, usize)>,
    /// Pair attaining `best_k`.
    pub witness_pair: Option<(usize, usize)>,
}

impl LipschitzReport {
    pub fn holds_with(&self, k: f64) -> bool {
        self.kernel_violations.is_empty() && self.best_k <= k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub holds: bool,
    pub scale: f64,
    /// `max(0, max_{s,t} d1(s,t) - alpha d2(s,t))`.
    pub max_violation: f64,
    pub witness: Option<(usize, usize)>,
}

/// Audits `f` (rows are states; a vector is a single-column matrix) against `d`.
pub fn lipschitz_audit(f: ArrayView2<'_, f64>, d: &StateMetric, tol: f64) -> Result<LipschitzReport> {
    let n = d.num_states();
    if f.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "function has {} rows, metric covers {n} states",
            f.nrows()
        )));
    }
    let mut best_k = 0.0_f64;
    let mut witness_pair = None;
    let mut kernel_violations = Vec::new();
    for s in 0..n {
        for t in s + 1..n {
            let gap = f.row(s).iter().zip(f.row(t)).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            let dist = d.get(s, t);
            if dist > tol {
                let k = gap / dist;
                if k > best_k || witness_pair.is_none() {
                    best_k = best_k.max(k);
                    witness_pair = Some((s, t));
                }
            } else if gap > tol {
                kernel_violations.push((s, t));
            }
        }
    }
    Ok(LipschitzReport { best_k, kernel_violations, witness_pair })
}

/// Checks `d1(s,t) <= alpha d2(s,t) + tol` for every pair.
pub fn dominance_check(d1: &StateMetric, d2: &StateMetric, alpha: f64, tol: f64) -> Result<DominanceReport> {
    let n = d1.num_states();
    if d2.num_states() != n {
        return Err(Error::DimensionMismatch(format!("{n} vs {} states", d2.num_states())));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for s in 0..n {
        for t in s..n {
            let excess = d1.get(s, t) - alpha * d2.get(s, t);
            if excess > worst {
                worst = excess;
                witness = Some((s, t));
            }
        }
    }
    let max_violation = worst.max(0.0);
    Ok(DominanceReport { holds: max_violation <= tol, scale: alpha, max_violation, witness })
}

/// Connected components of `{(s,t) : d(s,t) <= tol}`.
pub fn kernel_partition(d: &StateMetric, tol: f64) -> Partition {
    let n = d.num_states();
    let mut uf = UnionFind::<usize>::new(n);
    for s in 0..n {
        for t in s + 1..n {
            if d.get(s, t) <= tol {
                uf.union(s, t);
            }
        }
    }
    Partition::from_indices(&uf.into_labeling())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{identity_metric, trivial_metric, MetricKind, MetricMeta};
    use ndarray::{array, Array2};

    fn metric(d: Array2<f64>) -> StateMetric {
        StateMetric::new(d, MetricKind::Aggregation, MetricMeta::default())
    }

    #[test]
    fn constant_function_has_zero_constant() {
        let f = Array2::from_elem((3, 2), 4.0);
        let r = lipschitz_audit(f.view(), &identity_metric(3), 1e-9).unwrap();
        assert_eq!(r.best_k, 0.0);
        assert!(r.kernel_violations.is_empty());
    }

    #[test]
    fn kernel_violations_are_reported() {
        let f = array![[0.0], [1.0], [1.0]];
        let r = lipschitz_audit(f.view(), &trivial_metric(3), 1e-9).unwrap();
        assert_eq!(r.kernel_violations, vec![(0, 1), (0, 2)]);
        assert!(!r.holds_with(f64::INFINITY));
    }

    #[test]
    fn best_k_and_witness() {
        let d = metric(array![[0.0, 2.0, 1.0], [2.0, 0.0, 1.0], [1.0, 1.0, 0.0]]);
        let f = array![[0.0], [1.0], [3.0]];
        let r = lipschitz_audit(f.view(), &d, 1e-9).unwrap();
        assert_eq!(r.best_k, 3.0);
        assert_eq!(r.witness_pair, Some((0, 2)));
        assert!(lipschitz_audit(array![[0.0]].view(), &d, 1e-9).is_err());
    }

    #[test]
    fn dominance_of_self_and_violations() {
        let d = metric(array![[0.0, 2.0], [2.0, 0.0]]);
        assert!(dominance_check(&d, &d, 1.0, 0.0).unwrap().holds);
        let r = dominance_check(&d, &identity_metric(2), 1.5, 1e-9).unwrap();
        assert!(!r.holds);
        assert!((r.max_violation - 0.5).abs() < 1e-15);
        assert_eq!(r.witness, Some((0, 1)));
    }

    #[test]
    fn kernels_of_extreme_metrics() {
        assert_eq!(kernel_partition(&identity_metric(4), 0.5), Partition::singletons(4));
        assert_eq!(kernel_partition(&trivial_metric(4), 0.0), Partition::single_block(4));
    }
}

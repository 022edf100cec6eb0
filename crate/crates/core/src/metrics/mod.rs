//! State (pseudo-)metrics: discrete metrics from equivalence relations, bisimulation-style
//! fixed points, and value-difference metrics.

mod abstraction;
mod behavioral;
mod relations;
mod value;

pub use abstraction::eta_abstraction;
pub use behavioral::{bisimulation_metric, lax_bisimulation_metric, pi_bisimulation_metric};
pub use relations::{
    bisimulation_partition, lax_bisimulation_partition, pi_bisimulation_partition,
    DEFAULT_PARTITION_EPS,
};
pub use value::{
    avf_metric, delta_forall_metric_bruteforce, delta_pi_metric, delta_star_metric, q_difference_metric,
};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MetricKind {
    Identity,
    Trivial,
    BisimDiscrete,
    LaxDiscrete,
    PiBisimDiscrete,
    Bisim,
    Lax,
    PiBisim,
    DeltaStar,
    DeltaPi,
    DeltaForall,
    Avf,
    /// Discrete metric of an arbitrary aggregation.
    Aggregation,
}

impl MetricKind {
    pub const ALL: [MetricKind; 13] = [
        MetricKind::Identity,
        MetricKind::Trivial,
        MetricKind::BisimDiscrete,
        MetricKind::LaxDiscrete,
        MetricKind::PiBisimDiscrete,
        MetricKind::Bisim,
        MetricKind::Lax,
        MetricKind::PiBisim,
        MetricKind::DeltaStar,
        MetricKind::DeltaPi,
        MetricKind::DeltaForall,
        MetricKind::Avf,
        MetricKind::Aggregation,
    ];

    /// Short name used on the command line and in files.
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Identity => "identity",
            MetricKind::Trivial => "trivial",
            MetricKind::BisimDiscrete => "bisim-rel",
            MetricKind::LaxDiscrete => "lax-rel",
            MetricKind::PiBisimDiscrete => "pibisim-rel",
            MetricKind::Bisim => "bisim",
            MetricKind::Lax => "lax",
            MetricKind::PiBisim => "pibisim",
            MetricKind::DeltaStar => "dstar",
            MetricKind::DeltaPi => "dpi",
            MetricKind::DeltaForall => "dforall",
            MetricKind::Avf => "avf",
            MetricKind::Aggregation => "aggregation",
        }
    }

    /// Stable numeric id used by the binary matrix format.
    pub fn id(self) -> u32 {
        Self::ALL.iter().position(|&k| k == self).expect("listed") as u32
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn is_discrete(self) -> bool {
        matches!(
            self,
            MetricKind::Identity
                | MetricKind::Trivial
                | MetricKind::BisimDiscrete
                | MetricKind::LaxDiscrete
                | MetricKind::PiBisimDiscrete
                | MetricKind::Aggregation
        )
    }

    /// Kinds whose values are measured in reward units.
    pub fn is_behavioral(self) -> bool {
        !self.is_discrete()
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric kind {s:?}")))
    }
}

impl From<MetricKind> for String {
    fn from(k: MetricKind) -> String {
        k.name().to_string()
    }
}

impl TryFrom<String> for MetricKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricMeta {
    pub iterations: usize,
    /// Sup-norm change of the last fixed-point sweep, or the solver residual.
    pub residual: f64,
    /// Per-sweep sup-norm changes of fixed-point iterations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub residual_history: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_policies: Option<usize>,
}

/// A symmetric, nonnegative, zero-diagonal matrix over states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMetric {
    pub d: Array2<f64>,
    pub kind: MetricKind,
    pub meta: MetricMeta,
}

impl StateMetric {
    pub fn new(d: Array2<f64>, kind: MetricKind, meta: MetricMeta) -> Self {
        debug_assert_eq!(d.nrows(), d.ncols());
        Self { d, kind, meta }
    }

    pub fn num_states(&self) -> usize {
        self.d.nrows()
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.d[[s, t]]
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.d.view()
    }

    /// Largest `|d(s,t) - d(t,s)|`.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.num_states();
        let mut worst = 0.0_f64;
        for s in 0..n {
            for t in s + 1..n {
                worst = worst.max((self.d[[s, t]] - self.d[[t, s]]).abs());
            }
        }
        worst
    }

    /// Largest `d(s,u) - d(s,t) - d(t,u)` over all triples (0 when the triangle inequality holds).
    pub fn max_triangle_violation(&self) -> f64 {
        let n = self.num_states();
        let mut worst = 0.0_f64;
        for s in 0..n {
            for t in 0..n {
                let st = self.d[[s, t]];
                for u in 0..n {
                    worst = worst.max(self.d[[s, u]] - st - self.d[[t, u]]);
                }
            }
        }
        worst
    }

    /// Zero diagonal, symmetry within `1e-12` and nonnegativity.
    pub fn is_valid_pseudometric_shape(&self) -> bool {
        let n = self.num_states();
        (0..n).all(|s| self.d[[s, s]] == 0.0)
            && self.d.iter().all(|&x| x >= 0.0 && x.is_finite())
            && self.max_asymmetry() <= 1e-12
    }
}

/// Equivalence classes over states, with block ids numbered by first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    block_of: Vec<usize>,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Canonicalizes arbitrary labels: block ids become dense in order of first appearance.
    pub fn from_labels<T: PartialEq + Clone>(labels: &[T]) -> Self {
        let mut seen: Vec<T> = Vec::new();
        let mut block_of = Vec::with_capacity(labels.len());
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (s, l) in labels.iter().enumerate() {
            let b = match seen.iter().position(|x| x == l) {
                Some(b) => b,
                None => {
                    seen.push(l.clone());
                    blocks.push(Vec::new());
                    seen.len() - 1
                }
            };
            block_of.push(b);
            blocks[b].push(s);
        }
        Self { block_of, blocks }
    }

    /// Faster canonicalization for labels already in `0..num_labels`.
    pub fn from_indices(labels: &[usize]) -> Self {
        let max = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut remap = vec![usize::MAX; max];
        let mut block_of = Vec::with_capacity(labels.len());
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (s, &l) in labels.iter().enumerate() {
            if remap[l] == usize::MAX {
                remap[l] = blocks.len();
                blocks.push(Vec::new());
            }
            block_of.push(remap[l]);
            blocks[remap[l]].push(s);
        }
        Self { block_of, blocks }
    }

    pub fn singletons(n: usize) -> Self {
        Self { block_of: (0..n).collect(), blocks: (0..n).map(|s| vec![s]).collect() }
    }

    pub fn single_block(n: usize) -> Self {
        Self { block_of: vec![0; n], blocks: if n == 0 { vec![] } else { vec![(0..n).collect()] } }
    }

    pub fn block_of(&self) -> &[usize] {
        &self.block_of
    }

    pub fn block(&self, s: usize) -> usize {
        self.block_of[s]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_states(&self) -> usize {
        self.block_of.len()
    }

    pub fn same_block(&self, s: usize, t: usize) -> bool {
        self.block_of[s] == self.block_of[t]
    }

    /// True if every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.num_states() == coarser.num_states()
            && self.blocks.iter().all(|b| b.iter().all(|&s| coarser.block_of[s] == coarser.block_of[b[0]]))
    }
}

pub fn identity_metric(n: usize) -> StateMetric {
    let d = Array2::from_shape_fn((n, n), |(s, t)| if s == t { 0.0 } else { 1.0 });
    StateMetric::new(d, MetricKind::Identity, MetricMeta::default())
}

pub fn trivial_metric(n: usize) -> StateMetric {
    StateMetric::new(Array2::zeros((n, n)), MetricKind::Trivial, MetricMeta::default())
}

/// Discrete metric of a partition: 0 inside blocks, 1 across.
pub fn partition_to_metric(p: &Partition) -> StateMetric {
    partition_metric_of_kind(p, MetricKind::Aggregation)
}

pub fn partition_metric_of_kind(p: &Partition, kind: MetricKind) -> StateMetric {
    let n = p.num_states();
    let d = Array2::from_shape_fn((n, n), |(s, t)| if p.same_block(s, t) { 0.0 } else { 1.0 });
    StateMetric::new(d, kind, MetricMeta::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_state_metrics_are_zero() {
        assert_eq!(identity_metric(1).d, Array2::<f64>::zeros((1, 1)));
        assert_eq!(trivial_metric(1).d, Array2::<f64>::zeros((1, 1)));
    }

    #[test]
    fn identity_and_trivial() {
        let id = identity_metric(3);
        assert!(id.d.indexed_iter().all(|((s, t), &x)| x == if s == t { 0.0 } else { 1.0 }));
        assert!(trivial_metric(3).d.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn partition_metrics() {
        assert_eq!(partition_to_metric(&Partition::singletons(4)).d, identity_metric(4).d);
        assert_eq!(partition_to_metric(&Partition::single_block(4)).d, trivial_metric(4).d);
        let p = Partition::from_labels(&["a", "a", "b"]);
        let d = partition_to_metric(&p);
        assert_eq!((d.get(0, 1), d.get(0, 2)), (0.0, 1.0));
    }

    #[test]
    fn labels_are_canonicalized() {
        let a = Partition::from_labels(&[7, 3, 7, 1]);
        let b = Partition::from_indices(&[2, 0, 2, 5]);
        assert_eq!(a, b);
        assert_eq!(a.block_of(), &[0, 1, 0, 2]);
        assert!(Partition::singletons(4).refines(&a));
        assert!(a.refines(&Partition::single_block(4)));
        assert!(!Partition::single_block(4).refines(&a));
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in MetricKind::ALL {
            assert_eq!(k.name().parse::<MetricKind>().unwrap(), k);
            assert_eq!(MetricKind::from_id(k.id()), Some(k));
        }
    }
}

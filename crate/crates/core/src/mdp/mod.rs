//! Finite MDPs, policies and the benchmark environments built on them.

mod garnet;
mod gridworld;

pub use garnet::{generate_garnet, generate_garnet_with_discount, DEFAULT_GARNET_GAMMA};
pub use gridworld::{build_gridworld, Cell, GridSpec, Gridworld, GRID_ACTIONS};

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Tolerance on probability rows (transition and policy rows).
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A validated finite MDP with dense rewards `[state][action]` and transitions
/// `[state][action][next_state]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    rewards: Array2<f64>,
    transitions: Array3<f64>,
    gamma: f64,
    r_max: f64,
}

impl FiniteMdp {
    /// Validates and wraps the given tensors. Malformed rows are rejected, never renormalized.
    pub fn new(rewards: Array2<f64>, transitions: Array3<f64>, gamma: f64) -> Result<Self> {
        let (ns, na) = rewards.dim();
        if ns == 0 || na == 0 {
            return Err(Error::DimensionMismatch(
                "an MDP needs at least one state and one action".into(),
            ));
        }
        if transitions.dim() != (ns, na, ns) {
            return Err(Error::DimensionMismatch(format!(
                "transitions have shape {:?}, expected {:?}",
                transitions.dim(),
                (ns, na, ns)
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::GammaOutOfRange(gamma));
        }
        for ((s, a), r) in rewards.indexed_iter() {
            if !r.is_finite() {
                return Err(Error::NonFiniteReward { state: s, action: a });
            }
        }
        for s in 0..ns {
            for a in 0..na {
                let row = transitions.slice(ndarray::s![s, a, ..]);
                let sum: f64 = row.sum();
                let bad = row.iter().any(|&p| !(p >= 0.0) || !p.is_finite());
                if bad || (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::RowNotStochastic { state: s, action: a, sum });
                }
            }
        }
        let r_max = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { rewards, transitions, gamma, r_max })
    }

    /// Builds an MDP from nested vectors, as read from JSON or Python.
    pub fn from_nested(
        rewards: Vec<Vec<f64>>,
        transitions: Vec<Vec<Vec<f64>>>,
        gamma: f64,
    ) -> Result<Self> {
        let ns = rewards.len();
        let na = rewards.first().map_or(0, Vec::len);
        if rewards.iter().any(|r| r.len() != na) {
            return Err(Error::DimensionMismatch("ragged reward matrix".into()));
        }
        if transitions.len() != ns
            || transitions
                .iter()
                .any(|t| t.len() != na || t.iter().any(|row| row.len() != ns))
        {
            return Err(Error::DimensionMismatch(
                "transition tensor does not match reward dimensions".into(),
            ));
        }
        let r = Array2::from_shape_vec((ns, na), rewards.into_iter().flatten().collect())
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        let p = Array3::from_shape_vec(
            (ns, na, ns),
            transitions.into_iter().flatten().flatten().collect(),
        )
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Self::new(r, p, gamma)
    }

    pub fn num_states(&self) -> usize {
        self.rewards.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.rewards.ncols()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Largest reward entry.
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Largest absolute reward; bounds every Bellman increment.
    pub fn reward_bound(&self) -> f64 {
        self.rewards.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    /// `reward_bound / (1 - gamma)`, the bound on every value function.
    pub fn v_max(&self) -> f64 {
        self.reward_bound() / (1.0 - self.gamma)
    }

    pub fn rewards(&self) -> ArrayView2<'_, f64> {
        self.rewards.view()
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[[s, a]]
    }

    pub fn transitions(&self) -> &Array3<f64> {
        &self.transitions
    }

    /// Next-state distribution of `(s, a)`.
    pub fn transition_row(&self, s: usize, a: usize) -> ArrayView1<'_, f64> {
        self.transitions.slice(ndarray::s![s, a, ..])
    }

    /// Policy-averaged rewards `sum_a pi(a|s) R(s,a)`.
    pub fn policy_rewards(&self, pi: &Policy) -> Result<Array1<f64>> {
        self.check_policy(pi)?;
        Ok((&self.rewards * &pi.probs).sum_axis(Axis(1)))
    }

    /// Policy-averaged transition matrix `sum_a pi(a|s) P(s,a,.)`.
    pub fn policy_transitions(&self, pi: &Policy) -> Result<Array2<f64>> {
        self.check_policy(pi)?;
        let ns = self.num_states();
        let mut out = Array2::zeros((ns, ns));
        for s in 0..ns {
            let mut row = out.row_mut(s);
            for a in 0..self.num_actions() {
                let w = pi.probs[[s, a]];
                if w != 0.0 {
                    row.scaled_add(w, &self.transition_row(s, a));
                }
            }
        }
        Ok(out)
    }

    pub fn check_policy(&self, pi: &Policy) -> Result<()> {
        if pi.probs.dim() != self.rewards.dim() {
            return Err(Error::DimensionMismatch(format!(
                "policy has shape {:?}, MDP has {:?}",
                pi.probs.dim(),
                self.rewards.dim()
            )));
        }
        Ok(())
    }

    /// Support (indices with positive mass) of `P(s, a, .)`.
    pub fn support(&self, s: usize, a: usize) -> Vec<usize> {
        self.transition_row(s, a)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// A stationary stochastic policy, `probs[state][action]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: Array2<f64>,
}

impl Policy {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        for (s, row) in probs.rows().into_iter().enumerate() {
            let sum = row.sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::PolicyNotStochastic { state: s, sum });
            }
        }
        Ok(Self { probs })
    }

    pub fn from_nested(rows: Vec<Vec<f64>>) -> Result<Self> {
        let ns = rows.len();
        let na = rows.first().map_or(0, Vec::len);
        let probs = Array2::from_shape_vec((ns, na), rows.into_iter().flatten().collect())
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Self::new(probs)
    }

    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        let mut probs = Array2::zeros((actions.len(), num_actions));
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::IndexOutOfRange { index: a, len: num_actions });
            }
            probs[[s, a]] = 1.0;
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self { probs: Array2::from_elem((num_states, num_actions), 1.0 / num_actions as f64) }
    }

    pub fn probs(&self) -> ArrayView2<'_, f64> {
        self.probs.view()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[[s, a]]
    }

    pub fn num_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.probs.ncols()
    }

    /// The chosen action per state if every row puts all its mass on one action.
    pub fn actions(&self) -> Option<Vec<usize>> {
        self.probs
            .rows()
            .into_iter()
            .map(|row| {
                let mut ones = row.iter().enumerate().filter(|(_, &p)| p == 1.0);
                match (ones.next(), row.iter().filter(|&&p| p != 0.0).count()) {
                    (Some((a, _)), 1) => Some(a),
                    _ => None,
                }
            })
            .collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.actions().is_some()
    }
}

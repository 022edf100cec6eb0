//! Dynamic-programming solvers for `V*`, `Q*`, `V^pi`, `Q^pi`, policy enumeration and
//! the adversarial-value-function policy sampler.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, Policy};
use crate::rng;

pub const DEFAULT_TOL: f64 = 1e-6;
/// Default bound on `|A|^|S|` for policy enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 20;
/// Sweeps of sign-flipped policy iteration before the last iterate is returned.
pub const AVF_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunctions {
    pub v: Array1<f64>,
    pub q: Array2<f64>,
    /// Sup-norm change of the last sweep (zero for direct solves).
    pub residual: f64,
    pub iterations: usize,
}

/// `ceil(ln(tol / scale) / ln(gamma))`, at least 1: sweeps for a `gamma`-contraction
/// started at distance `scale` to get within `tol`.
pub fn contraction_budget(scale: f64, gamma: f64, tol: f64) -> usize {
    if gamma <= 0.0 || scale <= tol || scale <= 0.0 {
        return 1;
    }
    let k = ((tol / scale).ln() / gamma.ln()).ceil();
    if k.is_finite() && k >= 1.0 {
        k as usize
    } else {
        1
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")))
    }
}

fn expected_next(mdp: &FiniteMdp, v: &Array1<f64>, s: usize, a: usize) -> f64 {
    mdp.transition_row(s, a).dot(v)
}

/// One application of the optimality operator: `R + gamma * P max_a' Q`.
pub fn bellman_optimality_backup(mdp: &FiniteMdp, q: ArrayView2<'_, f64>) -> Array2<f64> {
    let v = row_max(q);
    backup_with(mdp, &v)
}

fn backup_with(mdp: &FiniteMdp, v: &Array1<f64>) -> Array2<f64> {
    let gamma = mdp.gamma();
    Array2::from_shape_fn((mdp.num_states(), mdp.num_actions()), |(s, a)| {
        mdp.reward(s, a) + gamma * expected_next(mdp, v, s, a)
    })
}

pub(crate) fn row_max(q: ArrayView2<'_, f64>) -> Array1<f64> {
    q.map_axis(Axis(1), |row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

fn sup_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Value iteration from `Q = 0` until the sup-norm change of a sweep is at most `tol`.
pub fn value_iteration(mdp: &FiniteMdp, tol: f64) -> Result<ValueFunctions> {
    check_tol(tol)?;
    let max_iter = contraction_budget(mdp.v_max(), mdp.gamma(), tol * (1.0 - mdp.gamma())) + 1;
    let mut q = Array2::zeros((mdp.num_states(), mdp.num_actions()));
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = bellman_optimality_backup(mdp, q.view());
        residual = sup_diff(&next, &q);
        q = next;
        iterations += 1;
        if !residual.is_finite() {
            return Err(Error::NonFiniteValue);
        }
        if residual <= tol {
            break;
        }
    }
    Ok(ValueFunctions { v: row_max(q.view()), q, residual, iterations })
}

/// Iterative evaluation of `pi` from `Q = 0` until the sweep change is at most `tol`.
pub fn policy_evaluation(mdp: &FiniteMdp, pi: &Policy, tol: f64) -> Result<ValueFunctions> {
    check_tol(tol)?;
    mdp.check_policy(pi)?;
    let max_iter = contraction_budget(mdp.v_max(), mdp.gamma(), tol * (1.0 - mdp.gamma())) + 1;
    let probs = pi.probs();
    let mut q: Array2<f64> = Array2::zeros((mdp.num_states(), mdp.num_actions()));
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let v = (&q * &probs).sum_axis(Axis(1));
        let next = backup_with(mdp, &v);
        residual = sup_diff(&next, &q);
        q = next;
        iterations += 1;
        if !residual.is_finite() {
            return Err(Error::NonFiniteValue);
        }
        if residual <= tol {
            break;
        }
    }
    let v = (&q * &probs).sum_axis(Axis(1));
    Ok(ValueFunctions { v, q, residual, iterations })
}

/// Direct solve of `(I - gamma P^pi) v = R^pi` by LU, then `Q = R + gamma P v`.
pub fn evaluate_policy_exact(mdp: &FiniteMdp, pi: &Policy) -> Result<ValueFunctions> {
    let ns = mdp.num_states();
    let r_pi = mdp.policy_rewards(pi)?;
    let p_pi = mdp.policy_transitions(pi)?;
    let gamma = mdp.gamma();
    let a = DMatrix::from_fn(ns, ns, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - gamma * p_pi[[i, j]]
    });
    let b = DVector::from_iterator(ns, r_pi.iter().copied());
    let x = a.lu().solve(&b).ok_or(Error::NonFiniteValue)?;
    let v = Array1::from_iter(x.iter().copied());
    let q = backup_with(mdp, &v);
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteValue);
    }
    Ok(ValueFunctions { v, q, residual: 0.0, iterations: 0 })
}

/// Deterministic greedy policy; ties go to the lowest action index.
pub fn greedy_policy(vf: &ValueFunctions) -> Policy {
    let actions: Vec<usize> = vf.q.rows().into_iter().map(|row| argmax(row.iter().copied())).collect();
    Policy::deterministic(&actions, vf.q.ncols()).expect("argmax is a valid action")
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in values.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// All `|A|^|S|` deterministic policies in lexicographic order of their action vectors
/// (state 0 most significant).
pub fn enumerate_deterministic_policies(
    mdp: &FiniteMdp,
    cap: u64,
) -> Result<DeterministicPolicies> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let count = u32::try_from(ns)
        .ok()
        .and_then(|e| (na as u64).checked_pow(e))
        .filter(|&c| c <= cap);
    match count {
        Some(_) => Ok(DeterministicPolicies { current: Some(vec![0; ns]), num_actions: na }),
        None => Err(Error::EnumerationTooLarge { count: format!("{na}^{ns}"), cap }),
    }
}

pub struct DeterministicPolicies {
    current: Option<Vec<usize>>,
    num_actions: usize,
}

impl Iterator for DeterministicPolicies {
    type Item = Policy;

    fn next(&mut self) -> Option<Policy> {
        let actions = self.current.take()?;
        let mut succ = actions.clone();
        let mut carry = true;
        for slot in succ.iter_mut().rev() {
            *slot += 1;
            if *slot < self.num_actions {
                carry = false;
                break;
            }
            *slot = 0;
        }
        if !carry {
            self.current = Some(succ);
        }
        Some(Policy::deterministic(&actions, self.num_actions).expect("actions in range"))
    }
}

/// Sign-flipped policy iteration from the all-zero policy: evaluate `Q^pi` exactly, then
/// take the argmax where `signs[s] > 0` and the argmin elsewhere (lowest index on ties),
/// until the policy is stable or [`AVF_MAX_SWEEPS`] sweeps elapse.
pub fn sign_flipped_policy_iteration(mdp: &FiniteMdp, signs: &[i8]) -> Result<Policy> {
    if signs.len() != mdp.num_states() {
        return Err(Error::DimensionMismatch(format!(
            "{} signs for {} states",
            signs.len(),
            mdp.num_states()
        )));
    }
    let na = mdp.num_actions();
    let mut actions = vec![0usize; mdp.num_states()];
    for _ in 0..AVF_MAX_SWEEPS {
        let pi = Policy::deterministic(&actions, na)?;
        let vf = evaluate_policy_exact(mdp, &pi)?;
        let next: Vec<usize> = vf
            .q
            .rows()
            .into_iter()
            .zip(signs)
            .map(|(row, &sign)| {
                if sign >= 0 {
                    argmax(row.iter().copied())
                } else {
                    argmax(row.iter().map(|x| -x))
                }
            })
            .collect();
        if next == actions {
            break;
        }
        actions = next;
    }
    Policy::deterministic(&actions, na)
}

/// `n` extremal-policy samples, each from a uniformly drawn sign vector. Duplicates are kept.
pub fn sample_avf_policies(mdp: &FiniteMdp, n: usize, seed: u64) -> Result<Vec<Policy>> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one AVF sample".into()));
    }
    let mut rng = rng::stream(seed);
    (0..n)
        .map(|_| {
            let signs: Vec<i8> =
                (0..mdp.num_states()).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
            sign_flipped_policy_iteration(mdp, &signs)
        })
        .collect()
}

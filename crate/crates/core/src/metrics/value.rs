use ndarray::{Array2, ArrayView2, Zip};
use rayon::prelude::*;

use super::{MetricKind, MetricMeta, StateMetric};
use crate::error::Result;
use crate::mdp::{FiniteMdp, Policy};
use crate::solvers::{
    enumerate_deterministic_policies, evaluate_policy_exact, policy_evaluation, sample_avf_policies,
    value_iteration,
};

/// `d(s,t) = max_a |q(s,a) - q(t,a)|`.
pub fn q_difference_metric(q: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = q.nrows();
    let mut d = Array2::zeros((n, n));
    for s in 0..n {
        for t in s + 1..n {
            let gap = q
                .row(s)
                .iter()
                .zip(q.row(t))
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            d[[s, t]] = gap;
            d[[t, s]] = gap;
        }
    }
    d
}

fn elementwise_max(mut a: Array2<f64>, b: Array2<f64>) -> Array2<f64> {
    Zip::from(&mut a).and(&b).for_each(|x, &y| *x = x.max(y));
    a
}

pub fn delta_star_metric(mdp: &FiniteMdp, tol: f64) -> Result<StateMetric> {
    let vf = value_iteration(mdp, tol)?;
    let meta = MetricMeta { iterations: vf.iterations, residual: vf.residual, ..Default::default() };
    Ok(StateMetric::new(q_difference_metric(vf.q.view()), MetricKind::DeltaStar, meta))
}

pub fn delta_pi_metric(mdp: &FiniteMdp, pi: &Policy, tol: f64) -> Result<StateMetric> {
    let vf = policy_evaluation(mdp, pi, tol)?;
    let meta = MetricMeta {
        iterations: vf.iterations,
        residual: vf.residual,
        policy: pi.actions().map(|a| format!("{a:?}")),
        ..Default::default()
    };
    Ok(StateMetric::new(q_difference_metric(vf.q.view()), MetricKind::DeltaPi, meta))
}

/// Max over every deterministic policy (which contains all vertices of the Q-function
/// polytope). `Q^pi` comes from exact linear solves.
pub fn delta_forall_metric_bruteforce(mdp: &FiniteMdp, cap: u64) -> Result<StateMetric> {
    let policies: Vec<Policy> = enumerate_deterministic_policies(mdp, cap)?.collect();
    let count = policies.len();
    let d = max_over_policies(mdp, &policies)?;
    let meta = MetricMeta { num_policies: Some(count), ..Default::default() };
    Ok(StateMetric::new(d, MetricKind::DeltaForall, meta))
}

/// Max over `n` sampled extremal (AVF) policies.
pub fn avf_metric(mdp: &FiniteMdp, n: usize, seed: u64) -> Result<StateMetric> {
    let policies = sample_avf_policies(mdp, n, seed)?;
    let d = max_over_policies(mdp, &policies)?;
    let meta = MetricMeta { seed: Some(seed), num_policies: Some(n), ..Default::default() };
    Ok(StateMetric::new(d, MetricKind::Avf, meta))
}

fn max_over_policies(mdp: &FiniteMdp, policies: &[Policy]) -> Result<Array2<f64>> {
    let n = mdp.num_states();
    // max is exact, so the reduction order cannot change the result
    policies
        .par_iter()
        .map(|pi| evaluate_policy_exact(mdp, pi).map(|vf| q_difference_metric(vf.q.view())))
        .try_reduce(|| Array2::zeros((n, n)), |a, b| Ok(elementwise_max(a, b)))
}

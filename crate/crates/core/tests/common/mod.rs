//! Shared fixtures and independent reference implementations.
#![allow(dead_code)]

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use ndarray::{array, Array2, Array3};
use rand::Rng;

use mdp_metrics::mdp::generate_garnet;
use mdp_metrics::solvers::contraction_budget;
use mdp_metrics::{FiniteMdp, Policy};

/// Optimal transport cost as a dense LP over all `p.len() * q.len()` couplings.
pub fn lp_transport(p: &[f64], q: &[f64], cost: impl Fn(usize, usize) -> f64) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> = (0..p.len())
        .map(|i| (0..q.len()).map(|j| lp.add_var(cost(i, j), (0.0, f64::INFINITY))).collect())
        .collect();
    for (i, &pi) in p.iter().enumerate() {
        let row: Vec<_> = vars[i].iter().map(|&v| (v, 1.0)).collect();
        lp.add_constraint(row, ComparisonOp::Eq, pi);
    }
    // the last column constraint is implied by the others
    for (j, &qj) in q.iter().enumerate().take(q.len().saturating_sub(1)) {
        let col: Vec<_> = vars.iter().map(|row| (row[j], 1.0)).collect();
        lp.add_constraint(col, ComparisonOp::Eq, qj);
    }
    let solution = lp.solve().expect("transport LP is feasible and bounded");
    solution.into_solution().expect("LP solved to a solution").objective()
}

/// Random probability vector with the given number of nonzero entries placed at random.
pub fn random_distribution(rng: &mut impl Rng, n: usize, support: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    let idx = rand::seq::index::sample(rng, n, support);
    for i in idx.iter() {
        p[i] = rng.random_range(0.01..1.0);
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

/// Random symmetric zero-diagonal cost matrix with entries in `[0, scale)`.
pub fn random_cost(rng: &mut impl Rng, n: usize, scale: f64) -> Array2<f64> {
    let mut c = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let x = rng.random_range(0.0..scale);
            c[[i, j]] = x;
            c[[j, i]] = x;
        }
    }
    c
}

/// Two absorbing states with rewards 0 and 1 under a single action, gamma 0.9.
pub fn two_absorbing() -> FiniteMdp {
    let mut p = Array3::zeros((2, 1, 2));
    p[[0, 0, 0]] = 1.0;
    p[[1, 0, 1]] = 1.0;
    FiniteMdp::new(array![[0.0], [1.0]], p, 0.9).unwrap()
}

pub fn garnets(count: u64, states: usize, actions: usize) -> Vec<FiniteMdp> {
    (0..count).map(|seed| generate_garnet(states, actions, seed).unwrap()).collect()
}

/// Doubles `mdp`: state `n + s` copies state `s` with its actions permuted by `perm`, and
/// every transition splits its mass evenly between a state and its copy. With the identity
/// permutation each state is bisimilar to its copy; otherwise they are lax-bisimilar.
pub fn with_twins(mdp: &FiniteMdp, perm: &[usize]) -> FiniteMdp {
    let (n, na) = (mdp.num_states(), mdp.num_actions());
    let mut r = Array2::zeros((2 * n, na));
    let mut p = Array3::zeros((2 * n, na, 2 * n));
    for s in 0..n {
        for a in 0..na {
            for (dst, act) in [(s, a), (n + s, perm[a])] {
                r[[dst, act]] = mdp.reward(s, a);
                for t in 0..n {
                    let w = mdp.transitions()[[s, a, t]];
                    p[[dst, act, t]] = w / 2.0;
                    p[[dst, act, n + t]] = w / 2.0;
                }
            }
        }
    }
    FiniteMdp::new(r, p, mdp.gamma()).unwrap()
}

/// Extends a policy on the original states to the twinned MDP, following the permutation.
pub fn twin_policy(pi: &Policy, perm: &[usize]) -> Policy {
    let (n, na) = (pi.num_states(), pi.num_actions());
    let mut probs = Array2::zeros((2 * n, na));
    for s in 0..n {
        for a in 0..na {
            probs[[s, a]] = pi.prob(s, a);
            probs[[n + s, perm[a]]] = pi.prob(s, a);
        }
    }
    Policy::new(probs).unwrap()
}

fn reward_span(r: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = r.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    (hi - lo).max(0.0)
}

fn lp_between(p: ndarray::ArrayView1<'_, f64>, q: ndarray::ArrayView1<'_, f64>, d: &Array2<f64>) -> f64 {
    let sp: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let sq: Vec<usize> = (0..q.len()).filter(|&j| q[j] > 0.0).collect();
    let pw: Vec<f64> = sp.iter().map(|&i| p[i]).collect();
    let qw: Vec<f64> = sq.iter().map(|&j| q[j]).collect();
    lp_transport(&pw, &qw, |a, b| d[[sp[a], sq[b]]])
}

/// Which fixed-point operator [`naive_fixed_point`] iterates.
pub enum Operator<'a> {
    Bisim,
    Lax,
    Pi(&'a Policy),
}

/// Plain fixed-point iteration from zero solving every transport term with the LP oracle.
/// Same stopping rule and sweep budget as the library.
pub fn naive_fixed_point(mdp: &FiniteMdp, op: Operator<'_>, tol: f64) -> Array2<f64> {
    let (n, na, gamma) = (mdp.num_states(), mdp.num_actions(), mdp.gamma());
    let (rewards, rows) = match op {
        Operator::Pi(pi) => {
            let r = mdp.policy_rewards(pi).unwrap().insert_axis(ndarray::Axis(1));
            let rows = mdp.policy_transitions(pi).unwrap();
            let rows = Array3::from_shape_fn((n, 1, n), |(s, _, t)| rows[[s, t]]);
            (r, rows)
        }
        _ => (mdp.rewards().to_owned(), mdp.transitions().clone()),
    };
    let lax = matches!(op, Operator::Lax);
    let k = rewards.ncols();
    let budget = contraction_budget(reward_span(rewards.iter().copied()), gamma, tol * (1.0 - gamma));
    let mut d = Array2::<f64>::zeros((n, n));
    for _ in 0..budget {
        let mut next = Array2::zeros((n, n));
        for s in 0..n {
            for t in s + 1..n {
                let delta = |a: usize, b: usize| {
                    (rewards[[s, a]] - rewards[[t, b]]).abs()
                        + gamma * lp_between(rows.slice(ndarray::s![s, a, ..]), rows.slice(ndarray::s![t, b, ..]), &d)
                };
                let v = if lax {
                    let c = Array2::from_shape_fn((na, na), |(a, b)| delta(a, b));
                    let rows_min = (0..na).map(|a| c.row(a).fold(f64::INFINITY, |m, &x| m.min(x)));
                    let cols_min = (0..na).map(|b| c.column(b).fold(f64::INFINITY, |m, &x| m.min(x)));
                    rows_min.chain(cols_min).fold(0.0, f64::max)
                } else {
                    (0..k).map(|a| delta(a, a)).fold(0.0, f64::max)
                };
                next[[s, t]] = v;
                next[[t, s]] = v;
            }
        }
        let change = next.iter().zip(&d).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        d = next;
        if change <= tol {
            break;
        }
    }
    d
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `Q^pi` by a direct dense solve of `(I - gamma P^pi) V = R^pi`, written out with
/// Gaussian elimination so it shares nothing with the library's evaluator.
pub fn gauss_q(mdp: &FiniteMdp, pi: &Policy) -> Array2<f64> {
    let (n, na, gamma) = (mdp.num_states(), mdp.num_actions(), mdp.gamma());
    let mut a = Array2::<f64>::zeros((n, n + 1));
    for s in 0..n {
        a[[s, s]] += 1.0;
        for act in 0..na {
            let w = pi.prob(s, act);
            a[[s, n]] += w * mdp.reward(s, act);
            for t in 0..n {
                a[[s, t]] -= gamma * w * mdp.transitions()[[s, act, t]];
            }
        }
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs())).unwrap();
        for c in 0..=n {
            a.swap([col, c], [piv, c]);
        }
        for r in 0..n {
            if r != col {
                let f = a[[r, col]] / a[[col, col]];
                for c in col..=n {
                    a[[r, c]] -= f * a[[col, c]];
                }
            }
        }
    }
    let v: Vec<f64> = (0..n).map(|s| a[[s, n]] / a[[s, s]]).collect();
    Array2::from_shape_fn((n, na), |(s, act)| {
        mdp.reward(s, act) + gamma * (0..n).map(|t| mdp.transitions()[[s, act, t]] * v[t]).sum::<f64>()
    })
}

/// Every deterministic policy, as action vectors in lexicographic order.
pub fn all_deterministic(n: usize, na: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                (0..na).map(move |a| {
                    let mut v = prefix.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

//! Bisimulation, lax-bisimulation and pi-bisimulation metrics as least fixed points,
//! iterated from `d = 0`.
//!
//! Every Wasserstein term keeps its own [`TransportProblem`]: marginals never change
//! between sweeps, only the ground cost `d` does, so each sweep warm-starts from the
//! previous optimal basis.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use super::{MetricKind, MetricMeta, StateMetric};
use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, Policy};
use crate::solvers::contraction_budget;
use crate::transport::TransportProblem;

/// `W_d(P, Q)` between two fixed distributions for changing `d`.
enum Kernel {
    /// Identical distributions.
    Zero,
    /// One side is a point mass: the distance is a plain expectation.
    Point { at: usize, other: Vec<(usize, f64)> },
    /// `last` is the most recent exact value. Iterates only grow, so it stays a lower bound.
    Full { from: Vec<usize>, to: Vec<usize>, problem: TransportProblem, last: f64 },
}

fn sparse(row: ArrayView1<'_, f64>) -> Vec<(usize, f64)> {
    row.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(i, &p)| (i, p)).collect()
}

impl Kernel {
    fn new(p: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>) -> Self {
        if p == q {
            return Kernel::Zero;
        }
        let (sp, sq) = (sparse(p), sparse(q));
        if sp.len() == 1 {
            return Kernel::Point { at: sp[0].0, other: sq };
        }
        if sq.len() == 1 {
            return Kernel::Point { at: sq[0].0, other: sp };
        }
        let problem = TransportProblem::new(
            sp.iter().map(|&(_, w)| w).collect(),
            sq.iter().map(|&(_, w)| w).collect(),
        );
        Kernel::Full {
            from: sp.into_iter().map(|(i, _)| i).collect(),
            to: sq.into_iter().map(|(i, _)| i).collect(),
            problem,
            last: 0.0,
        }
    }

    /// `(lower, upper, exact)` bounds on the distance under `d`.
    fn bounds(&self, d: &Array2<f64>, d_is_zero: bool) -> (f64, f64, bool) {
        match self {
            Kernel::Zero => (0.0, 0.0, true),
            Kernel::Point { at, other } => {
                let v = other.iter().map(|&(j, w)| w * d[[*at, j]]).sum();
                (v, v, true)
            }
            Kernel::Full { .. } if d_is_zero => (0.0, 0.0, true),
            Kernel::Full { from, to, problem, last } => {
                match problem.coupling_cost(|i, j| d[[from[i], to[j]]]) {
                    Some(upper) => (*last, upper, false),
                    None => (*last, f64::INFINITY, false),
                }
            }
        }
    }

    fn solve(&mut self, d: &Array2<f64>) -> Result<f64> {
        match self {
            Kernel::Full { from, to, problem, last } => {
                *last = problem.solve(|i, j| d[[from[i], to[j]]])?;
                Ok(*last)
            }
            _ => Ok(self.bounds(d, false).0),
        }
    }
}

/// `reward gap + gamma * W_d(...)`.
struct Term {
    reward_gap: f64,
    kernel: Kernel,
}

/// Bracket on a term's value; exact once `lo == hi` and `exact` is set.
#[derive(Clone, Copy)]
struct Bracket {
    lo: f64,
    hi: f64,
    exact: bool,
}

impl Term {
    fn bracket(&self, gamma: f64, d: &Array2<f64>, d_is_zero: bool) -> Bracket {
        let (lo, hi, exact) = self.kernel.bounds(d, d_is_zero);
        Bracket { lo: self.reward_gap + gamma * lo, hi: self.reward_gap + gamma * hi, exact }
    }

    fn resolve(&mut self, gamma: f64, d: &Array2<f64>) -> Result<Bracket> {
        let v = self.reward_gap + gamma * self.kernel.solve(d)?;
        Ok(Bracket { lo: v, hi: v, exact: true })
    }
}

enum PairUpdate {
    /// `max` over terms (per-action for bisimulation, a single term for pi-bisimulation).
    Max(Vec<Term>),
    /// Hausdorff over an `na x na` grid of action-pair terms.
    Hausdorff { na: usize, terms: Vec<Term> },
}

impl PairUpdate {
    /// Exact update value. Transport problems are solved only when their bracket can
    /// still decide the max (or the Hausdorff max-min).
    fn eval(&mut self, gamma: f64, d: &Array2<f64>, d_is_zero: bool) -> Result<f64> {
        match self {
            PairUpdate::Max(terms) => {
                let brackets: Vec<Bracket> = terms.iter().map(|t| t.bracket(gamma, d, d_is_zero)).collect();
                let mut order: Vec<usize> = (0..terms.len()).collect();
                order.sort_by(|&a, &b| brackets[b].hi.total_cmp(&brackets[a].hi).then(a.cmp(&b)));
                let mut best = f64::NEG_INFINITY;
                for k in order {
                    if brackets[k].hi <= best {
                        break;
                    }
                    let v = if brackets[k].exact { brackets[k].hi } else { terms[k].resolve(gamma, d)?.hi };
                    best = best.max(v);
                }
                Ok(best.max(0.0))
            }
            PairUpdate::Hausdorff { na, terms } => {
                let na = *na;
                let mut br: Vec<Bracket> = terms.iter().map(|t| t.bracket(gamma, d, d_is_zero)).collect();
                loop {
                    // line k < na is row k, otherwise column k - na
                    let entry = |line: usize, i: usize| if line < na { line * na + i } else { i * na + line - na };
                    let mut top = (0, f64::NEG_INFINITY, 0.0);
                    for line in 0..2 * na {
                        let (mut lo, mut hi) = (f64::INFINITY, f64::INFINITY);
                        for i in 0..na {
                            let b = br[entry(line, i)];
                            lo = lo.min(b.lo);
                            hi = hi.min(b.hi);
                        }
                        if hi > top.1 {
                            top = (line, hi, lo);
                        }
                    }
                    let (line, hi, lo) = top;
                    let open = (0..na)
                        .map(|i| entry(line, i))
                        .filter(|&k| !br[k].exact)
                        .min_by(|&a, &b| br[a].lo.total_cmp(&br[b].lo).then(a.cmp(&b)));
                    match open {
                        Some(k) if lo < hi => br[k] = terms[k].resolve(gamma, d)?,
                        _ => return Ok(hi),
                    }
                }
            }
        }
    }
}

fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|s| (s + 1..n).map(move |t| (s, t))).collect()
}

/// Iterates `d <- F(d)` over all state pairs until the sup-norm change is at most `tol` or
/// `ceil(ln(tol (1-gamma) / R) / ln gamma)` sweeps have run, `R` being the reward span.
fn fixed_point(
    n: usize,
    gamma: f64,
    reward_span: f64,
    tol: f64,
    kind: MetricKind,
    mut updates: Vec<((usize, usize), PairUpdate)>,
) -> Result<StateMetric> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let budget = contraction_budget(reward_span, gamma, tol * (1.0 - gamma));
    let mut d = Array2::zeros((n, n));
    let mut meta = MetricMeta::default();
    for sweep in 0..budget {
        let prev = &d;
        let values: Vec<f64> = updates
            .par_iter_mut()
            .map(|(_, u)| u.eval(gamma, prev, sweep == 0))
            .collect::<Result<_>>()?;
        let mut change = 0.0_f64;
        let mut next = Array2::zeros((n, n));
        for (((s, t), _), v) in updates.iter().zip(values) {
            change = change.max((v - d[[*s, *t]]).abs());
            next[[*s, *t]] = v;
            next[[*t, *s]] = v;
        }
        d = next;
        meta.iterations += 1;
        meta.residual = change;
        meta.residual_history.push(change);
        if change <= tol {
            break;
        }
    }
    Ok(StateMetric::new(d, kind, meta))
}

fn reward_span(rewards: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = rewards.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Least fixed point of `F(d)(s,t) = max_a |R(s,a) - R(t,a)| + gamma W_d(P(s,a), P(t,a))`.
pub fn bisimulation_metric(mdp: &FiniteMdp, tol: f64) -> Result<StateMetric> {
    let na = mdp.num_actions();
    let updates = upper_pairs(mdp.num_states())
        .into_iter()
        .map(|(s, t)| {
            let terms = (0..na)
                .map(|a| Term {
                    reward_gap: (mdp.reward(s, a) - mdp.reward(t, a)).abs(),
                    kernel: Kernel::new(mdp.transition_row(s, a), mdp.transition_row(t, a)),
                })
                .collect();
            ((s, t), PairUpdate::Max(terms))
        })
        .collect();
    fixed_point(
        mdp.num_states(),
        mdp.gamma(),
        reward_span(mdp.rewards().iter().copied()),
        tol,
        MetricKind::Bisim,
        updates,
    )
}

/// Least fixed point of `F(d)(s,t) = H(delta(d))(X_s, X_t)` with
/// `delta(d)((s,a),(t,b)) = |R(s,a) - R(t,b)| + gamma W_d(P(s,a), P(t,b))`.
pub fn lax_bisimulation_metric(mdp: &FiniteMdp, tol: f64) -> Result<StateMetric> {
    let na = mdp.num_actions();
    let updates = upper_pairs(mdp.num_states())
        .into_iter()
        .map(|(s, t)| {
            let terms = (0..na)
                .flat_map(|a| (0..na).map(move |b| (a, b)))
                .map(|(a, b)| Term {
                    reward_gap: (mdp.reward(s, a) - mdp.reward(t, b)).abs(),
                    kernel: Kernel::new(mdp.transition_row(s, a), mdp.transition_row(t, b)),
                })
                .collect();
            ((s, t), PairUpdate::Hausdorff { na, terms })
        })
        .collect();
    fixed_point(
        mdp.num_states(),
        mdp.gamma(),
        reward_span(mdp.rewards().iter().copied()),
        tol,
        MetricKind::Lax,
        updates,
    )
}

/// Least fixed point of `F(d)(s,t) = |R^pi(s) - R^pi(t)| + gamma W_d(P^pi(s), P^pi(t))`.
pub fn pi_bisimulation_metric(mdp: &FiniteMdp, pi: &Policy, tol: f64) -> Result<StateMetric> {
    let rewards = mdp.policy_rewards(pi)?;
    let rows = mdp.policy_transitions(pi)?;
    let updates = upper_pairs(mdp.num_states())
        .into_iter()
        .map(|(s, t)| {
            let term = Term {
                reward_gap: (rewards[s] - rewards[t]).abs(),
                kernel: Kernel::new(rows.row(s), rows.row(t)),
            };
            ((s, t), PairUpdate::Max(vec![term]))
        })
        .collect();
    let mut m = fixed_point(
        mdp.num_states(),
        mdp.gamma(),
        reward_span(rewards.iter().copied()),
        tol,
        MetricKind::PiBisim,
        updates,
    )?;
    if let Some(actions) = pi.actions() {
        m.meta.policy = Some(format!("{actions:?}"));
    }
    Ok(m)
}

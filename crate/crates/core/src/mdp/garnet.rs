use ndarray::{Array2, Array3};
use rand::seq::index;
use rand::Rng;

use super::FiniteMdp;
use crate::error::{Error, Result};
use crate::rng;

/// Discount used for Garnet MDPs when none is given.
pub const DEFAULT_GARNET_GAMMA: f64 = 0.9;

/// Garnet MDP with the default discount.
pub fn generate_garnet(num_states: usize, num_actions: usize, seed: u64) -> Result<FiniteMdp> {
    generate_garnet_with_discount(num_states, num_actions, DEFAULT_GARNET_GAMMA, seed)
}

/// Random Garnet MDP.
///
/// For every `(s, a)`: a branching factor `b` is drawn uniformly from `1..=num_states`,
/// `b` distinct next states are drawn without replacement, each gets a `U[0,1)` weight
/// and the weights are normalized. Rewards are `U[0,1)`. An all-zero weight draw is
/// redrawn; individual zero weights are kept.
pub fn generate_garnet_with_discount(
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    seed: u64,
) -> Result<FiniteMdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::InvalidArgument("Garnet needs at least one state and action".into()));
    }
    let mut rng = rng::stream(seed);
    let mut transitions = Array3::zeros((num_states, num_actions, num_states));
    let mut rewards = Array2::zeros((num_states, num_actions));
    for s in 0..num_states {
        for a in 0..num_actions {
            let branching = rng.random_range(1..=num_states as u64) as usize;
            let targets = index::sample(&mut rng, num_states, branching).into_vec();
            let weights = loop {
                let w: Vec<f64> = (0..branching).map(|_| rng.random::<f64>()).collect();
                if w.iter().any(|&x| x > 0.0) {
                    break w;
                }
            };
            let total: f64 = weights.iter().sum();
            for (&t, w) in targets.iter().zip(&weights) {
                transitions[[s, a, t]] = w / total;
            }
            rewards[[s, a]] = rng.random::<f64>();
        }
    }
    renormalize_rounding(&mut transitions);
    FiniteMdp::new(rewards, transitions, gamma)
}

/// Division by the weight total can leave a row a few ulps away from 1; fold the
/// remainder into the row's largest entry so validation at 1e-12 always passes.
fn renormalize_rounding(transitions: &mut Array3<f64>) {
    let (ns, na, _) = transitions.dim();
    for s in 0..ns {
        for a in 0..na {
            let mut row = transitions.slice_mut(ndarray::s![s, a, ..]);
            let sum: f64 = row.sum();
            let (imax, _) = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
            row[imax] += 1.0 - sum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_garnet_is_absorbing() {
        for seed in 0..5 {
            let m = generate_garnet(1, 1, seed).unwrap();
            assert_eq!(m.transition_row(0, 0)[0], 1.0);
            let r = m.reward(0, 0);
            assert!((0.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn garnet_is_deterministic_in_seed() {
        let a = generate_garnet(5, 2, 0).unwrap();
        let b = generate_garnet(5, 2, 0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_garnet(5, 2, 1).unwrap());
    }

    #[test]
    fn full_scale_garnet_is_well_formed() {
        let m = generate_garnet(200, 5, 3).unwrap();
        for s in 0..200 {
            for a in 0..5 {
                let support = m.support(s, a).len();
                assert!((1..=200).contains(&support));
            }
        }
    }
}

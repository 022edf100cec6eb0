//! Largest bisimulation, lax-bisimulation and pi-bisimulation relations by partition
//! refinement, starting from a single block.

use ndarray::{Array1, Array2};

use super::Partition;
use crate::error::Result;
use crate::mdp::{FiniteMdp, Policy};

pub const DEFAULT_PARTITION_EPS: f64 = 1e-9;

/// Per-state signatures: one row per action of `[reward, mass into block 0, ...]`.
type Signature = Vec<Vec<f64>>;

fn close(x: &[f64], y: &[f64], eps: f64) -> bool {
    x.iter().zip(y).all(|(a, b)| (a - b).abs() <= eps)
}

fn strict_match(x: &Signature, y: &Signature, eps: f64) -> bool {
    x.iter().zip(y).all(|(a, b)| close(a, b, eps))
}

fn lax_match(x: &Signature, y: &Signature, eps: f64) -> bool {
    let covers = |x: &Signature, y: &Signature| x.iter().all(|a| y.iter().any(|b| close(a, b, eps)));
    covers(x, y) && covers(y, x)
}

/// Splits blocks until stable. Within a block, states join the first group whose
/// representative (lowest state index) matches them.
fn refine(
    n: usize,
    signature: impl Fn(usize, &Partition) -> Signature,
    matches: impl Fn(&Signature, &Signature) -> bool,
) -> Partition {
    let mut part = Partition::single_block(n);
    loop {
        let sigs: Vec<Signature> = (0..n).map(|s| signature(s, &part)).collect();
        let mut labels = vec![0usize; n];
        let mut next_label = 0;
        for block in part.blocks() {
            let mut reps: Vec<(usize, usize)> = Vec::new();
            for &s in block {
                let label = match reps.iter().find(|(rep, _)| matches(&sigs[*rep], &sigs[s])) {
                    Some(&(_, label)) => label,
                    None => {
                        reps.push((s, next_label));
                        next_label += 1;
                        next_label - 1
                    }
                };
                labels[s] = label;
            }
        }
        let refined = Partition::from_indices(&labels);
        if refined.num_blocks() == part.num_blocks() {
            return refined;
        }
        part = refined;
    }
}

fn block_masses(row: impl Iterator<Item = f64>, part: &Partition) -> Vec<f64> {
    let mut masses = vec![0.0; part.num_blocks()];
    for (t, p) in row.enumerate() {
        masses[part.block(t)] += p;
    }
    masses
}

fn action_signature(mdp: &FiniteMdp, s: usize, part: &Partition) -> Signature {
    (0..mdp.num_actions())
        .map(|a| {
            let mut sig = vec![mdp.reward(s, a)];
            sig.extend(block_masses(mdp.transition_row(s, a).iter().copied(), part));
            sig
        })
        .collect()
}

/// Largest bisimulation: equal per-action rewards and per-action block masses (within `eps`).
pub fn bisimulation_partition(mdp: &FiniteMdp, eps: f64) -> Partition {
    refine(mdp.num_states(), |s, p| action_signature(mdp, s, p), |x, y| strict_match(x, y, eps))
}

/// Largest lax bisimulation: every action of one state is matched by some action of the
/// other, and vice versa.
pub fn lax_bisimulation_partition(mdp: &FiniteMdp, eps: f64) -> Partition {
    refine(mdp.num_states(), |s, p| action_signature(mdp, s, p), |x, y| lax_match(x, y, eps))
}

/// Largest pi-bisimulation: equal policy-averaged rewards and block masses.
pub fn pi_bisimulation_partition(mdp: &FiniteMdp, pi: &Policy, eps: f64) -> Result<Partition> {
    let rewards: Array1<f64> = mdp.policy_rewards(pi)?;
    let rows: Array2<f64> = mdp.policy_transitions(pi)?;
    Ok(refine(
        mdp.num_states(),
        |s, p| {
            let mut sig = vec![rewards[s]];
            sig.extend(block_masses(rows.row(s).iter().copied(), p));
            vec![sig]
        },
        |x, y| strict_match(x, y, eps),
    ))
}

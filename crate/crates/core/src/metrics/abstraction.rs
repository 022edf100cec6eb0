use ndarray::ArrayView2;

use super::Partition;
use crate::error::{Error, Result};

/// Greedy eta-abstraction of `f[state][action]`: states are scanned in index order and join
/// the first block whose representative is within `eta` of them in every action, otherwise
/// they open a new block. Order dependent; members of one block can differ by up to `2 eta`.
pub fn eta_abstraction(f: ArrayView2<'_, f64>, eta: f64) -> Result<Partition> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be nonnegative, got {eta}")));
    }
    let mut reps: Vec<usize> = Vec::new();
    let mut labels = Vec::with_capacity(f.nrows());
    for s in 0..f.nrows() {
        let row = f.row(s);
        let found = reps.iter().position(|&r| {
            row.iter().zip(f.row(r)).all(|(x, y)| (x - y).abs() <= eta)
        });
        labels.push(found.unwrap_or_else(|| {
            reps.push(s);
            reps.len() - 1
        }));
    }
    Ok(Partition::from_indices(&labels))
}

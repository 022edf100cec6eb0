use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::StateMetric;
use crate::rng;
use crate::solvers::ValueFunctions;

/// `ceil(n * fraction)`, guarded against float fuzz such as `50 * 0.3 = 15.000000000000002`.
pub fn known_count(n: usize, fraction: f64) -> usize {
    (((n as f64) * fraction - 1e-9).ceil() as usize).clamp(1, n)
}

/// Samples the known set and maps every state to its source: itself when known, otherwise
/// a nearest known state with ties broken uniformly at random.
pub fn nearest_known(d: &StateMetric, fraction: f64, run_seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let n = d.num_states();
    if n == 0 {
        return Err(Error::EmptySet);
    }
    let mut rng = rng::stream(run_seed);
    let mut known = sample(&mut rng, n, known_count(n, fraction)).into_vec();
    known.sort_unstable();
    let mut is_known = vec![false; n];
    for &t in &known {
        is_known[t] = true;
    }

    let mut ties = Vec::with_capacity(known.len());
    let mut source = Vec::with_capacity(n);
    for s in 0..n {
        if is_known[s] {
            source.push(s);
            continue;
        }
        let best = known.iter().map(|&t| d.get(s, t)).fold(f64::INFINITY, f64::min);
        ties.clear();
        ties.extend(known.iter().copied().filter(|&t| d.get(s, t) == best));
        let pick = if ties.len() == 1 { 0 } else { rng.random_range(0..ties.len()) };
        source.push(ties[pick]);
    }
    Ok(source)
}

fn check_states(d: &StateMetric, vf: &ValueFunctions) -> Result<()> {
    if vf.v.len() != d.num_states() {
        return Err(Error::DimensionMismatch(format!(
            "metric covers {} states, value function {}",
            d.num_states(),
            vf.v.len()
        )));
    }
    Ok(())
}

/// Mean over states of `|V*(s) - V*(NN(s))|`; known states contribute 0.
pub fn nn_extrapolate_v(d: &StateMetric, fraction: f64, run_seed: u64, vf: &ValueFunctions) -> Result<f64> {
    check_states(d, vf)?;
    let source = nearest_known(d, fraction, run_seed)?;
    let total: f64 = source.iter().enumerate().map(|(s, &t)| (vf.v[s] - vf.v[t]).abs()).sum();
    Ok(total / source.len() as f64)
}

/// Mean over states of `max_a |Q*(s,a) - Q*(NN(s),a)|`; known states contribute 0.
pub fn nn_extrapolate_q(d: &StateMetric, fraction: f64, run_seed: u64, vf: &ValueFunctions) -> Result<f64> {
    check_states(d, vf)?;
    let source = nearest_known(d, fraction, run_seed)?;
    let total: f64 = source
        .iter()
        .enumerate()
        .map(|(s, &t)| {
            vf.q.row(s).iter().zip(vf.q.row(t)).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        })
        .sum();
    Ok(total / source.len() as f64)
}

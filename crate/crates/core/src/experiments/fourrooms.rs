use ndarray::Array1;

use crate::error::{Error, Result};
use crate::mdp::{build_gridworld, GridSpec, Gridworld};
use crate::metrics::StateMetric;
use crate::solvers::ValueFunctions;

/// The 13x13 four-rooms layout. The goal sits inside the bottom-right room, away from walls.
pub const FOUR_ROOMS: &str = "\
#############
#.....#.....#
#.....#.....#
#...........#
#.....#.....#
#.....#.....#
##.####.....#
#.....###.###
#.....#.....#
#.....#.....#
#.........G.#
#.....#.....#
#############
";

/// Four rooms with +1 for entering the goal, -1 for running into a wall and 0 otherwise.
pub fn four_rooms(gamma: f64) -> Result<Gridworld> {
    build_gridworld(&GridSpec::from_text(FOUR_ROOMS, gamma)?)
}

fn check_source(d: &StateMetric, source: usize) -> Result<()> {
    if source >= d.num_states() {
        return Err(Error::IndexOutOfRange { index: source, len: d.num_states() });
    }
    Ok(())
}

/// `d(source, .)`.
pub fn distance_field(d: &StateMetric, source: usize) -> Result<Array1<f64>> {
    check_source(d, source)?;
    Ok(d.d.row(source).to_owned())
}

/// `d(source, t) - |V*(source) - V*(t)|`, nonnegative for metrics that bound `V*` differences.
pub fn tightness_field(d: &StateMetric, vf: &ValueFunctions, source: usize) -> Result<Array1<f64>> {
    check_source(d, source)?;
    if vf.v.len() != d.num_states() {
        return Err(Error::DimensionMismatch(format!(
            "metric covers {} states, value function {}",
            d.num_states(),
            vf.v.len()
        )));
    }
    let v0 = vf.v[source];
    Ok(Array1::from_shape_fn(d.num_states(), |t| d.get(source, t) - (v0 - vf.v[t]).abs()))
}

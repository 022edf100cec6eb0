//! Exact discrete 1-Wasserstein and Hausdorff distances.

mod network_simplex;

pub use network_simplex::TransportProblem;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Tolerance on marginal totals.
pub const MASS_TOL: f64 = 1e-9;
const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric nonnegative ground cost with zero diagonal. The triangle inequality is not
/// required.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundCost(Array2<f64>);

impl GroundCost {
    pub fn new(cost: Array2<f64>) -> Result<Self> {
        let (r, c) = cost.dim();
        if r != c {
            return Err(Error::DimensionMismatch(format!("ground cost is {r}x{c}")));
        }
        for i in 0..r {
            if cost[[i, i]] != 0.0 {
                return Err(Error::InvalidArgument(format!("ground cost diagonal at {i} is nonzero")));
            }
            for j in 0..r {
                let x = cost[[i, j]];
                if !(x >= 0.0) || !x.is_finite() {
                    return Err(Error::InvalidArgument(format!("ground cost ({i},{j}) = {x}")));
                }
                if (x - cost[[j, i]]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidArgument(format!("ground cost is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self(cost))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }
}

fn check_distribution(x: &[f64], name: &str) -> Result<f64> {
    if x.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} has a negative or non-finite entry")));
    }
    Ok(x.iter().sum())
}

/// `min` over couplings of `p` and `q` of the expected ground cost.
pub fn wasserstein1(p: &[f64], q: &[f64], ground: &GroundCost) -> Result<f64> {
    let n = ground.len();
    if p.len() != n || q.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "marginals of length {} and {} for a {n}-point ground cost",
            p.len(),
            q.len()
        )));
    }
    let (sp, sq) = (check_distribution(p, "p")?, check_distribution(q, "q")?);
    if (sp - sq).abs() > MASS_TOL {
        return Err(Error::MassMismatch { p: sp, q: sq });
    }
    if (sp - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidArgument(format!("marginals sum to {sp}, not 1")));
    }
    let cost = ground.view();
    transport_cost(p, q, |i, j| cost[[i, j]])
}

/// Solves one transport problem between two dense distributions over the same points,
/// restricting to their supports first.
pub(crate) fn transport_cost(
    p: &[f64],
    q: &[f64],
    cost: impl Fn(usize, usize) -> f64,
) -> Result<f64> {
    if p == q {
        return Ok(0.0);
    }
    let sp: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let sq: Vec<usize> = (0..q.len()).filter(|&j| q[j] > 0.0).collect();
    match (sp.as_slice(), sq.as_slice()) {
        ([i], _) => Ok(sq.iter().map(|&j| q[j] * cost(*i, j)).sum()),
        (_, [j]) => Ok(sp.iter().map(|&i| p[i] * cost(i, *j)).sum()),
        _ => {
            let mut problem = TransportProblem::new(
                sp.iter().map(|&i| p[i]).collect(),
                sq.iter().map(|&j| q[j]).collect(),
            );
            problem.solve(|a, b| cost(sp[a], sq[b]))
        }
    }
}

/// `max(max_x min_y c(x,y), max_y min_x c(x,y))` for a cost matrix between sets `X` (rows)
/// and `Y` (columns).
pub fn hausdorff(cost: ArrayView2<'_, f64>) -> Result<f64> {
    let (r, c) = cost.dim();
    if r == 0 || c == 0 {
        return Err(Error::EmptySet);
    }
    if cost.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidArgument("Hausdorff costs must be nonnegative".into()));
    }
    Ok(hausdorff_unchecked(r, c, |i, j| cost[[i, j]]))
}

pub(crate) fn hausdorff_unchecked(rows: usize, cols: usize, cost: impl Fn(usize, usize) -> f64) -> f64 {
    let mut col_min = vec![f64::INFINITY; cols];
    let mut worst_row = 0.0_f64;
    for i in 0..rows {
        let mut row_min = f64::INFINITY;
        for (j, cm) in col_min.iter_mut().enumerate() {
            let x = cost(i, j);
            row_min = row_min.min(x);
            *cm = cm.min(x);
        }
        worst_row = worst_row.max(row_min);
    }
    col_min.into_iter().fold(worst_row, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_point(c: f64) -> GroundCost {
        GroundCost::new(array![[0.0, c], [c, 0.0]]).unwrap()
    }

    #[test]
    fn identical_marginals_cost_nothing() {
        let g = GroundCost::new(array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]).unwrap();
        let p = [0.2, 0.3, 0.5];
        assert_eq!(wasserstein1(&p, &p, &g).unwrap(), 0.0);
    }

    #[test]
    fn forced_coupling() {
        assert_eq!(wasserstein1(&[1.0, 0.0], &[0.0, 1.0], &two_point(2.5)).unwrap(), 2.5);
    }

    #[test]
    fn two_point_closed_form() {
        let w = wasserstein1(&[0.7, 0.3], &[0.4, 0.6], &two_point(1.0)).unwrap();
        assert!((w - 0.3).abs() < 1e-12);
    }

    #[test]
    fn mass_mismatch_and_shape_errors() {
        assert!(matches!(
            wasserstein1(&[0.7, 0.3], &[0.4, 0.5], &two_point(1.0)),
            Err(Error::MassMismatch { .. })
        ));
        assert!(matches!(
            wasserstein1(&[1.0], &[1.0], &two_point(1.0)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ground_cost_validation() {
        assert!(GroundCost::new(array![[0.0, 1.0], [2.0, 0.0]]).is_err());
        assert!(GroundCost::new(array![[1.0, 1.0], [1.0, 0.0]]).is_err());
        assert!(GroundCost::new(array![[0.0, -1.0], [-1.0, 0.0]]).is_err());
        // pseudo-metric ground costs are fine
        assert!(GroundCost::new(array![[0.0, 0.0], [0.0, 0.0]]).is_ok());
    }

    #[test]
    fn hausdorff_examples() {
        assert_eq!(hausdorff(array![[0.0, 1.0], [1.0, 0.0]].view()).unwrap(), 0.0);
        assert_eq!(hausdorff(array![[3.0]].view()).unwrap(), 3.0);
        assert_eq!(hausdorff(array![[1.0, 0.0], [2.0, 5.0]].view()).unwrap(), 2.0);
        assert!(matches!(hausdorff(Array2::<f64>::zeros((0, 2)).view()), Err(Error::EmptySet)));
    }
}

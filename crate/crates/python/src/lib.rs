//! Python bindings. Matrices cross the boundary as nested lists of floats.

use std::path::PathBuf;

use mdp_metrics::analysis;
use mdp_metrics::experiments::{run_experiment as run_core, write_result, ExperimentConfig, ExperimentKind};
use mdp_metrics::io;
use mdp_metrics::mdp::{generate_garnet_with_discount, DEFAULT_GARNET_GAMMA};
use mdp_metrics::metrics::{
    avf_metric, bisimulation_metric, bisimulation_partition, delta_forall_metric_bruteforce, delta_pi_metric,
    delta_star_metric, identity_metric, lax_bisimulation_metric, lax_bisimulation_partition,
    partition_metric_of_kind, pi_bisimulation_metric, pi_bisimulation_partition, trivial_metric, MetricMeta,
    DEFAULT_PARTITION_EPS,
};
use mdp_metrics::solvers::{
    evaluate_policy_exact, greedy_policy, value_iteration, DEFAULT_ENUMERATION_CAP, DEFAULT_TOL,
};
use mdp_metrics::transport::{self, GroundCost};
use mdp_metrics::{Error, FiniteMdp, MetricKind, Partition, Policy, StateMetric, ValueFunctions};
use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn matrix(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Array2<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err(format!("{what} is ragged")));
    }
    Array2::from_shape_vec((r, c), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn nested(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|row| row.to_vec()).collect()
}

/// Accepts a vector (one value per state) or a matrix (one row per state).
fn state_function(f: &Bound<'_, PyAny>) -> PyResult<Array2<f64>> {
    if let Ok(rows) = f.extract::<Vec<Vec<f64>>>() {
        return matrix(rows, "function");
    }
    let v: Vec<f64> = f.extract()?;
    let n = v.len();
    Ok(Array2::from_shape_vec((n, 1), v).expect("column"))
}

fn policy_arg(mdp: &FiniteMdp, policy: Option<Vec<Vec<f64>>>) -> PyResult<Option<Policy>> {
    let Some(rows) = policy else { return Ok(None) };
    let pi = Policy::from_nested(rows).map_err(err)?;
    mdp.check_policy(&pi).map_err(err)?;
    Ok(Some(pi))
}

fn value_dict<'py>(py: Python<'py>, vf: &ValueFunctions) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("v", vf.v.to_vec())?;
    out.set_item("q", nested(&vf.q))?;
    out.set_item("residual", vf.residual)?;
    out.set_item("iterations", vf.iterations)?;
    Ok(out)
}

/// A finite MDP with rewards `R[s][a]`, transitions `P[s][a][s']` and a discount.
#[pyclass(name = "Mdp", frozen)]
struct PyMdp {
    inner: FiniteMdp,
}

#[pymethods]
impl PyMdp {
    #[new]
    fn new(rewards: Vec<Vec<f64>>, transitions: Vec<Vec<Vec<f64>>>, gamma: f64) -> PyResult<Self> {
        Ok(Self { inner: FiniteMdp::from_nested(rewards, transitions, gamma).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (states, actions, seed, gamma = DEFAULT_GARNET_GAMMA))]
    fn garnet(states: usize, actions: usize, seed: u64, gamma: f64) -> PyResult<Self> {
        Ok(Self { inner: generate_garnet_with_discount(states, actions, gamma, seed).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: io::mdp_from_json(text, "json").map_err(err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: io::load_mdp(&path).map_err(err)? })
    }

    fn to_json(&self) -> String {
        io::mdp_to_json(&self.inner)
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    #[getter]
    fn rewards(&self) -> Vec<Vec<f64>> {
        nested(&self.inner.rewards().to_owned())
    }

    #[getter]
    fn transitions(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner
            .transitions()
            .outer_iter()
            .map(|s| s.outer_iter().map(|row| row.to_vec()).collect())
            .collect()
    }

    /// Optimal `V*` and `Q*` by value iteration, or `V^pi` and `Q^pi` by an exact solve
    /// when a policy is given.
    #[pyo3(signature = (tol = DEFAULT_TOL, policy = None))]
    fn solve<'py>(&self, py: Python<'py>, tol: f64, policy: Option<Vec<Vec<f64>>>) -> PyResult<Bound<'py, PyDict>> {
        let pi = policy_arg(&self.inner, policy)?;
        let mdp = &self.inner;
        let vf = py
            .detach(|| match &pi {
                Some(pi) => evaluate_policy_exact(mdp, pi),
                None => value_iteration(mdp, tol),
            })
            .map_err(err)?;
        value_dict(py, &vf)
    }

    /// Greedy policy with respect to `Q*`, as a probability matrix.
    #[pyo3(signature = (tol = DEFAULT_TOL))]
    fn greedy_policy(&self, py: Python<'_>, tol: f64) -> PyResult<Vec<Vec<f64>>> {
        let mdp = &self.inner;
        let vf = py.detach(|| value_iteration(mdp, tol)).map_err(err)?;
        Ok(nested(&greedy_policy(&vf).probs().to_owned()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Mdp(num_states={}, num_actions={}, gamma={})",
            self.inner.num_states(),
            self.inner.num_actions(),
            self.inner.gamma()
        )
    }
}

/// A state metric: a symmetric distance matrix tagged with its kind.
#[pyclass(name = "Metric", frozen)]
struct PyMetric {
    inner: StateMetric,
}

#[pymethods]
impl PyMetric {
    #[new]
    #[pyo3(signature = (matrix, kind = "aggregation"))]
    fn new(matrix: Vec<Vec<f64>>, kind: &str) -> PyResult<Self> {
        let d = self::matrix(matrix, "metric")?;
        if d.nrows() != d.ncols() {
            return Err(PyValueError::new_err(format!("metric matrix is {}x{}", d.nrows(), d.ncols())));
        }
        let kind: MetricKind = kind.parse().map_err(err)?;
        Ok(Self { inner: StateMetric::new(d, kind, MetricMeta::default()) })
    }

    #[getter]
    fn matrix(&self) -> Vec<Vec<f64>> {
        nested(&self.inner.d)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.name()
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.meta.iterations
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.inner.meta.residual
    }

    fn get(&self, s: usize, t: usize) -> PyResult<f64> {
        let n = self.inner.num_states();
        if s >= n || t >= n {
            return Err(err(Error::IndexOutOfRange { index: s.max(t), len: n }));
        }
        Ok(self.inner.get(s, t))
    }

    fn to_csv(&self) -> String {
        io::metric_to_csv(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Metric(kind={:?}, num_states={})", self.inner.kind.name(), self.inner.num_states())
    }
}

/// Computes a metric of the given kind. Policy kinds default to the greedy optimal policy.
#[pyfunction]
#[pyo3(signature = (mdp, kind, tol = DEFAULT_TOL, policy = None, n = 50, seed = 0, cap = DEFAULT_ENUMERATION_CAP))]
fn metric(
    py: Python<'_>,
    mdp: &PyMdp,
    kind: &str,
    tol: f64,
    policy: Option<Vec<Vec<f64>>>,
    n: usize,
    seed: u64,
    cap: u64,
) -> PyResult<PyMetric> {
    let kind: MetricKind = kind.parse().map_err(err)?;
    let pi = policy_arg(&mdp.inner, policy)?;
    let mdp = &mdp.inner;
    let eps = DEFAULT_PARTITION_EPS;
    let d = py
        .detach(|| -> mdp_metrics::Result<StateMetric> {
            let pi = || match &pi {
                Some(p) => Ok(p.clone()),
                None => value_iteration(mdp, tol).map(|vf| greedy_policy(&vf)),
            };
            Ok(match kind {
                MetricKind::Identity => identity_metric(mdp.num_states()),
                MetricKind::Trivial => trivial_metric(mdp.num_states()),
                MetricKind::BisimDiscrete => partition_metric_of_kind(&bisimulation_partition(mdp, eps), kind),
                MetricKind::LaxDiscrete => partition_metric_of_kind(&lax_bisimulation_partition(mdp, eps), kind),
                MetricKind::PiBisimDiscrete => {
                    partition_metric_of_kind(&pi_bisimulation_partition(mdp, &pi()?, eps)?, kind)
                }
                MetricKind::Bisim => bisimulation_metric(mdp, tol)?,
                MetricKind::Lax => lax_bisimulation_metric(mdp, tol)?,
                MetricKind::PiBisim => pi_bisimulation_metric(mdp, &pi()?, tol)?,
                MetricKind::DeltaStar => delta_star_metric(mdp, tol)?,
                MetricKind::DeltaPi => delta_pi_metric(mdp, &pi()?, tol)?,
                MetricKind::DeltaForall => delta_forall_metric_bruteforce(mdp, cap)?,
                MetricKind::Avf => avf_metric(mdp, n, seed)?,
                MetricKind::Aggregation => {
                    return Err(Error::InvalidArgument("aggregation metrics are built from a partition".into()))
                }
            })
        })
        .map_err(err)?;
    Ok(PyMetric { inner: d })
}

/// Block label of every state under the largest bisimulation, lax or pi-bisimulation relation.
#[pyfunction]
#[pyo3(signature = (mdp, kind, policy = None, eps = DEFAULT_PARTITION_EPS))]
fn partition(py: Python<'_>, mdp: &PyMdp, kind: &str, policy: Option<Vec<Vec<f64>>>, eps: f64) -> PyResult<Vec<usize>> {
    let pi = policy_arg(&mdp.inner, policy)?;
    let mdp = &mdp.inner;
    let p = match kind {
        "bisim" => bisimulation_partition(mdp, eps),
        "lax" => lax_bisimulation_partition(mdp, eps),
        "pibisim" => {
            let pi = match pi {
                Some(p) => p,
                None => greedy_policy(&py.detach(|| value_iteration(mdp, DEFAULT_TOL)).map_err(err)?),
            };
            pi_bisimulation_partition(mdp, &pi, eps).map_err(err)?
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown relation {other:?}; expected bisim, lax or pibisim"
            )))
        }
    };
    Ok(p.block_of().to_vec())
}

/// Discrete metric of a labelling: 0 within a block, 1 across blocks.
#[pyfunction]
fn partition_metric(labels: Vec<usize>) -> PyMetric {
    let p = Partition::from_indices(&labels);
    PyMetric { inner: partition_metric_of_kind(&p, MetricKind::Aggregation) }
}

/// Block labels of the connected components of `{(s,t) : d(s,t) <= tol}`.
#[pyfunction]
#[pyo3(signature = (d, tol = 1e-6))]
fn kernel_partition(d: &PyMetric, tol: f64) -> Vec<usize> {
    analysis::kernel_partition(&d.inner, tol).block_of().to_vec()
}

#[pyfunction]
fn wasserstein1(p: Vec<f64>, q: Vec<f64>, cost: Vec<Vec<f64>>) -> PyResult<f64> {
    let ground = GroundCost::new(matrix(cost, "cost")?).map_err(err)?;
    transport::wasserstein1(&p, &q, &ground).map_err(err)
}

#[pyfunction]
fn hausdorff(cost: Vec<Vec<f64>>) -> PyResult<f64> {
    transport::hausdorff(matrix(cost, "cost")?.view()).map_err(err)
}

/// Smallest `K` with `|f(s) - f(t)| <= K d(s,t)`; `f` is a vector or a per-state matrix.
#[pyfunction]
#[pyo3(signature = (f, d, tol = 1e-6))]
fn lipschitz_audit<'py>(py: Python<'py>, f: &Bound<'py, PyAny>, d: &PyMetric, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let f = state_function(f)?;
    let r = analysis::lipschitz_audit(f.view(), &d.inner, tol).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("best_k", r.best_k)?;
    out.set_item("kernel_violations", r.kernel_violations)?;
    out.set_item("witness_pair", r.witness_pair)?;
    Ok(out)
}

/// Checks `d1 <= alpha * d2 + tol` pointwise.
#[pyfunction]
#[pyo3(signature = (d1, d2, alpha = 1.0, tol = 1e-6))]
fn dominance_check<'py>(
    py: Python<'py>,
    d1: &PyMetric,
    d2: &PyMetric,
    alpha: f64,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = analysis::dominance_check(&d1.inner, &d2.inner, alpha, tol).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("holds", r.holds)?;
    out.set_item("scale", r.scale)?;
    out.set_item("max_violation", r.max_violation)?;
    out.set_item("witness", r.witness)?;
    Ok(out)
}

/// Runs an experiment from a JSON config and returns its rows. With `output`, the result CSV
/// (and any grid CSVs) are written as well.
#[pyfunction]
#[pyo3(signature = (config_json, kind = None, output = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config_json: &str,
    kind: Option<&str>,
    output: Option<PathBuf>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let kind = kind.map(str::parse::<ExperimentKind>).transpose().map_err(err)?;
    let cfg = ExperimentConfig::from_json(config_json, kind).map_err(err)?;
    let result = py.detach(|| run_core(&cfg)).map_err(err)?;
    if let Some(path) = output {
        write_result(&path, &result).map_err(err)?;
    }
    result
        .rows
        .iter()
        .map(|row| {
            let out = PyDict::new(py);
            out.set_item("experiment", row.experiment.name())?;
            out.set_item("metric", String::from(row.metric))?;
            out.set_item("parameter", row.parameter)?;
            out.set_item("mean_error", row.mean_error)?;
            out.set_item("std_error", row.std_error)?;
            out.set_item("n", row.n)?;
            Ok(out)
        })
        .collect()
}

#[pymodule]
fn mdpmetrics(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMdp>()?;
    m.add_class::<PyMetric>()?;
    m.add_function(wrap_pyfunction!(metric, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(partition_metric, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_partition, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein1, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff, m)?)?;
    m.add_function(wrap_pyfunction!(lipschitz_audit, m)?)?;
    m.add_function(wrap_pyfunction!(dominance_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("DEFAULT_TOL", DEFAULT_TOL)?;
    Ok(())
}

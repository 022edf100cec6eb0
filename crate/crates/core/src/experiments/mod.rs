//! Garnet nearest-neighbour and aggregation experiments, and the four-rooms study.
//!
//! Every MDP `i` is generated from `derive_seed(master, "mdp", [i])` and every run `j` of
//! it draws from `derive_seed(master, "run", [i, j])`, so results do not depend on how
//! rayon schedules the work. Aggregation walks `(i, j)` in order.

mod aggregation;
mod fourrooms;
mod nn;

pub use aggregation::{aggregated_value_iteration, k_median_aggregate, AggregatedVi, KMedian, K_MEDIAN_MAX_ROUNDS};
pub use fourrooms::{distance_field, four_rooms, tightness_field, FOUR_ROOMS};
pub use nn::{known_count, nearest_known, nn_extrapolate_q, nn_extrapolate_v};

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::mdp::{generate_garnet_with_discount, FiniteMdp, Policy, DEFAULT_GARNET_GAMMA};
use crate::metrics::{
    bisimulation_metric, bisimulation_partition, delta_forall_metric_bruteforce, delta_pi_metric,
    identity_metric, lax_bisimulation_metric, lax_bisimulation_partition, partition_metric_of_kind,
    pi_bisimulation_metric, pi_bisimulation_partition, q_difference_metric, trivial_metric, avf_metric,
    MetricKind, MetricMeta, StateMetric, DEFAULT_PARTITION_EPS,
};
use crate::rng::derive_seed;
use crate::solvers::{greedy_policy, value_iteration, ValueFunctions, DEFAULT_ENUMERATION_CAP, DEFAULT_TOL};

pub const DEFAULT_AVF_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "nn_v", alias = "nn-v")]
    NnV,
    #[serde(rename = "nn_q", alias = "nn-q")]
    NnQ,
    #[serde(rename = "agg_vi", alias = "agg-vi")]
    AggVi,
    #[serde(rename = "fourrooms")]
    FourRooms,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] =
        [ExperimentKind::NnV, ExperimentKind::NnQ, ExperimentKind::AggVi, ExperimentKind::FourRooms];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::NnV => "nn_v",
            ExperimentKind::NnQ => "nn_q",
            ExperimentKind::AggVi => "agg_vi",
            ExperimentKind::FourRooms => "fourrooms",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment {s:?}")))
    }
}

/// Policy used by pi-parameterized metric kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyChoice {
    Uniform,
    /// Greedy with respect to `Q*`.
    Optimal,
}

impl PolicyChoice {
    pub fn resolve(self, mdp: &FiniteMdp, vf: &ValueFunctions) -> Policy {
        match self {
            PolicyChoice::Uniform => Policy::uniform(mdp.num_states(), mdp.num_actions()),
            PolicyChoice::Optimal => greedy_policy(vf),
        }
    }
}

/// A metric kind with its parameters, written `kind`, `avf:<n>` or `<pi-kind>:<uniform|optimal>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub policy: PolicyChoice,
    pub samples: usize,
}

impl MetricSpec {
    pub fn new(kind: MetricKind) -> Self {
        Self { kind, policy: PolicyChoice::Optimal, samples: DEFAULT_AVF_SAMPLES }
    }

    pub fn avf(samples: usize) -> Self {
        Self { samples, ..Self::new(MetricKind::Avf) }
    }

    pub fn with_policy(kind: MetricKind, policy: PolicyChoice) -> Self {
        Self { policy, ..Self::new(kind) }
    }

    pub fn uses_policy(&self) -> bool {
        matches!(self.kind, MetricKind::PiBisim | MetricKind::PiBisimDiscrete | MetricKind::DeltaPi)
    }

    /// Computes the metric. `vf` must hold the optimal value functions of `mdp`; `seed`
    /// drives AVF sampling only.
    pub fn compute(&self, mdp: &FiniteMdp, vf: &ValueFunctions, tol: f64, seed: u64) -> Result<StateMetric> {
        let n = mdp.num_states();
        let eps = DEFAULT_PARTITION_EPS;
        let pi = || self.policy.resolve(mdp, vf);
        Ok(match self.kind {
            MetricKind::Identity => identity_metric(n),
            MetricKind::Trivial => trivial_metric(n),
            MetricKind::BisimDiscrete => partition_metric_of_kind(&bisimulation_partition(mdp, eps), self.kind),
            MetricKind::LaxDiscrete => partition_metric_of_kind(&lax_bisimulation_partition(mdp, eps), self.kind),
            MetricKind::PiBisimDiscrete => {
                partition_metric_of_kind(&pi_bisimulation_partition(mdp, &pi(), eps)?, self.kind)
            }
            MetricKind::Bisim => bisimulation_metric(mdp, tol)?,
            MetricKind::Lax => lax_bisimulation_metric(mdp, tol)?,
            MetricKind::PiBisim => pi_bisimulation_metric(mdp, &pi(), tol)?,
            MetricKind::DeltaStar => {
                let meta = MetricMeta { iterations: vf.iterations, residual: vf.residual, ..Default::default() };
                StateMetric::new(q_difference_metric(vf.q.view()), MetricKind::DeltaStar, meta)
            }
            MetricKind::DeltaPi => delta_pi_metric(mdp, &pi(), tol)?,
            MetricKind::DeltaForall => delta_forall_metric_bruteforce(mdp, DEFAULT_ENUMERATION_CAP)?,
            MetricKind::Avf => avf_metric(mdp, self.samples, seed)?,
            MetricKind::Aggregation => {
                return Err(Error::InvalidArgument("aggregation metrics need an explicit partition".into()))
            }
        })
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            MetricKind::Avf => write!(f, "avf:{}", self.samples),
            _ if self.uses_policy() => {
                let p = match self.policy {
                    PolicyChoice::Uniform => "uniform",
                    PolicyChoice::Optimal => "optimal",
                };
                write!(f, "{}:{p}", self.kind)
            }
            _ => write!(f, "{}", self.kind),
        }
    }
}

impl FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let mut spec = MetricSpec::new(name.trim().parse()?);
        match (param, spec.kind) {
            (None, _) => {}
            (Some(p), MetricKind::Avf) => {
                spec.samples = p
                    .trim()
                    .parse()
                    .ok()
                    .filter(|&n: &usize| n > 0)
                    .ok_or_else(|| Error::InvalidArgument(format!("bad AVF sample count in {s:?}")))?;
            }
            (Some(p), _) if spec.uses_policy() => {
                spec.policy = match p.trim() {
                    "uniform" => PolicyChoice::Uniform,
                    "optimal" => PolicyChoice::Optimal,
                    other => return Err(Error::InvalidArgument(format!("unknown policy {other:?} in {s:?}"))),
                };
            }
            (Some(_), kind) => {
                return Err(Error::InvalidArgument(format!("metric kind {kind} takes no parameter ({s:?})")))
            }
        }
        Ok(spec)
    }
}

impl From<MetricSpec> for String {
    fn from(m: MetricSpec) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for MetricSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub metrics: Vec<MetricSpec>,
    pub num_mdps: usize,
    pub states: usize,
    pub actions: usize,
    pub runs_per_mdp: usize,
    /// Known-state fractions for the nearest-neighbour experiments.
    #[serde(default)]
    pub fractions: Vec<f64>,
    /// Aggregate-state counts for aggregation experiments.
    #[serde(default)]
    pub cluster_counts: Vec<usize>,
    pub master_seed: u64,
    pub tol: f64,
    pub gamma: f64,
}

/// Partial configuration as read from JSON; missing fields take the desk-scale defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: Option<ExperimentKind>,
    metrics: Option<Vec<MetricSpec>>,
    num_mdps: Option<usize>,
    states: Option<usize>,
    actions: Option<usize>,
    runs_per_mdp: Option<usize>,
    fractions: Option<Vec<f64>>,
    cluster_counts: Option<Vec<usize>>,
    master_seed: Option<u64>,
    tol: Option<f64>,
    gamma: Option<f64>,
}

fn default_cluster_counts(states: usize) -> Vec<usize> {
    std::iter::once(1).chain((5..=states).step_by(5)).filter(|&k| k <= states).collect()
}

impl ExperimentConfig {
    /// Desk-scale defaults: 20 Garnet(50, 5) MDPs with 20 runs each.
    pub fn desk(experiment: ExperimentKind) -> Self {
        let garnet_metrics = ["bisim-rel", "lax-rel", "bisim", "lax", "dstar", "avf:50"];
        let (metrics, fractions, cluster_counts, num_mdps, runs): (&[&str], _, _, _, _) = match experiment {
            ExperimentKind::NnV | ExperimentKind::NnQ => {
                (&garnet_metrics, (1..=10).map(|k| k as f64 / 10.0).collect(), Vec::new(), 20, 20)
            }
            ExperimentKind::AggVi => (&garnet_metrics, Vec::new(), default_cluster_counts(50), 20, 20),
            ExperimentKind::FourRooms => (&["bisim", "lax", "dstar", "avf:50"], Vec::new(), vec![11], 1, 1),
        };
        Self {
            experiment,
            metrics: metrics.iter().map(|m| m.parse().expect("valid built-in spec")).collect(),
            num_mdps,
            states: if experiment == ExperimentKind::FourRooms { 104 } else { 50 },
            actions: if experiment == ExperimentKind::FourRooms { 4 } else { 5 },
            runs_per_mdp: runs,
            fractions,
            cluster_counts,
            master_seed: 0,
            tol: DEFAULT_TOL,
            gamma: DEFAULT_GARNET_GAMMA,
        }
    }

    /// The full-scale setting: 100 Garnet(200, 5) MDPs with 50 runs each.
    pub fn full_scale(experiment: ExperimentKind) -> Self {
        let mut cfg = Self::desk(experiment);
        if experiment != ExperimentKind::FourRooms {
            cfg.num_mdps = 100;
            cfg.states = 200;
            cfg.runs_per_mdp = 50;
            if experiment == ExperimentKind::AggVi {
                cfg.cluster_counts = default_cluster_counts(200);
            }
        }
        cfg
    }

    /// Reads a (possibly partial) JSON config. `kind` fixes the experiment when the caller
    /// already knows it; a conflicting `experiment` field is an error.
    pub fn from_json(text: &str, kind: Option<ExperimentKind>) -> Result<Self> {
        let file: ConfigFile = if text.trim().is_empty() {
            ConfigFile::default()
        } else {
            serde_json::from_str(text)
                .map_err(|e| Error::Parse { context: "experiment config".into(), message: e.to_string() })?
        };
        let experiment = match (kind, file.experiment) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::InvalidArgument(format!("config is for experiment {b}, not {a}")))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(Error::InvalidArgument("config does not name an experiment".into())),
        };
        let mut cfg = Self::desk(experiment);
        if let Some(s) = file.states {
            cfg.states = s;
            if experiment == ExperimentKind::AggVi && file.cluster_counts.is_none() {
                cfg.cluster_counts = default_cluster_counts(s);
            }
        }
        macro_rules! take {
            ($($field:ident),*) => { $(if let Some(v) = file.$field { cfg.$field = v; })* };
        }
        take!(metrics, num_mdps, actions, runs_per_mdp, fractions, cluster_counts, master_seed, tol, gamma);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.metrics.is_empty() {
            return bad("no metrics configured".into());
        }
        if let Some(m) = self.metrics.iter().find(|m| m.kind == MetricKind::Aggregation) {
            return bad(format!("metric {m} cannot be computed from an MDP"));
        }
        if self.num_mdps == 0 || self.runs_per_mdp == 0 {
            return bad("num_mdps and runs_per_mdp must be positive".into());
        }
        if self.states == 0 || self.actions == 0 {
            return bad("states and actions must be positive".into());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::GammaOutOfRange(self.gamma));
        }
        match self.experiment {
            ExperimentKind::NnV | ExperimentKind::NnQ => {
                if self.fractions.is_empty() {
                    return bad("no fractions configured".into());
                }
                if let Some(f) = self.fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
                    return bad(format!("fraction {f} outside (0, 1]"));
                }
            }
            ExperimentKind::AggVi | ExperimentKind::FourRooms => {
                if self.cluster_counts.is_empty() {
                    return bad("no cluster counts configured".into());
                }
                let n = if self.experiment == ExperimentKind::FourRooms { four_rooms(0.0)?.mdp.num_states() } else { self.states };
                if let Some(&k) = self.cluster_counts.iter().find(|&&k| k == 0 || k > n) {
                    return Err(Error::KOutOfRange { k, n });
                }
            }
        }
        Ok(())
    }

    /// Parameter values of the experiment, as written to the result CSV.
    pub fn parameters(&self) -> Vec<f64> {
        match self.experiment {
            ExperimentKind::NnV | ExperimentKind::NnQ => self.fractions.clone(),
            ExperimentKind::AggVi | ExperimentKind::FourRooms => {
                self.cluster_counts.iter().map(|&k| k as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: ExperimentKind,
    pub metric: MetricSpec,
    pub parameter: f64,
    pub mean_error: f64,
    /// Sample standard deviation; 0 for a single sample.
    pub std_error: f64,
    pub n: usize,
}

/// A per-cell grid (walls are `None`) written next to the result CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct GridArtifact {
    pub name: String,
    pub cells: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    pub grids: Vec<GridArtifact>,
}

/// One generated MDP with its solution and every configured metric.
#[derive(Debug, Clone)]
pub struct PreparedMdp {
    pub index: usize,
    pub mdp: FiniteMdp,
    pub vf: ValueFunctions,
    pub metrics: Vec<(MetricSpec, StateMetric)>,
}

impl PreparedMdp {
    pub fn metric(&self, spec: &MetricSpec) -> Option<&StateMetric> {
        self.metrics.iter().find(|(s, _)| s == spec).map(|(_, m)| m)
    }
}

fn at_mdp(i: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Experiment { mdp: i, run: None, source: Box::new(e) }
}

/// Generates, solves and measures every Garnet MDP of `cfg`.
pub fn prepare_instances(cfg: &ExperimentConfig) -> Result<Vec<PreparedMdp>> {
    cfg.validate()?;
    (0..cfg.num_mdps)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.master_seed, "mdp", &[i as u64]);
            let mdp = generate_garnet_with_discount(cfg.states, cfg.actions, cfg.gamma, seed).map_err(at_mdp(i))?;
            prepare_one(cfg, i, mdp)
        })
        .collect()
}

fn prepare_one(cfg: &ExperimentConfig, i: usize, mdp: FiniteMdp) -> Result<PreparedMdp> {
    let vf = value_iteration(&mdp, cfg.tol).map_err(at_mdp(i))?;
    let avf_seed = derive_seed(cfg.master_seed, "avf", &[i as u64]);
    let metrics = cfg
        .metrics
        .iter()
        .map(|spec| Ok((*spec, spec.compute(&mdp, &vf, cfg.tol, avf_seed).map_err(at_mdp(i))?)))
        .collect::<Result<_>>()?;
    Ok(PreparedMdp { index: i, mdp, vf, metrics })
}

/// One error per `(metric, parameter)` for run `j` of a prepared MDP.
fn run_errors(cfg: &ExperimentConfig, inst: &PreparedMdp, j: usize) -> Result<Vec<f64>> {
    let run_seed = derive_seed(cfg.master_seed, "run", &[inst.index as u64, j as u64]);
    let mut out = Vec::with_capacity(cfg.metrics.len() * cfg.parameters().len());
    for spec in &cfg.metrics {
        let d = inst.metric(spec).ok_or_else(|| {
            Error::InvalidArgument(format!("metric {spec} was not prepared for mdp {}", inst.index))
        })?;
        match cfg.experiment {
            ExperimentKind::NnV => {
                for &f in &cfg.fractions {
                    out.push(nn_extrapolate_v(d, f, run_seed, &inst.vf)?);
                }
            }
            ExperimentKind::NnQ => {
                for &f in &cfg.fractions {
                    out.push(nn_extrapolate_q(d, f, run_seed, &inst.vf)?);
                }
            }
            ExperimentKind::AggVi | ExperimentKind::FourRooms => {
                for &k in &cfg.cluster_counts {
                    let km = k_median_aggregate(d, k, run_seed)?;
                    out.push(aggregated_value_iteration(&inst.mdp, &km.partition, inst.vf.q.view(), cfg.tol)?.error);
                }
            }
        }
    }
    Ok(out)
}

/// Runs `cfg` on already prepared MDPs, which may carry more metrics than `cfg` lists.
pub fn run_prepared(cfg: &ExperimentConfig, instances: &[PreparedMdp]) -> Result<ExperimentResult> {
    cfg.validate()?;
    let per_run: Vec<Vec<Vec<f64>>> = instances
        .par_iter()
        .map(|inst| {
            (0..cfg.runs_per_mdp)
                .into_par_iter()
                .map(|j| {
                    run_errors(cfg, inst, j).map_err(|e| Error::Experiment {
                        mdp: inst.index,
                        run: Some(j),
                        source: Box::new(e),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let params = cfg.parameters();
    let mut rows = Vec::new();
    for (m, spec) in cfg.metrics.iter().enumerate() {
        for (p, &parameter) in params.iter().enumerate() {
            let col = m * params.len() + p;
            let samples: Vec<f64> = per_run.iter().flatten().map(|errs| errs[col]).collect();
            let (mean_error, std_error) = mean_and_std(&samples);
            rows.push(ResultRow {
                experiment: cfg.experiment,
                metric: *spec,
                parameter,
                mean_error,
                std_error,
                n: samples.len(),
            });
        }
    }
    Ok(ExperimentResult { config: cfg.clone(), rows, grids: Vec::new() })
}

/// Mean and sample standard deviation, summed in order.
pub fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    if cfg.experiment == ExperimentKind::FourRooms {
        return run_four_rooms(cfg);
    }
    let instances = prepare_instances(cfg)?;
    run_prepared(cfg, &instances)
}

fn file_label(spec: &MetricSpec) -> String {
    spec.to_string().replace(':', "-")
}

/// Distance and tightness fields from the top-left cell, k-median cluster maps (run 0) and
/// aggregated value-iteration errors on the four-rooms gridworld.
fn run_four_rooms(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let world = four_rooms(cfg.gamma)?;
    let inst = prepare_one(cfg, 0, world.mdp.clone())?;
    let source = 0;
    let mut result = run_prepared(cfg, std::slice::from_ref(&inst))?;
    let to_grid = |values: &[f64]| world.to_grid(values);

    result.grids.push(GridArtifact { name: "values".into(), cells: to_grid(inst.vf.v.as_slice().expect("contiguous")) });
    for (spec, d) in &inst.metrics {
        let label = file_label(spec);
        let dist = distance_field(d, source)?;
        let tight = tightness_field(d, &inst.vf, source)?;
        result.grids.push(GridArtifact { name: format!("{label}.distance"), cells: to_grid(&dist.to_vec()) });
        result.grids.push(GridArtifact { name: format!("{label}.tightness"), cells: to_grid(&tight.to_vec()) });
        for &k in &cfg.cluster_counts {
            let seed = derive_seed(cfg.master_seed, "run", &[0, 0]);
            let km = k_median_aggregate(d, k, seed)?;
            let labels: Vec<f64> = km.partition.block_of().iter().map(|&b| b as f64).collect();
            result.grids.push(GridArtifact { name: format!("{label}.clusters{k}"), cells: to_grid(&labels) });
        }
    }
    Ok(result)
}

pub const RESULT_HEADER: &str = "experiment,metric,parameter,mean_error,std_error,n";

pub fn result_to_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(RESULT_HEADER);
    out.push('\n');
    for r in &result.rows {
        writeln!(out, "{},{},{},{},{},{}", r.experiment, r.metric, r.parameter, r.mean_error, r.std_error, r.n)
            .unwrap();
    }
    out
}

/// Grid as CSV: a header row of column indices, then one row per grid row led by its
/// index. Walls are written as `#`.
pub fn grid_to_csv(grid: &GridArtifact) -> String {
    let cols = grid.cells.first().map_or(0, Vec::len);
    let mut out = String::from("row");
    for c in 0..cols {
        write!(out, ",{c}").unwrap();
    }
    out.push('\n');
    for (r, row) in grid.cells.iter().enumerate() {
        write!(out, "{r}").unwrap();
        for cell in row {
            match cell {
                Some(x) => write!(out, ",{x}").unwrap(),
                None => out.push_str(",#"),
            }
        }
        out.push('\n');
    }
    out
}

/// Sibling path `<stem>.<name>.csv` of the result file.
pub fn grid_path(result_path: &Path, name: &str) -> PathBuf {
    let stem = result_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    result_path.with_file_name(format!("{stem}.{name}.csv"))
}

/// Writes the result CSV and every grid next to it; returns all written paths.
pub fn write_result(path: &Path, result: &ExperimentResult) -> Result<Vec<PathBuf>> {
    write_atomic(path, result_to_csv(result).as_bytes())?;
    let mut written = vec![path.to_path_buf()];
    for g in &result.grids {
        let p = grid_path(path, &g.name);
        write_atomic(&p, grid_to_csv(g).as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

pub fn parse_result_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if headers != RESULT_HEADER {
        return Err(Error::Parse { context: "result csv".into(), message: format!("unexpected header {headers:?}") });
    }
    reader
        .records()
        .enumerate()
        .map(|(line, rec)| {
            let rec = rec?;
            let err = |m: String| Error::Parse { context: format!("result csv, line {}", line + 2), message: m };
            let num = |k: usize| rec[k].parse::<f64>().map_err(|e| err(e.to_string()));
            Ok(ResultRow {
                experiment: rec[0].parse()?,
                metric: rec[1].parse()?,
                parameter: num(2)?,
                mean_error: num(3)?,
                std_error: num(4)?,
                n: rec[5].parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
            })
        })
        .collect()
}

/// A self-contained matplotlib script that plots `csv_name` (looked up next to the script).
/// It only reads and draws; no numbers are derived.
pub fn plot_script(csv_name: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
"""Plots mean error curves (with one standard deviation bars) from {csv_name}."""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, {csv_name:?})
curves = {{}}
with open(path, newline="") as f:
    for row in csv.DictReader(f):
        key = (row["experiment"], row["metric"])
        curves.setdefault(key, ([], [], []))
        xs, ys, es = curves[key]
        xs.append(float(row["parameter"]))
        ys.append(float(row["mean_error"]))
        es.append(float(row["std_error"]))

experiments = sorted({{e for e, _ in curves}})
fig, axes = plt.subplots(1, len(experiments), figsize=(5 * len(experiments), 4), squeeze=False)
for ax, experiment in zip(axes[0], experiments):
    for (e, metric), (xs, ys, es) in curves.items():
        if e == experiment:
            ax.errorbar(xs, ys, yerr=es, label=metric, capsize=2)
    ax.set_title(experiment)
    ax.set_xlabel("fraction of known states" if experiment.startswith("nn") else "aggregate states")
    ax.set_ylabel("mean absolute error")
    ax.legend()
fig.tight_layout()
out = os.path.splitext(path)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"#
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: ExperimentKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk(kind);
        cfg.num_mdps = 2;
        cfg.states = 6;
        cfg.actions = 2;
        cfg.runs_per_mdp = 3;
        cfg.metrics = ["bisim-rel", "bisim", "dstar", "avf:5"].iter().map(|s| s.parse().unwrap()).collect();
        if kind == ExperimentKind::AggVi {
            cfg.cluster_counts = vec![1, 3, 6];
        }
        cfg
    }

    #[test]
    fn spec_strings_roundtrip() {
        for s in ["bisim", "lax-rel", "avf:50", "pibisim:uniform", "dpi:optimal", "dforall"] {
            assert_eq!(s.parse::<MetricSpec>().unwrap().to_string(), s);
        }
        assert_eq!("pibisim".parse::<MetricSpec>().unwrap().to_string(), "pibisim:optimal");
        assert!("bisim:3".parse::<MetricSpec>().is_err());
        assert!("avf:0".parse::<MetricSpec>().is_err());
        assert!("dpi:greedy".parse::<MetricSpec>().is_err());
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = ExperimentConfig::from_json(r#"{"num_mdps": 3, "states": 20}"#, Some(ExperimentKind::AggVi)).unwrap();
        assert_eq!(cfg.num_mdps, 3);
        assert_eq!(cfg.cluster_counts, vec![1, 5, 10, 15, 20]);
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json(), None).unwrap(), cfg);
        assert!(ExperimentConfig::from_json(r#"{"experiment": "nn_q"}"#, Some(ExperimentKind::NnV)).is_err());
        assert!(ExperimentConfig::from_json(r#"{"fractions": [0.0]}"#, Some(ExperimentKind::NnV)).is_err());
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#, Some(ExperimentKind::NnV)).is_err());
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"cluster_counts": [51]}"#, Some(ExperimentKind::AggVi)),
            Err(Error::KOutOfRange { .. })
        ));
    }

    #[test]
    fn full_fraction_rows_are_zero() {
        let mut cfg = tiny(ExperimentKind::NnV);
        cfg.fractions = vec![0.5, 1.0];
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.rows.len(), 8);
        for row in &r.rows {
            assert_eq!(row.n, 6);
            assert!(row.mean_error >= 0.0);
            if row.parameter == 1.0 {
                assert_eq!(row.mean_error, 0.0);
            }
        }
    }

    #[test]
    fn aggregation_rows_and_csv_roundtrip() {
        let r = run_experiment(&tiny(ExperimentKind::AggVi)).unwrap();
        for row in r.rows.iter().filter(|row| row.parameter == 6.0) {
            assert!(row.mean_error <= 10.0 * r.config.tol, "{row:?}");
        }
        let text = result_to_csv(&r);
        assert!(text.starts_with(RESULT_HEADER));
        assert_eq!(parse_result_csv(&text).unwrap(), r.rows);
    }

    #[test]
    fn deterministic_across_pools() {
        let cfg = tiny(ExperimentKind::NnQ);
        let a = result_to_csv(&run_experiment(&cfg).unwrap());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| result_to_csv(&run_experiment(&cfg).unwrap()));
        assert_eq!(a, b);
    }

    #[test]
    fn grid_csv_marks_walls() {
        let g = GridArtifact { name: "x".into(), cells: vec![vec![None, Some(1.5)]] };
        assert_eq!(grid_to_csv(&g), "row,0,1\n0,#,1.5\n");
        assert_eq!(grid_path(Path::new("out/r.csv"), "lax.distance"), Path::new("out/r.lax.distance.csv"));
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_and_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_and_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}

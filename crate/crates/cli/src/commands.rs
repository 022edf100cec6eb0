use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mdp_metrics::analysis::{dominance_check, lipschitz_audit};
use mdp_metrics::experiments::{
    parse_result_csv, plot_script, run_experiment, write_result, ExperimentConfig, ExperimentKind,
};
use mdp_metrics::io::{
    load_mdp, metric_to_bytes, metric_to_csv, mdp_to_json, policy_from_json, value_functions_to_csv, write_atomic,
};
use mdp_metrics::mdp::{build_gridworld, generate_garnet_with_discount, GridSpec};
use mdp_metrics::metrics::{
    avf_metric, bisimulation_metric, bisimulation_partition, delta_forall_metric_bruteforce, delta_pi_metric,
    delta_star_metric, identity_metric, lax_bisimulation_metric, lax_bisimulation_partition,
    partition_metric_of_kind, pi_bisimulation_metric, pi_bisimulation_partition, trivial_metric,
    DEFAULT_PARTITION_EPS,
};
use mdp_metrics::rng::derive_seed;
use mdp_metrics::solvers::{evaluate_policy_exact, greedy_policy, policy_evaluation, value_iteration};
use mdp_metrics::{Error, FiniteMdp, MetricKind, Policy, Result, StateMetric, ValueFunctions};
use ndarray::Axis;
use serde_json::{json, Value};

use crate::{Cli, Command, MetricParams};

pub fn run(cli: Cli) -> Result<()> {
    let workers = cli.workers;
    match cli.command {
        Command::Garnet { states, actions, seed, gamma, output } => {
            expect_extension(&output, &["json"])?;
            echo(
                &json!({ "command": "garnet", "states": states, "actions": actions, "seed": seed,
                         "gamma": gamma, "output": output, "workers": workers }),
                Some(&output),
            )?;
            let mdp = generate_garnet_with_discount(states, actions, gamma, seed)?;
            write_atomic(&output, mdp_to_json(&mdp).as_bytes())
        }
        Command::Gridworld { layout, gamma, output } => {
            expect_extension(&output, &["json"])?;
            let text = fs::read_to_string(&layout)?;
            let world = build_gridworld(&GridSpec::from_text(&text, gamma)?)?;
            for w in &world.warnings {
                eprintln!("warning: {w}");
            }
            echo(
                &json!({ "command": "gridworld", "layout": layout, "gamma": gamma, "output": output,
                         "rows": world.rows(), "cols": world.cols(), "states": world.mdp.num_states(),
                         "cells": world.cells, "workers": workers }),
                Some(&output),
            )?;
            write_atomic(&output, mdp_to_json(&world.mdp).as_bytes())
        }
        Command::Solve { mdp, policy, tol, output } => {
            let ext = expect_extension(&output, &["csv", "json"])?;
            let model = load_mdp(&mdp)?;
            echo(
                &json!({ "command": "solve", "mdp": mdp, "policy": policy, "tol": tol, "output": output,
                         "workers": workers }),
                Some(&output),
            )?;
            let vf = match policy.as_deref() {
                None => value_iteration(&model, tol)?,
                Some(p) => policy_evaluation(&model, &resolve_policy(&model, p, tol)?, tol)?,
            };
            let bytes = match ext {
                "csv" => value_functions_to_csv(&vf),
                _ => value_functions_json(&vf).to_string(),
            };
            write_atomic(&output, bytes.as_bytes())
        }
        Command::Metric { mdp, kind, params, output } => {
            let ext = expect_extension(&output, &["csv", "json", "bin"])?;
            let kind: MetricKind = kind.parse()?;
            let model = load_mdp(&mdp)?;
            let mut config = params_json(&params, kind);
            config["command"] = json!("metric");
            config["mdp"] = json!(mdp);
            config["output"] = json!(output);
            config["workers"] = json!(workers);
            echo(&config, Some(&output))?;
            let d = compute_metric(&model, kind, &params)?;
            let bytes = match ext {
                "csv" => metric_to_csv(&d).into_bytes(),
                "bin" => metric_to_bytes(&d),
                _ => metric_json(&d).to_string().into_bytes(),
            };
            write_atomic(&output, &bytes)
        }
        Command::Audit { mdp, lipschitz, dominance, params, output } => {
            let model = load_mdp(&mdp)?;
            let mut report = match (lipschitz, dominance) {
                (Some(spec), _) => audit_lipschitz(&model, &spec, &params)?,
                (None, Some(spec)) => audit_dominance(&model, &spec, &params)?,
                (None, None) => return Err(Error::InvalidArgument("give --lipschitz or --dominance".into())),
            };
            let mut config = report["config"].take();
            config["mdp"] = json!(mdp);
            config["output"] = json!(output);
            config["workers"] = json!(workers);
            echo(&config, output.as_deref())?;
            let text = serde_json::to_string_pretty(&report["result"]).expect("json values serialize");
            println!("{text}");
            match output {
                Some(path) => write_atomic(&path, text.as_bytes()),
                None => Ok(()),
            }
        }
        Command::Experiment { kind, config, full_scale, output } => {
            expect_extension(&output, &["csv"])?;
            let kind: ExperimentKind = kind.parse()?;
            let cfg = match (config, full_scale) {
                (Some(_), true) => {
                    return Err(Error::InvalidArgument("--config and --full-scale are exclusive".into()))
                }
                (Some(path), false) => {
                    let text = fs::read_to_string(&path)?;
                    ExperimentConfig::from_json(&text, Some(kind))?
                }
                (None, true) => ExperimentConfig::full_scale(kind),
                (None, false) => ExperimentConfig::desk(kind),
            };
            cfg.validate()?;
            echo(
                &json!({ "command": "experiment", "config": cfg, "derived_seeds": derived_seeds(&cfg),
                         "output": output, "workers": workers }),
                Some(&output),
            )?;
            let result = run_experiment(&cfg)?;
            for path in write_result(&output, &result)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Report { csv, emit_plot_script } => {
            let text = fs::read_to_string(&csv)?;
            let rows = parse_result_csv(&text)?;
            let script = emit_plot_script.map(|p| p.unwrap_or_else(|| sibling(&csv, "plot.py")));
            echo(&json!({ "command": "report", "csv": csv, "plot_script": script }), None)?;
            print!("{}", summary_table(&rows));
            if let Some(path) = script {
                let name = csv.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                write_atomic(&path, plot_script(&name).as_bytes())?;
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn expect_extension<'a>(path: &Path, allowed: &[&'a str]) -> Result<&'a str> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    allowed.iter().copied().find(|a| ext.as_deref() == Some(*a)).ok_or_else(|| {
        Error::InvalidArgument(format!("{}: output must end in .{}", path.display(), allowed.join(" or .")))
    })
}

/// `<dir>/<stem>.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Prints the resolved configuration to stderr and stores it next to `output`.
fn echo(config: &Value, output: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(config).expect("json values serialize");
    eprintln!("{text}");
    if let Some(out) = output {
        write_atomic(&sibling(out, "config.json"), text.as_bytes())?;
    }
    Ok(())
}

fn derived_seeds(cfg: &ExperimentConfig) -> Value {
    let mdps = if cfg.experiment == ExperimentKind::FourRooms { 1 } else { cfg.num_mdps };
    let per_mdp = |tag: &str| -> Vec<u64> { (0..mdps as u64).map(|i| derive_seed(cfg.master_seed, tag, &[i])).collect() };
    let runs: Vec<Vec<u64>> = (0..mdps as u64)
        .map(|i| (0..cfg.runs_per_mdp as u64).map(|j| derive_seed(cfg.master_seed, "run", &[i, j])).collect())
        .collect();
    let mut seeds = json!({ "avf": per_mdp("avf"), "run": runs });
    if cfg.experiment != ExperimentKind::FourRooms {
        seeds["mdp"] = json!(per_mdp("mdp"));
    }
    seeds
}

/// A policy file, `uniform`, or `optimal` (greedy in `Q*` solved to `tol`).
fn resolve_policy(mdp: &FiniteMdp, arg: &str, tol: f64) -> Result<Policy> {
    let pi = match arg {
        "uniform" => Policy::uniform(mdp.num_states(), mdp.num_actions()),
        "optimal" => greedy_policy(&value_iteration(mdp, tol)?),
        path => policy_from_json(&fs::read_to_string(path)?, mdp.num_actions(), path)?,
    };
    mdp.check_policy(&pi)?;
    Ok(pi)
}

fn uses_policy(kind: MetricKind) -> bool {
    matches!(kind, MetricKind::PiBisim | MetricKind::PiBisimDiscrete | MetricKind::DeltaPi)
}

fn params_json(p: &MetricParams, kind: MetricKind) -> Value {
    let mut v = json!({ "kind": kind.name(), "tol": p.tol });
    if uses_policy(kind) {
        v["policy"] = json!(p.policy.as_deref().unwrap_or("optimal"));
    }
    match kind {
        MetricKind::Avf => {
            v["n"] = json!(p.n);
            v["seed"] = json!(p.seed);
        }
        MetricKind::DeltaForall => v["cap"] = json!(p.cap),
        _ => {}
    }
    v
}

fn compute_metric(mdp: &FiniteMdp, kind: MetricKind, p: &MetricParams) -> Result<StateMetric> {
    let n = mdp.num_states();
    let eps = DEFAULT_PARTITION_EPS;
    let pi = || resolve_policy(mdp, p.policy.as_deref().unwrap_or("optimal"), p.tol);
    Ok(match kind {
        MetricKind::Identity => identity_metric(n),
        MetricKind::Trivial => trivial_metric(n),
        MetricKind::BisimDiscrete => partition_metric_of_kind(&bisimulation_partition(mdp, eps), kind),
        MetricKind::LaxDiscrete => partition_metric_of_kind(&lax_bisimulation_partition(mdp, eps), kind),
        MetricKind::PiBisimDiscrete => partition_metric_of_kind(&pi_bisimulation_partition(mdp, &pi()?, eps)?, kind),
        MetricKind::Bisim => bisimulation_metric(mdp, p.tol)?,
        MetricKind::Lax => lax_bisimulation_metric(mdp, p.tol)?,
        MetricKind::PiBisim => pi_bisimulation_metric(mdp, &pi()?, p.tol)?,
        MetricKind::DeltaStar => delta_star_metric(mdp, p.tol)?,
        MetricKind::DeltaPi => delta_pi_metric(mdp, &pi()?, p.tol)?,
        MetricKind::DeltaForall => delta_forall_metric_bruteforce(mdp, p.cap)?,
        MetricKind::Avf => avf_metric(mdp, p.n, p.seed)?,
        MetricKind::Aggregation => {
            return Err(Error::InvalidArgument("aggregation metrics need a partition, not an MDP".into()))
        }
    })
}

fn audit_lipschitz(mdp: &FiniteMdp, spec: &str, p: &MetricParams) -> Result<Value> {
    let (f, metric) = spec
        .split_once(':')
        .ok_or_else(|| Error::InvalidArgument(format!("expected <f>:<metric>, got {spec:?}")))?;
    let kind: MetricKind = metric.parse()?;
    let vf = match f {
        "vstar" | "qstar" => value_iteration(mdp, p.tol)?,
        "vpi" | "qpi" => evaluate_policy_exact(mdp, &resolve_policy(mdp, p.policy.as_deref().unwrap_or("optimal"), p.tol)?)?,
        other => {
            return Err(Error::InvalidArgument(format!("unknown function {other:?}; use vstar, qstar, vpi or qpi")))
        }
    };
    let d = compute_metric(mdp, kind, p)?;
    let values = if f.starts_with('v') { vf.v.clone().insert_axis(Axis(1)) } else { vf.q.clone() };
    let r = lipschitz_audit(values.view(), &d, p.tol)?;
    let mut config = params_json(p, kind);
    config["command"] = json!("audit");
    config["lipschitz"] = json!(spec);
    if f.ends_with("pi") {
        config["policy"] = json!(p.policy.as_deref().unwrap_or("optimal"));
    }
    Ok(json!({
        "config": config,
        "result": { "audit": "lipschitz", "function": f, "metric": kind.name(), "best_k": r.best_k,
                    "witness_pair": r.witness_pair, "kernel_violations": r.kernel_violations },
    }))
}

fn audit_dominance(mdp: &FiniteMdp, spec: &str, p: &MetricParams) -> Result<Value> {
    let bad = || Error::InvalidArgument(format!("expected <d1>:<d2>:<alpha>, got {spec:?}"));
    let mut parts = spec.split(':');
    let (a, b, alpha) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), Some(alpha), None) => (a, b, alpha),
        _ => return Err(bad()),
    };
    let (k1, k2): (MetricKind, MetricKind) = (a.parse()?, b.parse()?);
    let scale = match alpha {
        "vmax" => mdp.r_max() / (1.0 - mdp.gamma()),
        x => x.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0).ok_or_else(bad)?,
    };
    let d1 = compute_metric(mdp, k1, p)?;
    let d2 = compute_metric(mdp, k2, p)?;
    let r = dominance_check(&d1, &d2, scale, p.tol)?;
    let mut config = json!({ "command": "audit", "dominance": spec, "tol": p.tol });
    for k in [k1, k2] {
        if let Value::Object(extra) = params_json(p, k) {
            for (key, v) in extra {
                if key != "kind" {
                    config[key] = v;
                }
            }
        }
    }
    Ok(json!({
        "config": config,
        "result": { "audit": "dominance", "d1": k1.name(), "d2": k2.name(), "alpha": scale, "holds": r.holds,
                    "max_violation": r.max_violation, "witness": r.witness },
    }))
}

fn value_functions_json(vf: &ValueFunctions) -> Value {
    let q: Vec<Vec<f64>> = vf.q.rows().into_iter().map(|r| r.to_vec()).collect();
    json!({ "v": vf.v.to_vec(), "q": q, "residual": vf.residual, "iterations": vf.iterations })
}

fn metric_json(d: &StateMetric) -> Value {
    let rows: Vec<Vec<f64>> = d.d.rows().into_iter().map(|r| r.to_vec()).collect();
    json!({ "kind": d.kind.name(), "num_states": d.num_states(), "d": rows, "meta": d.meta })
}

fn summary_table(rows: &[mdp_metrics::experiments::ResultRow]) -> String {
    let header = ["experiment", "metric", "parameter", "mean_error", "std_error", "n"];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.experiment.to_string(),
                r.metric.to_string(),
                format!("{}", r.parameter),
                format!("{:.6e}", r.mean_error),
                format!("{:.6e}", r.std_error),
                r.n.to_string(),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[&str]| {
        for (i, (c, w)) in row.iter().zip(widths).enumerate() {
            let sep = if i + 1 == row.len() { "\n" } else { "  " };
            write!(out, "{c:<w$}{sep}").unwrap();
        }
    };
    line(&mut out, &header);
    for row in &cells {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "mdpmetrics", version, about = "Behavioral metrics on finite MDPs")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random Garnet MDP.
    Garnet {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = mdp_metrics::mdp::DEFAULT_GARNET_GAMMA)]
        gamma: f64,
        /// Output MDP (.json).
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Build a deterministic gridworld from a text layout (`#` wall, `.` floor, `G` goal).
    Gridworld {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Solve for V* and Q*, or for V^pi and Q^pi when a policy is given.
    Solve {
        mdp: PathBuf,
        /// Policy file, `uniform` or `optimal`.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long, default_value_t = mdp_metrics::solvers::DEFAULT_TOL)]
        tol: f64,
        /// Output value functions (.csv or .json).
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compute a state metric.
    Metric {
        mdp: PathBuf,
        #[arg(long)]
        kind: String,
        #[command(flatten)]
        params: MetricParams,
        /// Output matrix (.csv, .json or .bin).
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Audit Lipschitz continuity (`<f>:<metric>`) or metric dominance (`<d1>:<d2>:<alpha>`).
    Audit {
        mdp: PathBuf,
        /// `f` is one of vstar, qstar, vpi, qpi.
        #[arg(long, conflicts_with = "dominance", required_unless_present = "dominance")]
        lipschitz: Option<String>,
        /// `alpha` is a number or `vmax` for R_max / (1 - gamma).
        #[arg(long)]
        dominance: Option<String>,
        #[command(flatten)]
        params: MetricParams,
        /// Also write the report (.json).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run an experiment and write its result CSV (plus grids for fourrooms).
    Experiment {
        /// nn-v, nn-q, agg-vi or fourrooms.
        kind: String,
        /// JSON config; missing fields take the desk-scale defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start from the full-scale defaults (100 Garnet(200,5) MDPs, 50 runs each).
        #[arg(long)]
        full_scale: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Summarize a result CSV.
    Report {
        csv: PathBuf,
        /// Write a plotting script, by default next to the CSV as `<stem>.plot.py`.
        #[arg(long, num_args = 0..=1)]
        emit_plot_script: Option<Option<PathBuf>>,
    },
}

#[derive(Debug, Args)]
struct MetricParams {
    /// Policy for pi-parameterized kinds: a policy file, `uniform` or `optimal`.
    #[arg(long)]
    policy: Option<String>,
    /// AVF policy samples.
    #[arg(long, default_value_t = mdp_metrics::experiments::DEFAULT_AVF_SAMPLES)]
    n: usize,
    /// AVF sampling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = mdp_metrics::solvers::DEFAULT_TOL)]
    tol: f64,
    /// Largest deterministic-policy enumeration for dforall.
    #[arg(long, default_value_t = mdp_metrics::solvers::DEFAULT_ENUMERATION_CAP)]
    cap: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

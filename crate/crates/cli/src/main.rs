//! Command-line front end for building and evaluating ordered hyperparameter
//! lists.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::{GlobalArgs, RunConfig};

/// How a command failed. Each kind maps to its own exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or arguments (exit 1).
    Usage(String),
    /// Unreadable, malformed or inconsistent input data (exit 2).
    Data(anyhow::Error),
    /// A bug (exit 3).
    Internal(anyhow::Error),
}

impl From<hplist::Error> for Failure {
    fn from(e: hplist::Error) -> Self {
        Failure::Data(e.into())
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "hplist", version, about = "Build and evaluate ordered NAdamW hyperparameter lists")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct MatrixInputs {
    /// Records file (default: <out>/records.csv).
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Points file (default: <out>/points.csv).
    #[arg(long)]
    pub points: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw candidate points from the search space.
    Sample {
        #[arg(long)]
        count: Option<usize>,
        /// Search-space file; the bundled broad space when omitted.
        #[arg(long)]
        space: Option<PathBuf>,
    },
    /// Train every point on every workload, skipping cells already recorded.
    Run {
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long)]
        records: Option<PathBuf>,
        /// Comma-separated workload ids, or "builtin".
        #[arg(long)]
        workloads: Option<String>,
        /// Stop after this many new trials.
        #[arg(long)]
        max_trials: Option<usize>,
    },
    /// Set workload targets from a sample of points.
    Calibrate {
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long)]
        workloads: Option<String>,
        #[arg(long, default_value_t = hplist::workbench::DEFAULT_QUANTILE)]
        quantile: f64,
    },
    /// Greedily build an ordered list.
    Build {
        #[command(flatten)]
        inputs: MatrixInputs,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Search all subsets of size K for the cheapest one.
    Exhaustive {
        #[command(flatten)]
        inputs: MatrixInputs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = hplist::listbuild::DEFAULT_ENUMERATION_CAP)]
        cap: u128,
    },
    /// Leave-one-workload-out validation.
    Loo {
        #[command(flatten)]
        inputs: MatrixInputs,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Held-out successes across a grid of penalty factors.
    Ablate {
        #[command(flatten)]
        inputs: MatrixInputs,
        #[arg(long)]
        k: Option<usize>,
        /// lo:hi:count, evenly spaced and inclusive.
        #[arg(long, default_value = "1.0:2.0:10")]
        tau_grid: String,
    },
    /// Held-out successes as the list grows.
    SizeSweep {
        #[command(flatten)]
        inputs: MatrixInputs,
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Random-search tuning curves per workload, compared with held-out lists.
    Curves {
        #[command(flatten)]
        inputs: MatrixInputs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 15)]
        budget: usize,
        #[arg(long, default_value_t = hplist::evalkit::DEFAULT_CONFIDENCE)]
        confidence: f64,
    },
    /// Evaluate a list on workloads with repeated runs.
    Eval {
        /// List CSV as written by `build`, or "bundled".
        #[arg(long, default_value = "bundled")]
        list: String,
        #[arg(long)]
        workloads: Option<String>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Per-workload success counts and how many transfer to other workloads.
    TransferCounts {
        #[command(flatten)]
        inputs: MatrixInputs,
    },
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let mut cfg = RunConfig::resolve(&cli.global)?;
    let mut select = |w: &Option<String>| {
        if let Some(w) = w {
            cfg.workloads = config::WorkloadSelection::Named(w.clone());
        }
    };
    match &cli.command {
        Command::Run { workloads, .. } | Command::Calibrate { workloads, .. } | Command::Eval { workloads, .. } => {
            select(workloads)
        }
        _ => {}
    }
    match &cli.command {
        Command::Build { k: Some(k), .. }
        | Command::Exhaustive { k: Some(k), .. }
        | Command::Loo { k: Some(k), .. }
        | Command::Ablate { k: Some(k), .. }
        | Command::Curves { k: Some(k), .. } => cfg.k = *k,
        Command::Sample { count: Some(n), .. } => cfg.sample_count = *n,
        _ => {}
    }
    match cli.command {
        Command::Sample { count, space } => commands::sample(&cfg, count, space.as_deref()),
        Command::Run { points, records, max_trials, .. } => commands::run(&cfg, points, records, max_trials),
        Command::Calibrate { points, quantile, .. } => commands::calibrate(&cfg, points, quantile),
        Command::Build { inputs, k } => commands::build(&cfg, &inputs, k),
        Command::Exhaustive { inputs, k, cap } => commands::exhaustive(&cfg, &inputs, k, cap),
        Command::Loo { inputs, k } => commands::loo(&cfg, &inputs, k),
        Command::Ablate { inputs, k, tau_grid } => commands::ablate(&cfg, &inputs, k, &tau_grid),
        Command::SizeSweep { inputs, k_max } => commands::size_sweep(&cfg, &inputs, k_max),
        Command::Curves { inputs, k, budget, confidence } => commands::curves(&cfg, &inputs, k, budget, confidence),
        Command::Eval { list, repeats, .. } => commands::eval(&cfg, &list, repeats),
        Command::TransferCounts { inputs } => commands::transfer_counts(&cfg, &inputs),
    }
}

/// Joins an error chain, skipping causes the previous message already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let outcome = std::panic::catch_unwind(|| dispatch(cli))
        .unwrap_or_else(|_| Err(Failure::Internal(anyhow::anyhow!("internal error"))));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Data(e) => eprintln!("error: {}", describe(e)),
                Failure::Internal(e) => eprintln!("internal error: {}", describe(e)),
            }
            ExitCode::from(f.exit_code())
        }
    }
}

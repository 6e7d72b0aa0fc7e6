//! `mf2a`: simulate, fit, summarize, evaluate and report.

mod commands;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "mf2a", version, about = "Dynamic mixtures of factor analysers with a telescoping sampler")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and its ground truth.
    Simulate(SimulateArgs),
    /// Run one or more chains and write traces plus a manifest.
    Fit(FitArgs),
    /// Identify cluster-specific summaries from a fitted run.
    Summarize(SummarizeArgs),
    /// Score a summary against known labels.
    Evaluate(EvaluateArgs),
    /// Write long-format tables for plotting.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Design: 1 (three clusters, four factors each) or 2 (six clusters, p=20, T=700).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub study: u8,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long, default_value_t = 100)]
    pub t: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// key=value file; keys are hyperparameter names plus seed, k_max_cap, record_alloc_every.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overridden by MF2A_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total sweeps per chain [default: 50000].
    #[arg(long)]
    pub iters: Option<u64>,
    /// Fraction of sweeps discarded as burn-in [default: 0.2].
    #[arg(long)]
    pub burnin_frac: Option<f64>,
    #[arg(long)]
    pub thin: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    pub run: PathBuf,
    /// Dataset to verify against the manifest digest [default: path in the manifest].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Seed for the relabeling k-means [default: the fit seed].
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// summary.json or the directory holding it.
    #[arg(long)]
    pub summary: PathBuf,
    /// truth.json from `simulate`, or a CSV with a `label` column.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// summary.json or the directory holding it.
    #[arg(long)]
    pub summary: PathBuf,
    /// Headed CSV whose first column gives one time value per observation.
    #[arg(long)]
    pub time_index: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Summarize(a) => commands::summarize(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Report(a) => commands::report(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

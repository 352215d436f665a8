mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Layout, Model};

/// Functional graphical models for multivariate functional data under
/// partial separability.
#[derive(Debug, Parser)]
#[command(name = "psfggm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset and its true graph.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Estimate the functional graph at one penalty level.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Overall penalty level.
        #[arg(long)]
        gamma: Option<f64>,
        /// Lasso share of the penalty in [0, 1].
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Sweep the penalty path and score it against a true graph.
    Roc {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Edge list of the true graph (as written by `simulate`).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Comma-separated mixing values.
        #[arg(long, value_parser = config::parse_list)]
        alphas: Option<Vec<f64>>,
        /// Number of penalty levels per path.
        #[arg(long)]
        n_gamma: Option<usize>,
        /// Smallest penalty as a fraction of the largest.
        #[arg(long)]
        min_ratio: Option<f64>,
        /// Simulate this many replications instead of reading data.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Split-sample variance explained and cross-basis score correlations.
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        input: InputArgs,
        /// Largest truncation level in the split report.
        #[arg(long)]
        l_max: Option<usize>,
        /// Number of random half splits.
        #[arg(long)]
        reps: Option<usize>,
        /// Bases in the block correlation matrices.
        #[arg(long)]
        blocks: Option<usize>,
    },
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// TOML configuration file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all logical cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SimArgs {
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of basis functions used to generate curves.
    #[arg(long)]
    pub n_basis: Option<usize>,
    /// Number of grid points.
    #[arg(long)]
    pub n_points: Option<usize>,
    /// Edge density of the true graph.
    #[arg(long)]
    pub pi: Option<f64>,
    /// Share of edges common to every basis.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Covariance model: ps or non-ps.
    #[arg(long)]
    pub model: Option<Model>,
    #[arg(long)]
    pub noise_fraction: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct InputArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// CSV layout: wide or long.
    #[arg(long)]
    pub layout: Option<Layout>,
    /// Fraction of pooled variance used to choose the number of bases.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SolverArgs {
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub eps_abs: Option<f64>,
    #[arg(long)]
    pub eps_rel: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Residual balancing of the ADMM step size (true or false).
    #[arg(long)]
    pub adaptive_rho: Option<bool>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { common, sim } => commands::simulate(&common, &sim),
        Command::Estimate {
            common,
            input,
            solver,
            gamma,
            alpha,
        } => commands::estimate(&common, &input, &solver, gamma, alpha),
        Command::Roc {
            common,
            input,
            solver,
            sim,
            truth,
            alphas,
            n_gamma,
            min_ratio,
            replications,
        } => commands::roc(
            &common,
            &input,
            &solver,
            &sim,
            &commands::RocArgs {
                truth,
                alphas,
                n_gamma,
                min_ratio,
                replications,
            },
        ),
        Command::Diagnose {
            common,
            input,
            l_max,
            reps,
            blocks,
        } => commands::diagnose(&common, &input, l_max, reps, blocks),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `kspv` command-line harness: data generation, dictionary sampling,
//! exact/approximate diagnostics, pruning and prediction-error maps.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{Inputs, RunOptions};
use crate::config::{ExperimentConfig, FlagOverrides};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "kspv", version, about = "Kernel subspace invariance diagnostics and pruning")]
struct Cli {
    /// JSON configuration file; `KSPV_*` environment variables and flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for data generation and derived streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// After pruning, recompute the exact δ of the retained subspace.
    #[arg(long, global = true)]
    audit_exact: bool,
    /// Allow N × N kernel matrices above `exact_n_cap`.
    #[arg(long, global = true)]
    force_exact: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Default)]
struct InputArgs {
    /// Snapshot CSV (default: `<out>/data.csv`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dictionary coefficient CSV (default: `<out>/dictionary.csv`).
    #[arg(long)]
    dictionary: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample snapshot pairs (x, T x) uniformly from the domain box.
    Generate,
    /// Sample dictionary centers from the snapshots.
    Dictionary {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Orthonormality residuals of the approximate bases for each landmark count.
    ResidualSweep(InputArgs),
    /// Exact against approximate principal angles for each landmark count.
    CompareAngles(InputArgs),
    /// Prune the dictionary to an approximately invariant subspace.
    Prune(InputArgs),
    /// Eigenfunction prediction-error map, optionally for a pruned dictionary.
    PredictError {
        #[command(flatten)]
        inputs: InputArgs,
        /// Pruned coefficient CSV to compare against the base dictionary.
        #[arg(long)]
        pruned: Option<PathBuf>,
    },
}

fn inputs(args: InputArgs) -> Inputs {
    Inputs {
        data: args.data,
        dictionary: args.dictionary,
        pruned: None,
    }
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let flags = FlagOverrides {
        seed: cli.seed,
        out: cli.out.clone(),
    };
    let config = ExperimentConfig::load(cli.config.as_deref(), std::env::vars(), &flags)?;
    let opts = RunOptions {
        audit_exact: cli.audit_exact,
        force_exact: cli.force_exact,
    };
    match cli.command {
        Command::Generate => commands::generate(&config),
        Command::Dictionary { data } => commands::dictionary(
            &config,
            &Inputs {
                data,
                ..Inputs::default()
            },
        ),
        Command::ResidualSweep(args) => commands::residual_sweep(&config, &inputs(args), &opts),
        Command::CompareAngles(args) => commands::compare_angles(&config, &inputs(args), &opts),
        Command::Prune(args) => commands::prune(&config, &inputs(args), &opts),
        Command::PredictError { inputs: args, pruned } => {
            commands::predict_error(&config, &Inputs { pruned, ..inputs(args) })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(manifest) => {
            eprintln!("wrote {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("kspv: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

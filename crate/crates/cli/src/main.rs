use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use netspan_cli::runner::{cmd_design, cmd_run, cmd_sweep, cmd_verify, Invocation};

/// Distributed adaptation under subspace constraints: design and verify
/// combination matrices, run Monte Carlo ensembles, and sweep step-sizes.
#[derive(Parser)]
#[command(name = "netspan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment configuration file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (overrides `[output].dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo runs (default: all cores).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Master seed (overrides `[run].master_seed`).
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Design a combination matrix for the configured topology and subspace.
    Design {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Verify a combination matrix file against the configured subspace.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Matrix file (overrides `[combiner].path`).
        #[arg(long, value_name = "PATH")]
        matrix: Option<PathBuf>,
    },
    /// Execute the configured Monte Carlo ensemble and write metric CSVs.
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep the configured step-size list and fit the scaling slope.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn invocation(common: CommonArgs, matrix: Option<PathBuf>) -> Invocation {
    Invocation {
        config: common.config,
        out_dir: common.out,
        jobs: common.jobs,
        seed: common.seed,
        matrix,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Design { common } => cmd_design(&invocation(common, None)),
        Command::Verify { common, matrix } => cmd_verify(&invocation(common, matrix)),
        Command::Run { common } => cmd_run(&invocation(common, None)),
        Command::Sweep { common } => cmd_sweep(&invocation(common, None)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

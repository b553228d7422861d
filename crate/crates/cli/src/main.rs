use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nonlocal_spde_cli::config::{load_config, Overrides};
use nonlocal_spde_cli::run::{dispatch, CliError, Command};

#[derive(Parser)]
#[command(name = "nlspde", version, about = "Simulate and check the non-local stochastic parabolic problem")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Principal Dirichlet eigenpair (and KL spectrum when noise is on).
    Eigen(Common),
    /// One sample path.
    Sim {
        #[command(flatten)]
        common: Common,
        /// Index of the path, which selects its random stream.
        #[arg(long, default_value_t = 0)]
        path: u64,
    },
    /// Monte Carlo ensemble with moment statistics.
    Ensemble(Common),
    /// Blow-up thresholds and time bounds.
    Bounds(Common),
    /// Falsification checks; exits nonzero if any fails.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `ensemble.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `ensemble.workers`.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<String>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (command, common, path) = match cli.command {
        Cmd::Eigen(c) => (Command::Eigen, c, 0),
        Cmd::Sim { common, path } => (Command::Sim, common, path),
        Cmd::Ensemble(c) => (Command::Ensemble, c, 0),
        Cmd::Bounds(c) => (Command::Bounds, c, 0),
        Cmd::Verify(c) => (Command::Verify, c, 0),
    };
    let overrides = Overrides { seed: common.seed, workers: common.workers, out: common.out };
    let cfg = load_config(&common.config, &overrides)?;
    let out = dispatch(command, &cfg, path)?;
    println!("{}", out.summary.trim_end());
    println!("output: {}", out.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let CliError::ChecksFailed(_, table) = &e {
                print!("{table}");
            }
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

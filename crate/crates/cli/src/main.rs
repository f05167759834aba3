use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hsgp_design_cli::{cmd_fidelity, cmd_run, cmd_validate_bounds, Common};

#[derive(Parser)]
#[command(name = "hsgp-design", version, about = "Sequential GP design with a reduced-rank IMSE acquisition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (TOML), or a manifest written by an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl From<CommonArgs> for Common {
    fn from(a: CommonArgs) -> Self {
        Common {
            config: a.config,
            out: a.out,
            seed: a.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compare exact and reduced-rank acquisition over a candidate grid.
    Fidelity {
        #[command(flatten)]
        common: CommonArgs,
        /// Overrides the configured threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Check measured kernel approximation errors against the bounds.
    ValidateBounds {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a replicate experiment suite.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Replicates run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fidelity { common, threshold } => cmd_fidelity(&common.into(), threshold),
        Command::ValidateBounds { common } => cmd_validate_bounds(&common.into()),
        Command::Run { common, jobs } => cmd_run(&common.into(), jobs),
    };
    let code = match result {
        Ok(outcome) => {
            println!("{}", outcome.message());
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

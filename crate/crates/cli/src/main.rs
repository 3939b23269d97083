use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dynbc::io::{cli_check, cli_run, cli_sweep, Overrides};

/// Bulk-surface Cahn–Hilliard simulator with dynamic boundary conditions.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory, overriding `[output] dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed of the initial quench, overriding `[scheme] seed`.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Only print errors.
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            out_dir: self.out.clone(),
            seed: self.seed,
            quiet: self.quiet,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write its time series and snapshots.
    Run(Common),
    /// Run every point of the `[sweep]` axes and write summary.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Maximum number of points running at once.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Validate parameters, Onsager PSD and conservation compatibility.
    Check(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut err = std::io::stderr();
    let code = match &cli.command {
        Command::Run(c) => cli_run(&c.config, &c.overrides(), &mut err),
        Command::Sweep { common, jobs } => cli_sweep(&common.config, &common.overrides(), *jobs, &mut err),
        Command::Check(c) => cli_check(&c.config, &c.overrides(), &mut std::io::stdout()),
    };
    ExitCode::from(code as u8)
}

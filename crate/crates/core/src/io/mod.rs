//! Configuration files, output formats and the command-line operations.

pub mod config;
pub mod driver;
pub mod output;

pub use config::{GridSpec, RunConfig, SweepPoint, SweepValue};
pub use driver::{check_config, cli_check, cli_run, cli_sweep, exit_code, run_to_dir, CheckOutcome, Overrides, RunSummary};
pub use output::{FileSink, TIMESERIES_HEADER};

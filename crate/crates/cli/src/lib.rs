//! Front end for the `qagg` binary: input parsing, commands and run
//! manifests.

pub mod commands;
pub mod error;
pub mod input;
pub mod manifest;

pub use commands::{
    aggregate, cmd_aggregate, cmd_bench, cmd_validate, load_config, parse_config, reports_csv,
    run_bench, AggregateArgs, AggregateOutput, BenchArgs, Sweep, ValidateArgs,
};
pub use error::{CliError, CliResult};
pub use manifest::{OutputWriter, RunManifest};

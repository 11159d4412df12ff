//! Batch front end for `stwave`: strict TOML configurations, command
//! dispatch and manifest-first output directories.

pub mod config;
pub mod error;
pub mod run;

pub use config::{parse_config, parse_seed_list, Command, ExperimentConfig};
pub use error::CliError;
pub use run::{run, Manifest};

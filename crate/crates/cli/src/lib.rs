//! Configuration parsing, command dispatch and CSV/SVG output for the
//! `slmod` binary.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, Command, ConfigError, Options, RunConfig};
pub use run::{run, write_artifacts, Artifacts, RunError};

//! Library surface of the CLI: configuration, orchestration and reports.
//! The binary in `main.rs` is a thin argument-parsing wrapper, so the whole
//! command path is testable in-process.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{run, MuOverride, RunError, RunOverrides};
pub use config::{load_config, parse_config, RunConfig};
pub use report::ExperimentReport;

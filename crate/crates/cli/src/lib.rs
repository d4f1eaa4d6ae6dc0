//! Configuration and orchestration for the `rqj` command-line runner.

pub mod config;
pub mod run;

pub use config::{ConfigError, Mode, RawConfig, RunConfig};
pub use run::{execute, RunOutcome};

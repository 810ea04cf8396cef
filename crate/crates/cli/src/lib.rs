//! Command-line front end for lyrics-informed singing voice separation.

pub mod commands;
pub mod config;
pub mod provenance;
pub mod report;

pub use commands::{run, Cli, Command};
pub use config::ExperimentConfig;
pub use provenance::RunRecord;

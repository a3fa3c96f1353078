//! Command-line driver for `myelin-core`: INI configuration, subcommands
//! and CSV reports.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{cmd_cable, cmd_cell, cmd_lambda, cmd_mesh_dump, cmd_verify, CliError, Context};
pub use config::{ConfigError, RunConfig};

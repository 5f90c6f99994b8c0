//! Command implementations behind the `phonation` binary.

pub mod commands;
pub mod config;

pub use commands::*;
pub use config::{RunConfig, RUN_CONFIG_FILE, SEED_ENV};

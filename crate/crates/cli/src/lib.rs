//! Command-line driver for the gap-traversal suite.

pub mod commands;
pub mod config;
pub mod plot;

pub use commands::run;
pub use config::RunConfig;

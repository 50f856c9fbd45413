//! Command-line front end: argument parsing, subcommands and the sweep driver.

pub mod args;
pub mod commands;
pub mod sweep;

pub use args::Cli;
pub use commands::run;

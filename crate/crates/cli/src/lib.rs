//! Configuration and subcommands of the `nlspde` command-line tool.

pub mod config;
pub mod run;

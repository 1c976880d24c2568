//! Config-driven runner behind the `pstat` binary.

pub mod config;
pub mod emit;
pub mod error;
pub mod run;
pub mod selftest;

pub use error::CliError;

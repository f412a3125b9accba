//! Experiment harness for the tkpen solvers: TOML experiment files, CSV and
//! SVG reports, exhaustive oracles for small problems, and the `tkpen` CLI.
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod plot;
pub mod report;

pub use error::{BenchError, Result};

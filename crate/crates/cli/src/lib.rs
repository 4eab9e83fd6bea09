#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Front end for the `deadtime` tool: config documents, the four
//! subcommands and their CSV/JSON artifacts.

pub mod artifact;
pub mod bench;
pub mod commands;
pub mod config;
pub mod error;

pub use artifact::{Artifact, Timing, Value};
pub use bench::{run_bench, BenchRecord, BenchReport};
pub use config::{BenchConfig, Format, McConfig, Range, RunConfig, SpectralConfig, Sweep};
pub use error::CliError;

pub const THREADS_ENV: &str = "DEADTIME_THREADS";

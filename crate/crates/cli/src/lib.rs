//! Command-line harness: config loading, data generation, solver runs,
//! gradient checks and phase benchmarks.

pub mod commands;
pub mod config;

pub use commands::{Overrides, EXIT_CONVERGED, EXIT_ERROR, EXIT_NOT_CONVERGED, WORKERS_ENV};
pub use config::{DatasetSource, GenSpec, RunConfig};

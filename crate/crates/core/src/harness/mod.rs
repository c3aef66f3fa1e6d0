//! Experiment harness: configuration, replication, aggregation and output,
//! plus the acceptance checks behind `mnlbandit verify`.

pub mod config;
pub mod output;
pub mod runner;
pub mod verify;

pub use config::{AlgoKind, ExperimentConfig};
pub use output::{emit_csv, format_csv, parse_csv, write_manifest, CsvRow, CSV_HEADER};
pub use runner::{run_experiment, run_experiment_sequential, AggregateResult, AlgoSeries, Trace};
#[cfg(feature = "parallel")]
pub use runner::run_experiment_parallel;

//! Monte Carlo harness around `aodlab-core`: configuration files, sweeps over
//! transmit power and slot count, timing tables, the bound curve and
//! training runs, written out as CSV (and optionally SVG).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;
pub mod plot;

pub use config::{Draw, ExperimentConfig, ExperimentKind, Method, SweepParam};
pub use experiments::{run, run_runtime, run_sweep, run_train, Outcome, SweepResult, SweepRow, TrainOutcome};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    /// Bad configuration or arguments.
    #[error("config error: {0}")]
    Config(String),
    /// Anything that goes wrong after the configuration was accepted.
    #[error("{0}")]
    Runtime(String),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Runtime(_) => 3,
        }
    }
}

impl From<aodlab_core::Error> for BenchError {
    fn from(e: aodlab_core::Error) -> Self {
        BenchError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Runtime(e.to_string())
    }
}

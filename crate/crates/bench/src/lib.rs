//! Experiment runner for the Lanczos trust-region solver: builds a problem from
//! an [`ExperimentSpec`], runs LTR and/or the dense RTR oracle, and emits
//! per-iteration CSV or a JSON report.

use std::path::PathBuf;

pub mod report;
pub mod runner;
pub mod spec;

pub use report::{emit, read_csv, read_json, CsvRow, ExperimentReport, Format, CSV_HEADER};
pub use runner::{run, run_many};
pub use spec::{parse_ell, parse_specs, read_specs, ExperimentSpec, Method, Output, Overrides, ProblemSpec};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{0}")]
    Usage(String),

    #[error("spec parse error at line {line}, column {column}: {message}")]
    SpecParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{what} needs the dense Jacobian, but n = {n} exceeds the dense cap {cap}; use method `ltr` without table1/defect_sweep")]
    DenseRefused { what: &'static str, n: usize, cap: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Solver(#[from] ltr_core::Error),
}

impl BenchError {
    /// Process exit code: 2 for usage errors, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Usage(_) | BenchError::SpecParse { .. } | BenchError::DenseRefused { .. } => 2,
            _ => 1,
        }
    }
}

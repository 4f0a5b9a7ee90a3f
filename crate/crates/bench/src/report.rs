//! Report types and their CSV/JSON serialization.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ltr_core::{EllSchedule, IterationRecord, StopReason};
use serde::{Deserialize, Serialize};

use crate::spec::ExperimentSpec;
use crate::BenchError;

/// Column order of the per-iteration CSV.
pub const CSV_HEADER: [&str; 15] = [
    "k",
    "ell",
    "delta_k",
    "mu_k",
    "lambda_k",
    "g_norm",
    "f",
    "residual",
    "pi",
    "q_k",
    "accepted",
    "rejects",
    "newton_iters",
    "rank_one_norm",
    "err_truth",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionStamp {
    pub package: String,
    pub version: String,
    /// Set from `LTR_GIT_REV` at build time when available.
    pub git_rev: Option<String>,
}

impl VersionStamp {
    pub fn current() -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            git_rev: option_env!("LTR_GIT_REV").map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Ltr,
    Rtr,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Ltr => "ltr",
            MethodKind::Rtr => "rtr",
        }
    }
}

/// One row of the iterations/residual/error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Accepted outer iterations.
    pub it: usize,
    pub residual_norm: f64,
    /// Newton steps on the secular equation.
    pub it_inner: usize,
    /// `‖x − x†‖`.
    pub err: Option<f64>,
    /// `‖x − x†‖/√n`.
    pub err_rmse: Option<f64>,
    pub stop_reason: StopReason,
    pub final_g_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: MethodKind,
    pub summary: Summary,
    /// `(k, ‖x_k − x†‖)`; empty unless requested.
    pub error_series: Vec<(usize, f64)>,
    pub records: Vec<IterationRecord>,
}

/// Krylov-vs-dense errors at one accepted LTR step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub k: usize,
    pub ell: usize,
    pub err_r: f64,
    pub err_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub ell: EllSchedule,
    pub err_r_max: f64,
    pub err_p_max: f64,
    pub err_r_mean: f64,
    pub err_p_mean: f64,
    pub rows: Vec<CompareRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectPoint {
    pub ell: usize,
    pub defect: f64,
}

/// Wall-clock data, kept apart so that reports can be compared without it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub ltr_seconds: Option<f64>,
    pub rtr_seconds: Option<f64>,
    /// RTR time over LTR time; only when both ran in this process.
    pub time_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: VersionStamp,
    pub spec: ExperimentSpec,
    pub n: usize,
    pub runs: Vec<RunReport>,
    pub table1: Option<Table1>,
    pub defect_sweep: Option<Vec<DefectPoint>>,
    /// Largest `‖x_k^ltr − x_k^rtr‖ / max(1, ‖x_k^rtr‖)` over common iterates.
    pub iterate_agreement: Option<f64>,
    pub timing: Timing,
}

impl ExperimentReport {
    pub fn run(&self, method: MethodKind) -> Option<&RunReport> {
        self.runs.iter().find(|r| r.method == method)
    }

    /// The report with timing cleared; equal specs give equal values.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: Timing::default(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub k: usize,
    pub ell: usize,
    pub delta_k: f64,
    pub mu_k: f64,
    pub lambda_k: f64,
    pub g_norm: f64,
    pub f: f64,
    pub residual: f64,
    pub pi: f64,
    pub q_k: f64,
    pub accepted: bool,
    pub rejects: usize,
    pub newton_iters: usize,
    pub rank_one_norm: f64,
    pub err_truth: Option<f64>,
}

impl From<&IterationRecord> for CsvRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            k: r.k,
            ell: r.ell,
            delta_k: r.delta_k,
            mu_k: r.mu_k,
            lambda_k: r.lambda_k,
            g_norm: r.g_norm,
            f: r.f,
            residual: r.residual,
            pi: r.pi,
            q_k: r.q_k,
            accepted: r.accepted,
            rejects: r.rejects,
            newton_iters: r.newton_iters,
            rank_one_norm: r.rank_one_norm,
            err_truth: r.err_truth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn with_suffix(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), BenchError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| BenchError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn write_csv(records: &[IterationRecord], path: &Path) -> Result<(), BenchError> {
    let fmt = |e: csv::Error| BenchError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(CSV_HEADER).map_err(fmt)?;
    for r in records {
        w.serialize(CsvRow::from(r)).map_err(fmt)?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the report and returns the files created.
///
/// JSON: the full report at `path`. CSV: one file per method (`path` itself for
/// a single run, `<stem>.ltr.csv`/`<stem>.rtr.csv` for both) plus
/// `<stem>.summary.json`, the report without iteration records.
pub fn emit(report: &ExperimentReport, format: Format, path: &Path) -> Result<Vec<PathBuf>, BenchError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    match format {
        Format::Json => {
            write_json(report, path)?;
            Ok(vec![path.to_path_buf()])
        }
        Format::Csv => {
            let mut written = Vec::new();
            for run in &report.runs {
                let file = if report.runs.len() == 1 {
                    path.to_path_buf()
                } else {
                    with_suffix(path, &format!(".{}", run.method.name()), "csv")
                };
                write_csv(&run.records, &file)?;
                written.push(file);
            }
            let mut summary = report.clone();
            for run in &mut summary.runs {
                run.records.clear();
            }
            let file = with_suffix(path, ".summary", "json");
            write_json(&summary, &file)?;
            written.push(file);
            Ok(written)
        }
    }
}

pub fn read_json(path: &Path) -> Result<ExperimentReport, BenchError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| BenchError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>, BenchError> {
    let fmt = |e: csv::Error| BenchError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(fmt)?;
    let header: Vec<String> = r.headers().map_err(fmt)?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(BenchError::Format {
            path: path.to_path_buf(),
            message: format!("unexpected header {header:?}"),
        });
    }
    r.deserialize().collect::<Result<_, _>>().map_err(fmt)
}

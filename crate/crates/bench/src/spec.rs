//! Experiment specifications, from CLI flags or a JSON spec file.

use std::path::Path;

use ltr_core::{EllSchedule, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    /// Coefficient identification on an `N × N` grid.
    ParamIdent {
        grid_n: usize,
        #[serde(default = "default_residual_target")]
        residual_target: f64,
        #[serde(default)]
        problem_seed: u64,
    },
    /// Separable problem `sᵢxᵢ + εxᵢ²` with `sᵢ = decay^i`.
    Synthetic {
        n: usize,
        #[serde(default = "default_decay")]
        spectrum_decay: f64,
        #[serde(default = "default_nonlinearity")]
        nonlinearity_scale: f64,
        #[serde(default)]
        problem_seed: u64,
    },
}

fn default_residual_target() -> f64 {
    0.1
}

fn default_decay() -> f64 {
    0.7
}

fn default_nonlinearity() -> f64 {
    0.1
}

impl ProblemSpec {
    pub fn input_dim(&self) -> usize {
        match self {
            ProblemSpec::ParamIdent { grid_n, .. } => grid_n * grid_n,
            ProblemSpec::Synthetic { n, .. } => *n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ltr,
    Rtr,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    /// `err_r`, `err_p` per accepted LTR step (needs the dense oracle).
    Table1,
    /// Iteration counts, residual and error per method.
    Table2,
    ErrorSeries,
    /// `‖Q TᵀT Qᵀ − Q QᵀB‖` against `ℓ` at the starting point.
    DefectSweep,
}

/// Solver settings that differ from the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub q: Option<f64>,
    pub eta: Option<f64>,
    pub gamma: Option<f64>,
    pub mu0: Option<f64>,
    pub tau_bar: Option<f64>,
    pub k_max: Option<usize>,
    pub psi_tol: Option<f64>,
    pub grad_tol: Option<f64>,
    pub enforce_step3_bound: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub delta: f64,
    /// Noise seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_ell")]
    pub ell: EllSchedule,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Output>,
    /// Krylov dimensions for the defect sweep; a doubling sequence up to `n`
    /// when absent.
    #[serde(default)]
    pub defect_ells: Option<Vec<usize>>,
}

fn default_method() -> Method {
    Method::Ltr
}

fn default_ell() -> EllSchedule {
    EllSchedule::Adaptive
}

fn default_outputs() -> Vec<Output> {
    vec![Output::Table2, Output::ErrorSeries]
}

impl ExperimentSpec {
    pub fn new(problem: ProblemSpec) -> Self {
        Self {
            problem,
            delta: 0.0,
            seed: 0,
            method: default_method(),
            ell: default_ell(),
            overrides: Overrides::default(),
            outputs: default_outputs(),
            defect_ells: None,
        }
    }

    pub fn wants(&self, out: Output) -> bool {
        self.outputs.contains(&out)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let o = &self.overrides;
        let mut cfg = SolverConfig {
            ell_schedule: self.ell.clone(),
            ..SolverConfig::default()
        };
        if let Some(v) = o.q {
            cfg.q = v;
        }
        if let Some(v) = o.eta {
            cfg.eta = v;
        }
        if let Some(v) = o.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = o.mu0 {
            cfg.mu0 = v;
        }
        if let Some(v) = o.tau_bar {
            cfg.tau_bar = v;
        }
        if let Some(v) = o.k_max {
            cfg.k_max = v;
        }
        if let Some(v) = o.psi_tol {
            cfg.secular.psi_tol = v;
        }
        if o.grad_tol.is_some() {
            cfg.grad_tol = o.grad_tol;
        }
        if let Some(v) = o.enforce_step3_bound {
            cfg.enforce_step3_bound = v;
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let usage = |m: String| Err(BenchError::Usage(m));
        match &self.problem {
            ProblemSpec::ParamIdent { grid_n, .. } if *grid_n < 3 => {
                return usage(format!("problem.grid_n must be at least 3, got {grid_n}"))
            }
            ProblemSpec::Synthetic { n, .. } if *n < 2 => {
                return usage(format!("problem.n must be at least 2, got {n}"))
            }
            _ => {}
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return usage(format!("delta must be finite and non-negative, got {}", self.delta));
        }
        match &self.ell {
            EllSchedule::Constant(0) => return usage("ell must be positive".into()),
            EllSchedule::Custom(v) if v.is_empty() || v.contains(&0) => {
                return usage("custom ell list must be non-empty with positive entries".into())
            }
            _ => {}
        }
        if let Some(ells) = &self.defect_ells {
            if ells.contains(&0) {
                return usage("defect_ells entries must be positive".into());
            }
        }
        self.solver_config()
            .validate()
            .map_err(|e| BenchError::Usage(format!("overrides: {e}")))
    }
}

/// A spec file holds one spec or a list of them.
pub fn parse_specs(text: &str) -> Result<Vec<ExperimentSpec>, BenchError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| BenchError::SpecParse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    // parse again against the concrete type for a precise message
    let specs = match value {
        serde_json::Value::Array(_) => serde_json::from_str::<Vec<ExperimentSpec>>(text),
        _ => serde_json::from_str::<ExperimentSpec>(text).map(|s| vec![s]),
    }
    .map_err(|e| BenchError::SpecParse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if specs.is_empty() {
        return Err(BenchError::Usage("spec file contains no experiments".into()));
    }
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

pub fn read_specs(path: &Path) -> Result<Vec<ExperimentSpec>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_specs(&text)
}

/// `adaptive` or a positive integer.
pub fn parse_ell(s: &str) -> Result<EllSchedule, String> {
    if s.eq_ignore_ascii_case("adaptive") {
        return Ok(EllSchedule::Adaptive);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected `adaptive` or a positive integer, got `{s}`")),
        Ok(v) => Ok(EllSchedule::Constant(v)),
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use ltr_bench::report::MethodKind;
use ltr_bench::{
    emit, parse_ell, read_specs, run_many, BenchError, ExperimentReport, ExperimentSpec, Format, Method, Output,
    ProblemSpec,
};
use ltr_core::EllSchedule;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProblemKind {
    ParamIdent,
    Synthetic,
}

/// Run the Lanczos trust-region solver and/or the dense oracle on a test problem.
#[derive(Debug, Parser)]
#[command(name = "ltr-bench", version)]
struct Cli {
    /// JSON spec file (one spec or a list); replaces the problem/solver flags.
    #[arg(long)]
    spec: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "param-ident")]
    problem: ProblemKind,

    /// Grid size for param-ident (n = N²).
    #[arg(long, default_value_t = 20)]
    grid_n: usize,

    /// Dimension for synthetic.
    #[arg(long, default_value_t = 50)]
    n: usize,

    /// Noise level `‖y − y^δ‖`.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,

    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, value_enum, default_value = "ltr")]
    method: Method,

    /// Krylov dimension: `adaptive` or a positive integer.
    #[arg(long, value_parser = parse_ell, default_value = "adaptive")]
    ell: EllSchedule,

    #[arg(long)]
    q: Option<f64>,

    #[arg(long)]
    tau_bar: Option<f64>,

    #[arg(long)]
    kmax: Option<usize>,

    /// Outputs to compute (comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_value = "table2,error-series")]
    outputs: Vec<Output>,

    /// Output path; indexed as `<stem>.<i>.<ext>` when a spec file lists several runs.
    #[arg(long, default_value = "out/report.json")]
    out: PathBuf,

    #[arg(long, value_enum, default_value = "json")]
    format: Format,

    /// Worker threads for multi-spec files.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl Cli {
    fn specs(&self) -> Result<Vec<ExperimentSpec>, BenchError> {
        if let Some(path) = &self.spec {
            return read_specs(path);
        }
        let problem = match self.problem {
            ProblemKind::ParamIdent => ProblemSpec::ParamIdent {
                grid_n: self.grid_n,
                residual_target: 0.1,
                problem_seed: 0,
            },
            ProblemKind::Synthetic => ProblemSpec::Synthetic {
                n: self.n,
                spectrum_decay: 0.7,
                nonlinearity_scale: 0.1,
                problem_seed: 0,
            },
        };
        let mut spec = ExperimentSpec::new(problem);
        spec.delta = self.delta;
        spec.seed = self.seed;
        spec.method = self.method;
        spec.ell = self.ell.clone();
        spec.outputs = self.outputs.clone();
        spec.overrides.q = self.q;
        spec.overrides.tau_bar = self.tau_bar;
        spec.overrides.k_max = self.kmax;
        spec.validate()?;
        Ok(vec![spec])
    }
}

fn indexed(path: &Path, i: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => path.with_file_name(format!("{stem}.{i}.{ext}")),
        None => path.with_file_name(format!("{stem}.{i}")),
    }
}

fn print_summary(idx: usize, report: &ExperimentReport) {
    for kind in [MethodKind::Ltr, MethodKind::Rtr] {
        let Some(r) = report.run(kind) else { continue };
        let s = &r.summary;
        let err = s.err.map_or("-".to_string(), |e| format!("{e:.3e}"));
        println!(
            "[{idx}] {} n={} it={} it_inner={} residual={:.3e} err={} stop={:?}",
            kind.name(),
            report.n,
            s.it,
            s.it_inner,
            s.residual_norm,
            err,
            s.stop_reason
        );
    }
    if let Some(t) = &report.table1 {
        println!("[{idx}] table1 err_r_max={:.3e} err_p_max={:.3e}", t.err_r_max, t.err_p_max);
    }
    if let Some(a) = report.iterate_agreement {
        println!("[{idx}] iterate agreement {a:.3e}");
    }
    if let Some(ratio) = report.timing.time_ratio {
        println!("[{idx}] time ratio rtr/ltr {ratio:.2}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let specs = match cli.specs() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let many = specs.len() > 1;
    let mut code = 0;
    for (i, result) in run_many(&specs, cli.jobs).into_iter().enumerate() {
        let path = if many { indexed(&cli.out, i) } else { cli.out.clone() };
        let outcome = result.and_then(|report| {
            print_summary(i, &report);
            emit(&report, cli.format, &path)
        });
        match outcome {
            Ok(files) => {
                for f in files {
                    println!("[{i}] wrote {}", f.display());
                }
            }
            Err(e) => {
                eprintln!("error: [{i}] {e}");
                code = code.max(e.exit_code());
            }
        }
    }
    ExitCode::from(code as u8)
}

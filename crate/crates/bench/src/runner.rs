use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ltr_core::ltr_solver::{IterationRecord, LtrStep};
use ltr_core::rtr_oracle::{compare_metrics, factorization_defect, DefectNorm, DENSE_CAP};
use ltr_core::{
    build_problem61, build_synthetic, gklb, gradient, ltr_solve_with, rtr_solve_with, DenseDecomposition,
    IterationSink, JacobianOperator, NoisyData, NonlinearProblem, ReorthPolicy, SolverConfig, SolverResult,
};
use nalgebra::DVector;

use crate::report::{
    CompareRow, DefectPoint, ExperimentReport, MethodKind, RunReport, Summary, Table1, Timing, VersionStamp,
};
use crate::spec::{ExperimentSpec, Method, Output, ProblemSpec};
use crate::BenchError;

/// Collects accepted iterates and, optionally, dense comparison metrics.
struct Collector<'a, P: NonlinearProblem> {
    problem: &'a P,
    compare: bool,
    iterates: Vec<DVector<f64>>,
    rows: Vec<CompareRow>,
    failure: Option<ltr_core::Error>,
}

impl<P: NonlinearProblem> Collector<'_, P> {
    fn compare_step(&self, s: &LtrStep<'_>) -> ltr_core::Result<CompareRow> {
        let jac = self.problem.linearize(s.x)?.jacobian;
        let dec = DenseDecomposition::from_operator(&jac)?;
        let m = compare_metrics(s.bid, s.svd, &dec, s.gradient, s.delta, None)?;
        Ok(CompareRow {
            k: s.k,
            ell: s.bid.ell(),
            err_r: m.err_r,
            err_p: m.err_p,
        })
    }
}

impl<P: NonlinearProblem> IterationSink for Collector<'_, P> {
    fn on_record(&mut self, record: &IterationRecord, x_next: &DVector<f64>) {
        if record.accepted {
            self.iterates.push(x_next.clone());
        }
    }

    fn on_ltr_step(&mut self, s: &LtrStep<'_>) {
        if !self.compare || self.failure.is_some() {
            return;
        }
        match self.compare_step(s) {
            Ok(row) => self.rows.push(row),
            Err(e) => self.failure = Some(e),
        }
    }
}

fn summarize(res: &SolverResult) -> Summary {
    Summary {
        it: res.totals.outer,
        residual_norm: res.final_residual,
        it_inner: res.totals.inner,
        err: res.final_err,
        err_rmse: res.final_rmse,
        stop_reason: res.stop_reason,
        final_g_norm: res.final_g_norm,
    }
}

fn run_report(method: MethodKind, res: SolverResult, series: bool) -> RunReport {
    RunReport {
        method,
        summary: summarize(&res),
        error_series: if series { res.error_series() } else { Vec::new() },
        records: res.records,
    }
}

fn doubling_ells(n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut ell = 1;
    while ell < n {
        out.push(ell);
        ell *= 2;
    }
    out.push(n);
    out
}

fn defect_sweep<P: NonlinearProblem>(
    problem: &P,
    data: &NoisyData,
    x0: &DVector<f64>,
    ells: &[usize],
) -> Result<Vec<DefectPoint>, BenchError> {
    let jac = problem.linearize(x0)?.jacobian;
    let j = jac.to_dense();
    let b = j.transpose() * &j;
    let g = gradient(problem, x0, data)?;
    let n = problem.input_dim();
    let mut out = Vec::with_capacity(ells.len());
    for &ell in ells {
        let bid = gklb(&jac, &g, ell.min(n), ReorthPolicy::full())?;
        out.push(DefectPoint {
            ell,
            defect: factorization_defect(&bid, &b, DefectNorm::Frobenius),
        });
    }
    Ok(out)
}

fn execute<P: NonlinearProblem + Sync>(
    spec: &ExperimentSpec,
    problem: &P,
    data: &NoisyData,
    x0: &DVector<f64>,
) -> Result<ExperimentReport, BenchError> {
    let n = problem.input_dim();
    let cfg: SolverConfig = spec.solver_config();
    let both = spec.method == Method::Both;
    let want_table1 = both || spec.wants(Output::Table1);
    let want_defect = both || spec.wants(Output::DefectSweep);
    let series = spec.wants(Output::ErrorSeries);
    let runs_rtr = matches!(spec.method, Method::Rtr | Method::Both);
    let runs_ltr = matches!(spec.method, Method::Ltr | Method::Both);
    for (needed, what) in [
        (runs_rtr, "the dense RTR oracle"),
        (want_table1, "table1"),
        (want_defect, "defect_sweep"),
    ] {
        if needed && n > DENSE_CAP {
            return Err(BenchError::DenseRefused { what, n, cap: DENSE_CAP });
        }
    }

    let mut runs = Vec::new();
    let mut timing = Timing::default();
    let mut table1 = None;
    let mut ltr_iterates = Vec::new();
    if runs_ltr {
        let mut sink = Collector {
            problem,
            compare: want_table1,
            iterates: Vec::new(),
            rows: Vec::new(),
            failure: None,
        };
        let res = ltr_solve_with(problem, data, x0, &cfg, &mut sink)?;
        if let Some(e) = sink.failure {
            return Err(e.into());
        }
        timing.ltr_seconds = Some(res.totals.wall_time);
        if want_table1 {
            let rows = sink.rows;
            let count = rows.len().max(1) as f64;
            table1 = Some(Table1 {
                ell: spec.ell.clone(),
                err_r_max: rows.iter().map(|r| r.err_r).fold(0.0, f64::max),
                err_p_max: rows.iter().map(|r| r.err_p).fold(0.0, f64::max),
                err_r_mean: rows.iter().map(|r| r.err_r).sum::<f64>() / count,
                err_p_mean: rows.iter().map(|r| r.err_p).sum::<f64>() / count,
                rows,
            });
        }
        ltr_iterates = sink.iterates;
        runs.push(run_report(MethodKind::Ltr, res, series));
    }

    let mut agreement = None;
    if runs_rtr {
        let mut sink = Collector {
            problem,
            compare: false,
            iterates: Vec::new(),
            rows: Vec::new(),
            failure: None,
        };
        let res = rtr_solve_with(problem, data, x0, &cfg, &mut sink)?;
        timing.rtr_seconds = Some(res.totals.wall_time);
        if both {
            agreement = Some(
                ltr_iterates
                    .iter()
                    .zip(&sink.iterates)
                    .map(|(a, b)| (a - b).norm() / b.norm().max(1.0))
                    .fold(0.0, f64::max),
            );
        }
        runs.push(run_report(MethodKind::Rtr, res, series));
    }
    if let (Some(l), Some(r)) = (timing.ltr_seconds, timing.rtr_seconds) {
        timing.time_ratio = Some(r / l.max(f64::MIN_POSITIVE));
    }

    let defect = if want_defect {
        let ells = spec.defect_ells.clone().unwrap_or_else(|| doubling_ells(n));
        Some(defect_sweep(problem, data, x0, &ells)?)
    } else {
        None
    };

    Ok(ExperimentReport {
        version: VersionStamp::current(),
        spec: spec.clone(),
        n,
        runs,
        table1,
        defect_sweep: defect,
        iterate_agreement: agreement,
        timing,
    })
}

/// Runs one experiment. Fully determined by the spec apart from timing.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentReport, BenchError> {
    spec.validate()?;
    match &spec.problem {
        ProblemSpec::ParamIdent {
            grid_n,
            residual_target,
            problem_seed,
        } => {
            if grid_n * grid_n > DENSE_CAP && spec.method != Method::Ltr {
                return Err(BenchError::DenseRefused {
                    what: "the dense RTR oracle",
                    n: grid_n * grid_n,
                    cap: DENSE_CAP,
                });
            }
            let p = build_problem61(*grid_n, *residual_target, *problem_seed)?;
            let data = p.noisy_data(spec.delta, spec.seed)?;
            execute(spec, &p, &data, &p.initial_guess())
        }
        ProblemSpec::Synthetic {
            n,
            spectrum_decay,
            nonlinearity_scale,
            problem_seed,
        } => {
            let p = build_synthetic(*n, *spectrum_decay, *nonlinearity_scale, *problem_seed)?;
            let data = p.noisy_data(spec.delta, spec.seed)?;
            execute(spec, &p, &data, &DVector::zeros(*n))
        }
    }
}

/// Runs independent specs on up to `workers` threads; results keep the input
/// order.
pub fn run_many(specs: &[ExperimentSpec], workers: usize) -> Vec<Result<ExperimentReport, BenchError>> {
    let workers = workers.clamp(1, specs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ExperimentReport, BenchError>>>> =
        Mutex::new((0..specs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= specs.len() {
                    break;
                }
                let out = run(&specs[i]);
                slots.lock().expect("result slots")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every spec ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ltr_core::EllSchedule;

    fn synthetic(n: usize) -> ExperimentSpec {
        ExperimentSpec::new(ProblemSpec::Synthetic {
            n,
            spectrum_decay: 0.7,
            nonlinearity_scale: 0.1,
            problem_seed: 3,
        })
    }

    #[test]
    fn doubling_sequence_ends_at_n() {
        assert_eq!(doubling_ells(10), vec![1, 2, 4, 8, 10]);
        assert_eq!(doubling_ells(1), vec![1]);
    }

    #[test]
    fn both_methods_agree_at_full_dimension() {
        let mut spec = synthetic(20);
        spec.delta = 1e-3;
        spec.seed = 4;
        spec.method = Method::Both;
        spec.ell = EllSchedule::Constant(20);
        spec.overrides.k_max = Some(15);
        let rep = run(&spec).unwrap();
        assert_eq!(rep.runs.len(), 2);
        assert!(rep.iterate_agreement.unwrap() <= 1e-6, "{:?}", rep.iterate_agreement);
        let t1 = rep.table1.as_ref().unwrap();
        assert!(t1.err_r_max <= 1e-8 && t1.err_p_max <= 1e-8);
        assert!(rep.timing.time_ratio.is_some());
        let sweep = rep.defect_sweep.as_ref().unwrap();
        assert_eq!(sweep.last().unwrap().ell, 20);
        assert!(sweep.last().unwrap().defect <= 1e-10);
    }

    #[test]
    fn rtr_refused_above_cap() {
        let mut spec = ExperimentSpec::new(ProblemSpec::ParamIdent {
            grid_n: 60,
            residual_target: 0.1,
            problem_seed: 0,
        });
        spec.method = Method::Rtr;
        let err = run(&spec).unwrap_err();
        assert!(matches!(err, BenchError::DenseRefused { n: 3600, .. }));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn parallel_runs_keep_order() {
        let specs: Vec<_> = (0..4)
            .map(|i| {
                let mut s = synthetic(6 + i);
                s.overrides.k_max = Some(5);
                s
            })
            .collect();
        let out = run_many(&specs, 3);
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.as_ref().unwrap().n, 6 + i);
        }
    }
}

//! Outer trust-region loop shared by the Lanczos (LTR) and the dense (RTR)
//! variants. The two differ only in how the local model is built and solved,
//! so every radius, acceptance and stopping decision is made here once.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::ltr_solver::{
    discrepancy_check, ell_schedule, radius_update, IterationRecord, IterationSink, SolverConfig,
    SolverResult, StopReason, Totals,
};
use crate::operator::{check_point, local_state, LocalState, NoisyData, NonlinearProblem};
use crate::trs::SecularConfig;

/// Solution of the local subproblem for one radius.
pub(crate) struct Trial {
    pub p: DVector<f64>,
    pub lambda: f64,
    pub newton_iters: usize,
    /// `f(x) − Φ(w)`, the decrease predicted by the model.
    pub predicted: f64,
    /// `‖Qᵀ(Bp + g)‖ / ‖g‖` (the full norm for the dense model).
    pub q_ratio: f64,
}

/// The local quadratic model at one iterate.
pub(crate) trait LocalModel {
    fn ell(&self) -> usize;
    fn s_tilde_norm(&self) -> f64;
    fn j_norm_est(&self) -> f64;
    /// `(1−q)‖s̃‖/‖TᵀT‖²`.
    fn step3_bound(&self, q: f64) -> f64;
    /// Guaranteed Cauchy decrease for radius `delta`.
    fn cauchy_bound(&self, delta: f64) -> f64;
    fn rank_one_norm(&self) -> f64;
    fn solve(&self, delta: f64, cfg: &SecularConfig) -> Result<Trial>;
    /// Hook for model-specific telemetry of an accepted step.
    fn report_accepted(
        &self,
        _sink: &mut dyn IterationSink,
        _k: usize,
        _x: &DVector<f64>,
        _f_value: f64,
        _delta: f64,
        _trial: &Trial,
    ) {
    }
}

pub(crate) trait ModelFactory<J> {
    type Model: LocalModel;
    fn build(&mut self, jacobian: &J, gradient: &DVector<f64>, ell: usize) -> Result<Self::Model>;
}

fn error_to_truth<P: NonlinearProblem + ?Sized>(problem: &P, x: &DVector<f64>) -> Option<f64> {
    problem.known_solution().map(|t| (x - t).norm())
}

pub(crate) fn run<P, F>(
    problem: &P,
    data: &NoisyData,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    factory: &mut F,
    sink: &mut dyn IterationSink,
) -> Result<SolverResult>
where
    P: NonlinearProblem + ?Sized,
    F: ModelFactory<P::Jacobian>,
{
    cfg.validate()?;
    check_point(problem, x0, data)?;
    let start = Instant::now();
    let n = problem.input_dim();
    let delta_noise = data.delta;

    let mut x = x0.clone();
    let mut state: LocalState<P::Jacobian> = local_state(problem, &x, data)?;
    let g0 = state.gradient.norm();
    let grad_tol = cfg.grad_tol.unwrap_or(1e-8 * g0.max(1.0));
    let mut mu = cfg.mu0;
    let mut records = Vec::new();
    let mut inner_total = 0usize;
    let mut j_norm_last = f64::NAN;
    let initial_err = error_to_truth(problem, &x);

    let stop = loop {
        let k = records.len();
        let g_norm = state.gradient.norm();
        if g_norm == 0.0 || (delta_noise == 0.0 && g_norm <= grad_tol) {
            break StopReason::GradientTol;
        }
        if k >= cfg.k_max {
            break StopReason::KMax;
        }
        let ell = ell_schedule(k, &cfg.ell_schedule, n);
        let model = factory.build(&state.jacobian, &state.gradient, ell)?;
        j_norm_last = model.j_norm_est();
        if discrepancy_check(g_norm, j_norm_last, cfg.tau_bar, delta_noise) {
            break StopReason::Discrepancy;
        }

        let s_norm = model.s_tilde_norm();
        let step3 = model.step3_bound(cfg.q);
        let mut radius = (mu * s_norm).clamp(cfg.delta_min, cfg.delta_max);
        if cfg.enforce_step3_bound {
            radius = radius.min(step3);
        }
        let mut rejects = 0usize;
        let mut newton_iters = 0usize;
        let accepted = loop {
            let trial = model.solve(radius, &cfg.secular)?;
            newton_iters += trial.newton_iters;
            let x_trial = &x + &trial.p;
            let actual = if problem.is_admissible(&x_trial) {
                match problem.eval(&x_trial) {
                    Ok(fx) => Some(state.f_value - 0.5 * (fx - &data.y_delta).norm_squared()),
                    Err(Error::Evaluation(_)) | Err(Error::Singular(_)) => None,
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            let pi = match actual {
                Some(a) if trial.predicted > 0.0 => a / trial.predicted,
                _ => f64::NEG_INFINITY,
            };
            if pi >= cfg.eta {
                break Some((trial, x_trial, pi));
            }
            rejects += 1;
            radius *= cfg.gamma;
            if radius < cfg.delta_min {
                break None;
            }
        };
        inner_total += newton_iters;

        let mut record = IterationRecord {
            k,
            ell: model.ell(),
            delta_k: radius,
            mu_k: mu,
            lambda_k: f64::NAN,
            g_norm,
            f: state.f_value,
            residual: state.residual.norm(),
            pi: f64::NAN,
            q_k: f64::NAN,
            accepted: false,
            rejects,
            newton_iters,
            rank_one_norm: model.rank_one_norm(),
            err_truth: error_to_truth(problem, &x),
            j_norm_est: j_norm_last,
            s_tilde_norm: s_norm,
            step3_bound: step3,
            model_decrease: f64::NAN,
            cauchy_bound: f64::NAN,
            step_norm: 0.0,
        };
        let Some((trial, x_next, pi)) = accepted else {
            sink.on_record(&record, &x);
            records.push(record);
            break StopReason::RadiusFloor;
        };
        record.lambda_k = trial.lambda;
        record.pi = pi;
        record.q_k = trial.q_ratio;
        record.accepted = true;
        record.model_decrease = trial.predicted;
        record.cauchy_bound = model.cauchy_bound(radius);
        record.step_norm = trial.p.norm();
        model.report_accepted(sink, k, &x, state.f_value, radius, &trial);

        let mu_effective = mu * cfg.gamma.powi(rejects as i32);
        mu = radius_update(mu_effective, trial.q_ratio, pi, cfg);
        x = x_next;
        state = local_state(problem, &x, data)?;
        sink.on_record(&record, &x);
        records.push(record);
    };

    let final_err = error_to_truth(problem, &x);
    let outer = records.iter().filter(|r| r.accepted).count();
    Ok(SolverResult {
        stop_reason: stop,
        totals: Totals {
            outer,
            inner: inner_total,
            wall_time: start.elapsed().as_secs_f64(),
        },
        final_g_norm: state.gradient.norm(),
        final_residual: state.residual.norm(),
        final_f: state.f_value,
        j_norm_est: j_norm_last,
        initial_err,
        final_err,
        final_rmse: final_err.map(|e| e / (n as f64).sqrt()),
        x_final: x,
        records,
    })
}

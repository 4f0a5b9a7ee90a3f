//! The regularizing Lanczos trust-region iteration (LTR).
//!
//! At `x_k` the Jacobian is bidiagonalized from `q₁ = g_k`, the radius is set to
//! `Δ_k = μ_k ‖s̃_k‖`, and the projected subproblem is solved and accepted or
//! shrunk by `γ` on the usual ratio test. `μ` follows the q-condition heuristic
//! of [`radius_update`]; iteration stops by the discrepancy principle
//! `‖g_k‖ ≤ τ̄ ‖J(x_k)‖ δ`, or, for exact data, by a gradient tolerance.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::driver::{self, LocalModel, ModelFactory, Trial};
use crate::error::{Error, Result};
use crate::gklb::{gklb, Bidiagonalization, ReorthPolicy};
use crate::krylov_sqrt::{bidiagonal_svd, s_tilde_coeffs, SmallSvd};
use crate::operator::{JacobianOperator, NoisyData, NonlinearProblem};
use crate::trs::{
    cauchy_decrease_bound, model_phi, projected_model_norm, rank_one_norm, recover_step,
    secular_newton, KktSolution, SecularConfig,
};

/// Krylov dimension per outer iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EllSchedule {
    Constant(usize),
    /// `ℓ_k = 3 + ⌈k/2⌉`.
    Adaptive,
    /// `ℓ_k` from the list; the last entry repeats.
    Custom(Vec<usize>),
}

/// `ℓ_k` for iteration `k`, capped at `n`.
pub fn ell_schedule(k: usize, mode: &EllSchedule, n: usize) -> usize {
    let raw = match mode {
        EllSchedule::Constant(l) => *l,
        EllSchedule::Adaptive => 3 + k.div_ceil(2),
        EllSchedule::Custom(list) => list[k.min(list.len() - 1)],
    };
    raw.clamp(1, n.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub q: f64,
    /// Acceptance threshold on `π_k`.
    pub eta: f64,
    /// Shrink factor after a rejected trial step.
    pub gamma: f64,
    pub mu0: f64,
    pub nu: f64,
    pub eta2: f64,
    pub mu_max: f64,
    pub delta_max: f64,
    pub delta_min: f64,
    pub tau_bar: f64,
    pub k_max: usize,
    pub ell_schedule: EllSchedule,
    pub secular: SecularConfig,
    /// Stopping tolerance on `‖g‖` for exact data; `None` means
    /// `1e-8·max(1, ‖g₀‖)`.
    pub grad_tol: Option<f64>,
    pub reorth: ReorthPolicy,
    /// Cap every radius at `(1−q)‖s̃‖/‖TᵀT‖²`, which guarantees the projected
    /// q-condition; the `μ` heuristic alone may exceed it.
    pub enforce_step3_bound: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            q: 0.8,
            eta: 0.1,
            gamma: 1.0 / 6.0,
            mu0: 0.1,
            nu: 1.1,
            eta2: 0.25,
            mu_max: 1e5,
            delta_max: 1e4,
            delta_min: 1e-12,
            tau_bar: 0.1,
            k_max: 500,
            ell_schedule: EllSchedule::Adaptive,
            secular: SecularConfig::default(),
            grad_tol: None,
            reorth: ReorthPolicy::default(),
            enforce_step3_bound: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        let checks = [
            (open_unit(self.q), "q must lie in (0, 1)"),
            (open_unit(self.eta), "eta must lie in (0, 1)"),
            (open_unit(self.gamma), "gamma must lie in (0, 1)"),
            (open_unit(self.eta2), "eta2 must lie in (0, 1)"),
            (self.mu0 > 0.0 && self.mu0 <= self.mu_max, "mu0 must lie in (0, mu_max]"),
            (self.nu >= 1.0, "nu must be at least 1"),
            (
                self.delta_min > 0.0 && self.delta_min < self.delta_max,
                "need 0 < delta_min < delta_max",
            ),
            (self.tau_bar > 0.0, "tau_bar must be positive"),
            (self.grad_tol.is_none_or(|t| t >= 0.0), "grad_tol must be non-negative"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidArgument(msg.into()));
            }
        }
        match &self.ell_schedule {
            EllSchedule::Constant(0) => {
                return Err(Error::InvalidArgument("constant ell must be positive".into()))
            }
            EllSchedule::Custom(l) if l.is_empty() || l.contains(&0) => {
                return Err(Error::InvalidArgument("custom ell list must be nonempty and positive".into()))
            }
            _ => {}
        }
        self.secular.validate()?;
        self.reorth.validate()
    }
}

/// `μ_{k+1}` from `μ_k`, the q-ratio and the acceptance ratio.
pub fn radius_update(mu: f64, q_k: f64, pi_k: f64, cfg: &SolverConfig) -> f64 {
    let next = if q_k < cfg.q || pi_k < cfg.eta2 {
        mu / 6.0
    } else if q_k > cfg.nu * cfg.q && pi_k > cfg.eta2 {
        2.0 * mu
    } else {
        mu
    };
    next.min(cfg.mu_max)
}

/// `‖g‖ ≤ τ̄ ‖J‖ δ`.
pub fn discrepancy_check(g_norm: f64, j_norm_est: f64, tau_bar: f64, delta: f64) -> bool {
    delta > 0.0 && g_norm <= tau_bar * j_norm_est * delta
}

/// JSON has no NaN; unset diagnostics travel as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Telemetry of one outer iteration, evaluated at `x_k` unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub ell: usize,
    /// Radius of the last trial (the accepted one, if any).
    #[serde(with = "nan_as_null")]
    pub delta_k: f64,
    #[serde(with = "nan_as_null")]
    pub mu_k: f64,
    #[serde(with = "nan_as_null")]
    pub lambda_k: f64,
    #[serde(with = "nan_as_null")]
    pub g_norm: f64,
    #[serde(with = "nan_as_null")]
    pub f: f64,
    #[serde(with = "nan_as_null")]
    pub residual: f64,
    #[serde(with = "nan_as_null")]
    pub pi: f64,
    #[serde(with = "nan_as_null")]
    pub q_k: f64,
    pub accepted: bool,
    pub rejects: usize,
    pub newton_iters: usize,
    #[serde(with = "nan_as_null")]
    pub rank_one_norm: f64,
    pub err_truth: Option<f64>,
    #[serde(with = "nan_as_null")]
    pub j_norm_est: f64,
    #[serde(with = "nan_as_null")]
    pub s_tilde_norm: f64,
    #[serde(with = "nan_as_null")]
    pub step3_bound: f64,
    /// `f(x_k) − Φ_k(w_k)`.
    #[serde(with = "nan_as_null")]
    pub model_decrease: f64,
    /// Lower bound on the Cauchy decrease at `Δ_k`.
    #[serde(with = "nan_as_null")]
    pub cauchy_bound: f64,
    #[serde(with = "nan_as_null")]
    pub step_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Discrepancy,
    GradientTol,
    KMax,
    RadiusFloor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    /// Accepted outer iterations.
    pub outer: usize,
    /// Newton steps on the secular equation, summed over all trials.
    pub inner: usize,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub x_final: DVector<f64>,
    pub stop_reason: StopReason,
    pub records: Vec<IterationRecord>,
    pub totals: Totals,
    #[serde(with = "nan_as_null")]
    pub final_g_norm: f64,
    #[serde(with = "nan_as_null")]
    pub final_residual: f64,
    #[serde(with = "nan_as_null")]
    pub final_f: f64,
    /// `‖J‖` estimate from the last model built.
    #[serde(with = "nan_as_null")]
    pub j_norm_est: f64,
    pub initial_err: Option<f64>,
    /// `‖x_final − x†‖`.
    pub final_err: Option<f64>,
    /// `‖x_final − x†‖ / √n`.
    pub final_rmse: Option<f64>,
}

impl SolverResult {
    /// `(k, ‖x_k − x†‖)` for every iterate including the final one.
    pub fn error_series(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self
            .records
            .iter()
            .filter_map(|r| r.err_truth.map(|e| (r.k, e)))
            .collect();
        if let Some(e) = self.final_err {
            let k = self.records.iter().filter(|r| r.accepted).count();
            if out.last().map(|l| l.0) != Some(k) {
                out.push((k, e));
            }
        }
        out
    }
}

/// Everything about an accepted LTR step, for diagnostics.
pub struct LtrStep<'a> {
    pub k: usize,
    pub x: &'a DVector<f64>,
    pub gradient: &'a DVector<f64>,
    pub f_value: f64,
    pub delta: f64,
    pub bid: &'a Bidiagonalization,
    pub svd: &'a SmallSvd,
    pub kkt: &'a KktSolution,
    pub p: &'a DVector<f64>,
}

/// Receives telemetry while a solver runs.
pub trait IterationSink {
    /// Called once per outer iteration, with the iterate after the step.
    fn on_record(&mut self, _record: &IterationRecord, _x_next: &DVector<f64>) {}
    /// Called for every accepted LTR step before the iterate moves.
    fn on_ltr_step(&mut self, _step: &LtrStep<'_>) {}
}

/// A sink that discards everything.
pub struct NoSink;

impl IterationSink for NoSink {}

struct LtrModel {
    bid: Bidiagonalization,
    svd: SmallSvd,
    gradient: DVector<f64>,
    g_norm: f64,
    s_tilde_norm: f64,
    kkt: std::cell::RefCell<Option<KktSolution>>,
}

impl LocalModel for LtrModel {
    fn ell(&self) -> usize {
        self.bid.ell()
    }

    fn s_tilde_norm(&self) -> f64 {
        self.s_tilde_norm
    }

    fn j_norm_est(&self) -> f64 {
        self.svd.sigma_max()
    }

    fn step3_bound(&self, q: f64) -> f64 {
        (1.0 - q) * self.s_tilde_norm / self.svd.gram_norm().powi(2)
    }

    fn cauchy_bound(&self, delta: f64) -> f64 {
        let t_tilde = self.bid.alphas[0].powi(2);
        cauchy_decrease_bound(t_tilde, self.g_norm, delta, self.svd.gram_norm())
    }

    fn rank_one_norm(&self) -> f64 {
        rank_one_norm(&self.bid)
    }

    fn solve(&self, delta: f64, cfg: &SecularConfig) -> Result<Trial> {
        let kkt = secular_newton(&self.svd, self.g_norm, delta, cfg)?;
        let (_, p) = recover_step(&self.bid, &self.svd, &kkt.w)?;
        let trial = Trial {
            p,
            lambda: kkt.lambda,
            newton_iters: kkt.newton_iters,
            predicted: -model_phi(&kkt.w, &self.svd, self.g_norm, 0.0),
            q_ratio: projected_model_norm(&self.svd, &kkt.w, self.g_norm) / self.g_norm,
        };
        *self.kkt.borrow_mut() = Some(kkt);
        Ok(trial)
    }

    fn report_accepted(
        &self,
        sink: &mut dyn IterationSink,
        k: usize,
        x: &DVector<f64>,
        f_value: f64,
        delta: f64,
        trial: &Trial,
    ) {
        let kkt = self.kkt.borrow();
        let kkt = kkt.as_ref().expect("accepted step was solved");
        sink.on_ltr_step(&LtrStep {
            k,
            x,
            gradient: &self.gradient,
            f_value,
            delta,
            bid: &self.bid,
            svd: &self.svd,
            kkt,
            p: &trial.p,
        });
    }
}

struct LtrFactory {
    reorth: ReorthPolicy,
}

impl<J: JacobianOperator> ModelFactory<J> for LtrFactory {
    type Model = LtrModel;

    fn build(&mut self, jacobian: &J, gradient: &DVector<f64>, ell: usize) -> Result<LtrModel> {
        let bid = gklb(jacobian, gradient, ell, self.reorth)?;
        let svd = bidiagonal_svd(&bid);
        let g_norm = gradient.norm();
        let s_tilde_norm = s_tilde_coeffs(&svd, g_norm).norm();
        Ok(LtrModel {
            bid,
            svd,
            gradient: gradient.clone(),
            g_norm,
            s_tilde_norm,
            kkt: std::cell::RefCell::new(None),
        })
    }
}

/// Runs LTR from `x0`.
pub fn ltr_solve<P: NonlinearProblem + ?Sized>(
    problem: &P,
    data: &NoisyData,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    ltr_solve_with(problem, data, x0, cfg, &mut NoSink)
}

/// [`ltr_solve`] reporting to `sink`.
pub fn ltr_solve_with<P: NonlinearProblem + ?Sized>(
    problem: &P,
    data: &NoisyData,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    sink: &mut dyn IterationSink,
) -> Result<SolverResult> {
    let mut factory = LtrFactory { reorth: cfg.reorth };
    driver::run(problem, data, x0, cfg, &mut factory, sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::test_support::LinearMap;
    use crate::problems::build_synthetic;
    use nalgebra::DMatrix;

    #[test]
    fn adaptive_schedule() {
        assert_eq!(ell_schedule(0, &EllSchedule::Adaptive, 100), 3);
        assert_eq!(ell_schedule(5, &EllSchedule::Adaptive, 100), 6);
        assert_eq!(ell_schedule(400, &EllSchedule::Adaptive, 100), 100);
        for k in [0, 7, 99] {
            assert_eq!(ell_schedule(k, &EllSchedule::Constant(10), 100), 10);
        }
        let custom = EllSchedule::Custom(vec![2, 4]);
        assert_eq!(ell_schedule(0, &custom, 10), 2);
        assert_eq!(ell_schedule(9, &custom, 10), 4);
    }

    #[test]
    fn record_with_nan_roundtrips_through_json() {
        let rec = IterationRecord {
            k: 3,
            ell: 5,
            delta_k: 1e-3,
            mu_k: 0.1,
            lambda_k: f64::NAN,
            g_norm: 2.0,
            f: 0.5,
            residual: 1.0,
            pi: f64::NAN,
            q_k: f64::NAN,
            accepted: false,
            rejects: 4,
            newton_iters: 7,
            rank_one_norm: 0.0,
            err_truth: None,
            j_norm_est: 1.0,
            s_tilde_norm: 1.0,
            step3_bound: 0.2,
            model_decrease: f64::NAN,
            cauchy_bound: f64::NAN,
            step_norm: 0.0,
        };
        let text = serde_json::to_string(&rec).unwrap();
        assert!(text.contains("\"lambda_k\":null"));
        let back: IterationRecord = serde_json::from_str(&text).unwrap();
        assert!(back.lambda_k.is_nan() && back.pi.is_nan());
        assert_eq!(back.delta_k, rec.delta_k);
        assert_eq!(back.rejects, 4);
    }

    #[test]
    fn mu_rule() {
        let cfg = SolverConfig::default();
        assert_eq!(radius_update(6.0, 0.5, 0.9, &cfg), 1.0);
        assert_eq!(radius_update(1.0, 0.9, 0.3, &cfg), 2.0);
        assert_eq!(radius_update(1.0, 0.85, 0.3, &cfg), 1.0);
        assert_eq!(radius_update(1.0, 0.95, 0.2, &cfg), 1.0 / 6.0);
        assert_eq!(radius_update(9e4, 0.95, 0.9, &cfg), 1e5);
    }

    #[test]
    fn discrepancy_rule() {
        assert!(!discrepancy_check(1e-30, 1.0, 0.1, 0.0));
        assert!(discrepancy_check(1e-3, 1.0, 0.1, 1e-2));
        assert!(!discrepancy_check(1.1e-3, 1.0, 0.1, 1e-2));
        // τ̄‖J‖δ = 0.5·2·0.25 = 0.25 exactly
        assert!(discrepancy_check(0.25, 2.0, 0.5, 0.25));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            q: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            ell_schedule: EllSchedule::Constant(0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = SolverConfig {
            ell_schedule: EllSchedule::Custom(vec![3, 5]),
            grad_tol: Some(1e-9),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<SolverConfig>(&text).unwrap(), cfg);
        let partial: SolverConfig = serde_json::from_str(r#"{"q": 0.7}"#).unwrap();
        assert_eq!(partial.q, 0.7);
        assert_eq!(partial.eta, 0.1);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let p = build_synthetic(6, 0.6, 0.2, 1).unwrap();
        let x = p.known_solution().unwrap().clone();
        let data = NoisyData::exact(p.exact_data());
        let res = ltr_solve(&p, &data, &x, &SolverConfig::default()).unwrap();
        assert_eq!(res.stop_reason, StopReason::GradientTol);
        assert!(res.records.is_empty());
        assert_eq!(res.x_final, x);
    }

    #[test]
    fn linear_problem_converges_at_full_dimension() {
        let p = build_synthetic(8, 0.7, 0.0, 2).unwrap();
        let data = NoisyData::exact(p.exact_data());
        let cfg = SolverConfig {
            ell_schedule: EllSchedule::Constant(8),
            k_max: 2000,
            grad_tol: Some(1e-8),
            ..Default::default()
        };
        let res = ltr_solve(&p, &data, &DVector::zeros(8), &cfg).unwrap();
        assert_eq!(res.stop_reason, StopReason::GradientTol);
        assert!(res.final_g_norm <= 1e-8);
    }

    #[test]
    fn accepted_steps_pass_ratio_test() {
        let a = DMatrix::from_fn(12, 10, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let p = LinearMap(a.clone());
        let x_true = DVector::from_element(10, 1.0);
        let data = crate::operator::add_noise(&(&a * &x_true), 1e-3, 5).unwrap();
        let cfg = SolverConfig {
            ell_schedule: EllSchedule::Constant(4),
            ..Default::default()
        };
        let res = ltr_solve(&p, &data, &DVector::zeros(10), &cfg).unwrap();
        assert!(!res.records.is_empty());
        for r in res.records.iter().filter(|r| r.accepted) {
            assert!(r.pi >= cfg.eta);
        }
    }
}

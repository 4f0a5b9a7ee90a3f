//! Regularizing hybrid Lanczos trust-region method for large-scale nonlinear
//! ill-posed least-squares problems
//!
//! ```text
//! min_x  f_δ(x) = ½‖F(x) − y^δ‖²
//! ```
//!
//! Every outer iteration bidiagonalizes the Jacobian with a few
//! Golub-Kahan-Lanczos steps started at the gradient, approximates the action of
//! `(JᵀJ)^{1/2}` in the resulting Krylov subspace, and solves a projected
//! elliptical trust-region subproblem through its secular equation. The radius
//! is tied to the projected q-condition so that the implied Tikhonov parameter
//! regularizes the step; the iteration is stopped by the discrepancy principle.
//!
//! Module map:
//!
//! - [`operator`]: problem interface, objective/gradient, noisy data
//! - [`gklb`]: Golub-Kahan-Lanczos bidiagonalization with reorthogonalization
//! - [`krylov_sqrt`]: small SVDs and the Krylov approximation of `B^{1/2} b`
//! - [`trs`]: projected trust-region subproblem, secular Newton, model, Cauchy point
//! - [`ltr_solver`]: the outer regularizing loop (LTR)
//! - [`rtr_oracle`]: the exact SVD-based counterpart (RTR) and comparison metrics
//! - [`problems`]: the 2D elliptic parameter identification problem and a synthetic problem

pub mod error;
pub mod gklb;
pub mod krylov_sqrt;
pub mod ltr_solver;
pub mod operator;
pub mod problems;
pub mod rtr_oracle;
pub mod trs;

mod driver;

pub use error::{Error, Result};
pub use gklb::{gklb, Bidiagonalization, ReorthMode, ReorthPolicy};
pub use krylov_sqrt::{small_svd, SmallSvd};
pub use ltr_solver::{
    ltr_solve, ltr_solve_with, EllSchedule, IterationRecord, IterationSink, LtrStep,
    SolverConfig, SolverResult, StopReason,
};
pub use operator::{add_noise, gradient, objective, JacobianOperator, NoisyData, NonlinearProblem};
pub use problems::{build_problem61, build_synthetic, ParamIdentProblem, SyntheticProblem};
pub use rtr_oracle::{rtr_solve, rtr_solve_with, DenseDecomposition};
pub use trs::{KktSolution, SecularConfig};

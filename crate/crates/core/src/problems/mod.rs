//! Concrete test problems.

pub mod banded;
pub mod param_ident;
pub mod synthetic;

pub use param_ident::{
    build_problem61, ParamIdentConfig, ParamIdentJacobian, ParamIdentProblem, ResidualConstruction,
};
pub use synthetic::{build_synthetic, DiagonalJacobian, SyntheticConfig, SyntheticProblem};

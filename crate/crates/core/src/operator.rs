//! Interface to a nonlinear least-squares problem and the noisy-data model.
//!
//! Problems are consumed only through matrix-vector products with the Jacobian.
//! [`NonlinearProblem::linearize`] evaluates `F(x)` once and returns a
//! [`JacobianOperator`] that owns whatever factorization the problem needs, so a
//! single linearization serves every `Jv` and `Jᵀu` at that point.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Matrix-free access to `J(x)` at a fixed point.
pub trait JacobianOperator {
    /// Number of rows `m`.
    fn nrows(&self) -> usize;
    /// Number of columns `n`.
    fn ncols(&self) -> usize;
    /// `J v` for `v ∈ Rⁿ`.
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
    /// `Jᵀ u` for `u ∈ Rᵐ`.
    fn apply_transpose(&self, u: &DVector<f64>) -> DVector<f64>;

    /// Materializes `J` column by column. Only meant for small problems; the
    /// dense oracle enforces its own size cap before calling this.
    fn to_dense(&self) -> DMatrix<f64> {
        let (m, n) = (self.nrows(), self.ncols());
        let mut out = DMatrix::zeros(m, n);
        let mut e = DVector::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            out.set_column(j, &self.apply(&e));
            e[j] = 0.0;
        }
        out
    }
}

impl JacobianOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }

    fn apply_transpose(&self, u: &DVector<f64>) -> DVector<f64> {
        self.tr_mul(u)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// `F(x)` together with the Jacobian operator at the same point.
#[derive(Debug, Clone)]
pub struct Linearization<J> {
    pub value: DVector<f64>,
    pub jacobian: J,
}

/// A nonlinear map `F: D(F) ⊆ Rⁿ → Rᵐ` with `m ≥ n`.
pub trait NonlinearProblem {
    type Jacobian: JacobianOperator;

    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    fn linearize(&self, x: &DVector<f64>) -> Result<Linearization<Self::Jacobian>>;

    /// The exact solution `x†`, when known.
    fn known_solution(&self) -> Option<&DVector<f64>> {
        None
    }

    /// Domain guard. The default only rejects non-finite entries.
    fn is_admissible(&self, x: &DVector<f64>) -> bool {
        x.iter().all(|v| v.is_finite())
    }

    fn jac_apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("direction", self.input_dim(), v.len())?;
        Ok(self.linearize(x)?.jacobian.apply(v))
    }

    fn jac_transpose_apply(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("adjoint direction", self.output_dim(), u.len())?;
        Ok(self.linearize(x)?.jacobian.apply_transpose(u))
    }
}

/// Observed data `y^δ` with noise level `δ`, i.e. `‖y − y^δ‖ ≤ δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyData {
    pub y_delta: DVector<f64>,
    pub delta: f64,
    pub y_exact: Option<DVector<f64>>,
}

impl NoisyData {
    /// Noise-free data: `y^δ = y`, `δ = 0`.
    pub fn exact(y: DVector<f64>) -> Self {
        Self {
            y_delta: y.clone(),
            delta: 0.0,
            y_exact: Some(y),
        }
    }

    pub fn len(&self) -> usize {
        self.y_delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_delta.is_empty()
    }
}

pub(crate) fn check_point<P: NonlinearProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    data: &NoisyData,
) -> Result<()> {
    check_dim("iterate", problem.input_dim(), x.len())?;
    check_dim("data", problem.output_dim(), data.len())?;
    if !problem.is_admissible(x) {
        return Err(Error::InvalidArgument("iterate outside the problem domain".into()));
    }
    Ok(())
}

/// `f_δ(x) = ½‖F(x) − y^δ‖²`.
pub fn objective<P: NonlinearProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    data: &NoisyData,
) -> Result<f64> {
    check_point(problem, x, data)?;
    let fx = problem.eval(x)?;
    check_dim("F(x)", data.len(), fx.len())?;
    Ok(0.5 * (fx - &data.y_delta).norm_squared())
}

/// `∇f_δ(x) = J(x)ᵀ(F(x) − y^δ)`.
pub fn gradient<P: NonlinearProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    data: &NoisyData,
) -> Result<DVector<f64>> {
    check_point(problem, x, data)?;
    let lin = problem.linearize(x)?;
    check_dim("F(x)", data.len(), lin.value.len())?;
    let residual = &lin.value - &data.y_delta;
    Ok(lin.jacobian.apply_transpose(&residual))
}

/// Everything the outer loops need at an iterate.
pub(crate) struct LocalState<J> {
    pub jacobian: J,
    pub residual: DVector<f64>,
    pub f_value: f64,
    pub gradient: DVector<f64>,
}

pub(crate) fn local_state<P: NonlinearProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    data: &NoisyData,
) -> Result<LocalState<P::Jacobian>> {
    check_point(problem, x, data)?;
    let lin = problem.linearize(x)?;
    check_dim("F(x)", data.len(), lin.value.len())?;
    let residual = lin.value - &data.y_delta;
    let gradient = lin.jacobian.apply_transpose(&residual);
    Ok(LocalState {
        f_value: 0.5 * residual.norm_squared(),
        jacobian: lin.jacobian,
        residual,
        gradient,
    })
}

/// Perturbs `y` by normally distributed noise rescaled to norm exactly `delta`.
///
/// The generator is ChaCha8 seeded with `seed`, so the output is bit-identical
/// across runs and platforms.
pub fn add_noise(y: &DVector<f64>, delta: f64, seed: u64) -> Result<NoisyData> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise level must be finite and non-negative, got {delta}"
        )));
    }
    if delta == 0.0 {
        return Ok(NoisyData::exact(y.clone()));
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("cannot perturb empty data".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = DVector::from_fn(y.len(), |_, _| StandardNormal.sample(&mut rng));
    let norm = noise.norm();
    noise *= delta / norm;
    Ok(NoisyData {
        y_delta: y + noise,
        delta,
        y_exact: Some(y.clone()),
    })
}


#[cfg(test)]
mod tests {
    use super::test_support::LinearMap;
    use super::*;
    use approx::assert_relative_eq;

    fn identity(n: usize) -> LinearMap {
        LinearMap(DMatrix::identity(n, n))
    }

    #[test]
    fn objective_zero_at_data() {
        let p = identity(2);
        let y = DVector::from_vec(vec![0.3, -1.2]);
        let data = NoisyData::exact(y.clone());
        assert_eq!(objective(&p, &y, &data).unwrap(), 0.0);
        assert_eq!(gradient(&p, &y, &data).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn objective_half_norm() {
        let p = identity(2);
        let data = NoisyData::exact(DVector::zeros(2));
        let x = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(objective(&p, &x, &data).unwrap(), 0.5);
    }

    #[test]
    fn gradient_of_diagonal_map() {
        let p = LinearMap(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0])));
        let data = NoisyData::exact(DVector::zeros(2));
        let x = DVector::from_vec(vec![1.0, 1.0]);
        let g = gradient(&p, &x, &data).unwrap();
        assert_eq!(g, DVector::from_vec(vec![4.0, 1.0]));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = identity(2);
        let data = NoisyData::exact(DVector::zeros(2));
        let err = objective(&p, &DVector::zeros(3), &data).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn zero_noise_returns_data() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let d = add_noise(&y, 0.0, 7).unwrap();
        assert_eq!(d.y_delta, y);
        assert_eq!(d.delta, 0.0);
    }

    #[test]
    fn noise_has_exact_norm() {
        let y = DVector::from_fn(400, |i, _| ((i as f64) * 0.37).sin());
        let d = add_noise(&y, 3.0e-2, 11).unwrap();
        let err = (&y - &d.y_delta).norm();
        assert_relative_eq!(err, 3.0e-2, max_relative = 1e-14);
    }

    #[test]
    fn noise_is_deterministic() {
        let y = DVector::from_fn(50, |i, _| i as f64);
        let a = add_noise(&y, 0.1, 3).unwrap();
        let b = add_noise(&y, 0.1, 3).unwrap();
        assert_eq!(a.y_delta.as_slice(), b.y_delta.as_slice());
        let c = add_noise(&y, 0.1, 4).unwrap();
        assert_ne!(a.y_delta.as_slice(), c.y_delta.as_slice());
    }

    #[test]
    fn negative_noise_rejected() {
        let y = DVector::zeros(3);
        assert!(matches!(add_noise(&y, -1.0, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn dense_roundtrip_through_columns() {
        let a = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64);
        struct Wrapped(DMatrix<f64>);
        impl JacobianOperator for Wrapped {
            fn nrows(&self) -> usize {
                self.0.nrows()
            }
            fn ncols(&self) -> usize {
                self.0.ncols()
            }
            fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
                &self.0 * v
            }
            fn apply_transpose(&self, u: &DVector<f64>) -> DVector<f64> {
                self.0.tr_mul(u)
            }
        }
        assert_eq!(Wrapped(a.clone()).to_dense(), a);
    }
}

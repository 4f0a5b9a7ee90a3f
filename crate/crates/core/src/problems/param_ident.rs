//! Identification of the reaction coefficient `c` in
//!
//! ```text
//! −Δu + c u = φ  in (0,1)²,   u = ζ on the boundary,
//! ```
//!
//! discretized by the 5-point stencil on the `N × N` grid `xᵢ = (i−1)/(N−1)`
//! with lexicographic ordering: `F(c) = (A + diag(c))⁻¹ φ̄`.
//!
//! `φ̄ = A ū₀ + c†∘ū₀` is defined discretely from the sampled solution `ū₀`, so
//! `F(c†) = ū₀` holds exactly in the discrete model. The data are `ū = ū₀ − r`
//! with `‖r‖` equal to the requested residual and `J(c†)ᵀ r` as small as the grid
//! allows, which makes `c†` a (near) stationary point with nonzero residual.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::banded::{BandCholesky, BandMatrix};
use crate::error::{check_dim, Error, Result};
use crate::operator::{add_noise, JacobianOperator, Linearization, NoisyData, NonlinearProblem};

/// The coefficient to be identified.
pub fn c_dagger(x: f64, y: f64) -> f64 {
    1.5 * (4.0 * PI * x).sin() * (6.0 * PI * y).sin() + c_smooth(x, y)
}

/// `c†` without its oscillatory part.
pub fn c_smooth(x: f64, y: f64) -> f64 {
    3.0 * ((x - 0.5).powi(2) + (y - 0.5).powi(2)) + 2.0
}

/// The state belonging to `c†`.
pub fn u_exact(x: f64, y: f64) -> f64 {
    16.0 * x * (1.0 - x) * y * (y - 1.0) + 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamIdentConfig {
    pub grid_n: usize,
    pub residual_target: f64,
    pub seed: u64,
}

impl Default for ParamIdentConfig {
    fn default() -> Self {
        Self {
            grid_n: 50,
            residual_target: 0.1,
            seed: 0,
        }
    }
}

/// How the data residual `r = F(c†) − ū` was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualConstruction {
    /// `r ∝ (A + diag c†) e_center`, exact for odd `N` where `u` vanishes at a node.
    CenterNode,
    /// Smallest left singular direction of `J(c†)` by inverse iteration.
    SmallestSingular,
}

#[derive(Debug)]
pub struct ParamIdentProblem {
    config: ParamIdentConfig,
    h: f64,
    laplacian: BandMatrix,
    phi_bar: DVector<f64>,
    u_clean: DVector<f64>,
    u_data: DVector<f64>,
    c_true: DVector<f64>,
    residual: DVector<f64>,
    construction: ResidualConstruction,
    stationarity: f64,
    cache: Mutex<Option<(DVector<f64>, Arc<Factored>)>>,
}

#[derive(Debug)]
struct Factored {
    chol: BandCholesky,
    value: DVector<f64>,
}

/// `J(c) = −(A + diag c)⁻¹ diag(F(c))`, sharing the factorization of `A + diag c`.
#[derive(Debug, Clone)]
pub struct ParamIdentJacobian {
    inner: Arc<Factored>,
}

impl JacobianOperator for ParamIdentJacobian {
    fn nrows(&self) -> usize {
        self.inner.value.len()
    }

    fn ncols(&self) -> usize {
        self.inner.value.len()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        -self.inner.chol.solve(&self.inner.value.component_mul(v))
    }

    fn apply_transpose(&self, u: &DVector<f64>) -> DVector<f64> {
        -self.inner.value.component_mul(&self.inner.chol.solve(u))
    }
}

/// Builds the problem on an `N × N` grid with data residual of norm
/// `residual_target`. `seed` only affects the start of the inverse iteration
/// used for even `N`.
pub fn build_problem61(grid_n: usize, residual_target: f64, seed: u64) -> Result<ParamIdentProblem> {
    ParamIdentProblem::new(ParamIdentConfig {
        grid_n,
        residual_target,
        seed,
    })
}

impl ParamIdentProblem {
    pub fn new(config: ParamIdentConfig) -> Result<Self> {
        let nn = config.grid_n;
        if nn < 3 {
            return Err(Error::InvalidArgument(format!("grid size must be at least 3, got {nn}")));
        }
        if !(config.residual_target >= 0.0) || !config.residual_target.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "residual target must be finite and non-negative, got {}",
                config.residual_target
            )));
        }
        let n = nn * nn;
        let h = 1.0 / (nn - 1) as f64;
        let laplacian = laplacian_5pt(nn, h);
        let coords = |l: usize| {
            let (i, j) = (l % nn, l / nn);
            (i as f64 * h, j as f64 * h)
        };
        let sample = |f: fn(f64, f64) -> f64| {
            DVector::from_fn(n, |l, _| {
                let (x, y) = coords(l);
                f(x, y)
            })
        };
        let c_true = sample(c_dagger);
        let u0 = sample(u_exact);
        let phi_bar = laplacian.mul(&u0) + c_true.component_mul(&u0);

        let mut shifted = laplacian.clone();
        shifted.add_diagonal(&c_true);
        let chol = shifted.clone().cholesky()?;
        let u_clean = chol.solve(&phi_bar);
        let factored = Arc::new(Factored {
            chol,
            value: u_clean.clone(),
        });
        let jac = ParamIdentJacobian {
            inner: factored.clone(),
        };

        let (direction, construction) = if nn % 2 == 1 {
            let mut e = DVector::zeros(n);
            let mid = nn / 2;
            e[mid * nn + mid] = 1.0;
            (shifted.mul(&e), ResidualConstruction::CenterNode)
        } else {
            (
                smallest_left_singular(&shifted, &u_clean, config.seed),
                ResidualConstruction::SmallestSingular,
            )
        };
        let residual = &direction * (config.residual_target / direction.norm());
        let j_norm = operator_norm_estimate(&jac, config.seed);
        let stationarity = if config.residual_target > 0.0 {
            jac.apply_transpose(&residual).norm() / (j_norm * residual.norm())
        } else {
            0.0
        };
        let u_data = &u_clean - &residual;

        Ok(Self {
            config,
            h,
            laplacian,
            phi_bar,
            u_clean,
            u_data,
            cache: Mutex::new(Some((c_true.clone(), factored))),
            c_true,
            residual,
            construction,
            stationarity,
        })
    }

    pub fn config(&self) -> &ParamIdentConfig {
        &self.config
    }

    pub fn grid_n(&self) -> usize {
        self.config.grid_n
    }

    pub fn mesh_width(&self) -> f64 {
        self.h
    }

    pub fn phi_bar(&self) -> &DVector<f64> {
        &self.phi_bar
    }

    /// `ū₀ = F(c†)`.
    pub fn u_clean(&self) -> &DVector<f64> {
        &self.u_clean
    }

    /// The data `ū`.
    pub fn u_data(&self) -> &DVector<f64> {
        &self.u_data
    }

    pub fn c_true(&self) -> &DVector<f64> {
        &self.c_true
    }

    /// `r = F(c†) − ū`.
    pub fn data_residual(&self) -> &DVector<f64> {
        &self.residual
    }

    pub fn residual_construction(&self) -> ResidualConstruction {
        self.construction
    }

    /// `‖J(c†)ᵀr‖ / (‖J(c†)‖ ‖r‖)` achieved by the construction.
    pub fn stationarity(&self) -> f64 {
        self.stationarity
    }

    /// `A` applied to a vector.
    pub fn laplacian_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.laplacian.mul(v)
    }

    /// Starting guess: the smooth part `3((x−½)² + (y−½)²) + 2` of `c†`.
    pub fn initial_guess(&self) -> DVector<f64> {
        let nn = self.config.grid_n;
        DVector::from_fn(nn * nn, |l, _| {
            c_smooth((l % nn) as f64 * self.h, (l / nn) as f64 * self.h)
        })
    }

    /// Data `ū` perturbed by noise of norm exactly `delta`.
    pub fn noisy_data(&self, delta: f64, seed: u64) -> Result<NoisyData> {
        add_noise(&self.u_data, delta, seed)
    }

    fn factor(&self, c: &DVector<f64>) -> Result<Arc<Factored>> {
        check_dim("coefficient", self.c_true.len(), c.len())?;
        if let Some((cached_c, f)) = self.cache.lock().expect("cache lock").as_ref() {
            if cached_c == c {
                return Ok(f.clone());
            }
        }
        if !c.iter().all(|v| v.is_finite()) {
            return Err(Error::Evaluation("non-finite coefficient".into()));
        }
        let mut m = self.laplacian.clone();
        m.add_diagonal(c);
        let chol = m.cholesky()?;
        let value = chol.solve(&self.phi_bar);
        let f = Arc::new(Factored { chol, value });
        *self.cache.lock().expect("cache lock") = Some((c.clone(), f.clone()));
        Ok(f)
    }
}

impl NonlinearProblem for ParamIdentProblem {
    type Jacobian = ParamIdentJacobian;

    fn input_dim(&self) -> usize {
        self.c_true.len()
    }

    fn output_dim(&self) -> usize {
        self.c_true.len()
    }

    fn eval(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.factor(c)?.value.clone())
    }

    fn linearize(&self, c: &DVector<f64>) -> Result<Linearization<ParamIdentJacobian>> {
        let inner = self.factor(c)?;
        Ok(Linearization {
            value: inner.value.clone(),
            jacobian: ParamIdentJacobian { inner },
        })
    }

    fn known_solution(&self) -> Option<&DVector<f64>> {
        Some(&self.c_true)
    }
}

/// `(1/h²)(T⊗I + I⊗T)` with `T = tridiag(−1, 2, −1)`, half bandwidth `N`.
fn laplacian_5pt(nn: usize, h: f64) -> BandMatrix {
    let n = nn * nn;
    let s = 1.0 / (h * h);
    let mut a = BandMatrix::zeros(n, nn);
    for l in 0..n {
        a.set(l, l, 4.0 * s);
        if l % nn > 0 {
            a.set(l, l - 1, -s);
        }
        if l >= nn {
            a.set(l, l - nn, -s);
        }
    }
    a
}

/// Unit vector `r` minimizing `‖J(c†)ᵀr‖/‖r‖`, by power iteration on
/// `(J Jᵀ)⁻¹ = M D⁻² M` with `M = A + diag c†`, `D = diag(F(c†))`.
fn smallest_left_singular(m: &BandMatrix, f: &DVector<f64>, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = DVector::from_fn(f.len(), |_, _| StandardNormal.sample(&mut rng));
    r /= r.norm();
    let d2 = f.map(|v| 1.0 / (v * v));
    let mut rayleigh = 0.0;
    for _ in 0..2000 {
        let next = m.mul(&m.mul(&r).component_mul(&d2));
        let rq = r.dot(&next);
        r = &next / next.norm();
        if (rq - rayleigh).abs() <= 1e-14 * rq.abs() {
            break;
        }
        rayleigh = rq;
    }
    r
}

/// `‖J‖` by power iteration on `JᵀJ`.
fn operator_norm_estimate<J: JacobianOperator>(jac: &J, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1_e995);
    let mut v = DVector::from_fn(jac.ncols(), |_, _| StandardNormal.sample(&mut rng));
    v /= v.norm();
    let mut sigma = 0.0;
    for _ in 0..100 {
        let w = jac.apply_transpose(&jac.apply(&v));
        let est = w.norm().sqrt();
        v = &w / w.norm();
        if (est - sigma).abs() <= 1e-10 * est {
            sigma = est;
            break;
        }
        sigma = est;
    }
    sigma
}

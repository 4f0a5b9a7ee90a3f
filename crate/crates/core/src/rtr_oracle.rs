//! Dense counterpart of LTR (RTR): `B^{1/2}` from a full SVD of `J`, and the
//! trust-region subproblem in the whole space. Only meant for problems small
//! enough to materialize `J`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::driver::{self, LocalModel, ModelFactory, Trial};
use crate::error::{check_dim, Error, Result};
use crate::gklb::Bidiagonalization;
use crate::krylov_sqrt::{s_tilde_with, small_svd, SmallSvd};
use crate::ltr_solver::{IterationSink, NoSink, SolverConfig, SolverResult};
use crate::operator::{JacobianOperator, NoisyData, NonlinearProblem};
use crate::trs::{cauchy_decrease_bound, recover_step, solve_spectral, SecularConfig};

/// Largest `n` for which a Jacobian is materialized.
pub const DENSE_CAP: usize = 3000;

/// `J = U diag(S) Vᵀ` (thin, `S` decreasing); `B^{1/2} = V diag(S) Vᵀ`.
#[derive(Debug, Clone)]
pub struct DenseDecomposition {
    pub svd: SmallSvd,
}

impl DenseDecomposition {
    pub fn new(j: &DMatrix<f64>) -> Result<Self> {
        if j.ncols() > DENSE_CAP {
            return Err(Error::DenseCapExceeded {
                n: j.ncols(),
                cap: DENSE_CAP,
            });
        }
        if j.nrows() < j.ncols() {
            return Err(Error::InvalidArgument(format!(
                "dense oracle needs m ≥ n, got {}×{}",
                j.nrows(),
                j.ncols()
            )));
        }
        Ok(Self { svd: small_svd(j) })
    }

    pub fn from_operator<J: JacobianOperator + ?Sized>(jac: &J) -> Result<Self> {
        if jac.ncols() > DENSE_CAP {
            return Err(Error::DenseCapExceeded {
                n: jac.ncols(),
                cap: DENSE_CAP,
            });
        }
        Self::new(&jac.to_dense())
    }

    pub fn dim(&self) -> usize {
        self.svd.v.nrows()
    }

    pub fn sigma_max(&self) -> f64 {
        self.svd.sigma_max()
    }

    /// `B = JᵀJ` as a dense matrix.
    pub fn gram(&self) -> DMatrix<f64> {
        let s2 = self.svd.s.map(|s| s * s);
        &self.svd.v * DMatrix::from_diagonal(&s2) * self.svd.v.transpose()
    }

    /// `‖J − U S Vᵀ‖_F`.
    pub fn reconstruction_residual(&self, j: &DMatrix<f64>) -> f64 {
        (j - &self.svd.u * DMatrix::from_diagonal(&self.svd.s) * self.svd.v.transpose()).norm()
    }
}

/// `B^{1/2} b = V diag(S) Vᵀ b`.
pub fn exact_sqrt_apply(dec: &DenseDecomposition, b: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("vector", dec.dim(), b.len())?;
    Ok(dec.svd.gram_power_apply(1, b))
}

/// Solution of the full-space subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTrs {
    pub z: DVector<f64>,
    pub lambda: f64,
    pub p: DVector<f64>,
    pub active: bool,
    pub newton_iters: usize,
    /// `ẑ = Vᵀz`.
    pub coeffs: DVector<f64>,
}

/// Solves `(B² + λI) z = −B^{1/2} g`, `‖z‖ ≤ Δ`, then `p = B^{1/2} z`.
pub fn exact_trs(
    dec: &DenseDecomposition,
    g: &DVector<f64>,
    delta: f64,
    cfg: &SecularConfig,
) -> Result<ExactTrs> {
    check_dim("gradient", dec.dim(), g.len())?;
    let r = dec.svd.v.tr_mul(g);
    let sol = solve_spectral(&dec.svd.s, &r, delta, cfg)?;
    let z = &dec.svd.v * &sol.coeffs;
    let p = &dec.svd.v * sol.coeffs.component_mul(&dec.svd.s);
    Ok(ExactTrs {
        z,
        lambda: sol.lambda,
        p,
        active: sol.active,
        newton_iters: sol.newton_iters,
        coeffs: sol.coeffs,
    })
}

/// Backward error of `(B² + λI)z = −B^{1/2}g` computed with dense matrices:
/// the residual norm over `(‖B‖² + λ)‖z‖ + ‖B^{1/2}g‖`.
pub fn exact_kkt_residual(dec: &DenseDecomposition, g: &DVector<f64>, sol: &ExactTrs) -> f64 {
    let b = dec.gram();
    let rhs = dec.svd.gram_power_apply(1, g);
    let lhs = &b * (&b * &sol.z) + &sol.z * sol.lambda;
    let scale = (dec.svd.gram_norm().powi(2) + sol.lambda) * sol.z.norm() + rhs.norm();
    (lhs + &rhs).norm() / scale
}

struct RtrModel {
    dec: DenseDecomposition,
    r: DVector<f64>,
    g_norm: f64,
    s_tilde_norm: f64,
}

impl LocalModel for RtrModel {
    fn ell(&self) -> usize {
        self.dec.dim()
    }

    fn s_tilde_norm(&self) -> f64 {
        self.s_tilde_norm
    }

    fn j_norm_est(&self) -> f64 {
        self.dec.sigma_max()
    }

    fn step3_bound(&self, q: f64) -> f64 {
        (1.0 - q) * self.s_tilde_norm / self.dec.svd.gram_norm().powi(2)
    }

    fn cauchy_bound(&self, delta: f64) -> f64 {
        // t̃ = gᵀBg/‖g‖²
        let t_tilde = self.r.component_mul(&self.dec.svd.s).norm_squared() / self.g_norm.powi(2);
        cauchy_decrease_bound(t_tilde, self.g_norm, delta, self.dec.svd.gram_norm())
    }

    fn rank_one_norm(&self) -> f64 {
        0.0
    }

    fn solve(&self, delta: f64, cfg: &SecularConfig) -> Result<Trial> {
        let s = &self.dec.svd.s;
        let sol = solve_spectral(s, &self.r, delta, cfg)?;
        let sp = sol.coeffs.component_mul(s);
        // model ½‖r + Jp‖² − f = gᵀp + ½‖Jp‖², in the V basis
        let jp2 = sp.component_mul(s).norm_squared();
        let predicted = -(self.r.dot(&sp) + 0.5 * jp2);
        let mut m = sp.component_mul(&s.map(|v| v * v));
        m += &self.r;
        Ok(Trial {
            p: &self.dec.svd.v * sp,
            lambda: sol.lambda,
            newton_iters: sol.newton_iters,
            predicted,
            q_ratio: m.norm() / self.g_norm,
        })
    }
}

struct RtrFactory;

impl<J: JacobianOperator> ModelFactory<J> for RtrFactory {
    type Model = RtrModel;

    fn build(&mut self, jacobian: &J, gradient: &DVector<f64>, _ell: usize) -> Result<RtrModel> {
        let dec = DenseDecomposition::from_operator(jacobian)?;
        let r = dec.svd.v.tr_mul(gradient);
        let s_tilde_norm = r.component_mul(&dec.svd.s).norm();
        Ok(RtrModel {
            dec,
            r,
            g_norm: gradient.norm(),
            s_tilde_norm,
        })
    }
}

/// Runs the dense method from `x0`; the configuration is shared with LTR
/// (the Krylov schedule and reorthogonalization settings are ignored).
pub fn rtr_solve<P: NonlinearProblem + ?Sized>(
    problem: &P,
    data: &NoisyData,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    rtr_solve_with(problem, data, x0, cfg, &mut NoSink)
}

pub fn rtr_solve_with<P: NonlinearProblem + ?Sized>(
    problem: &P,
    data: &NoisyData,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    sink: &mut dyn IterationSink,
) -> Result<SolverResult> {
    if problem.input_dim() > DENSE_CAP {
        return Err(Error::DenseCapExceeded {
            n: problem.input_dim(),
            cap: DENSE_CAP,
        });
    }
    driver::run(problem, data, x0, cfg, &mut RtrFactory, sink)
}

/// Relative errors of the Krylov quantities against the dense ones at the same
/// `x_k` and `Δ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareMetrics {
    /// `‖s̃ − B^{1/2}g‖ / ‖B^{1/2}g‖`
    pub err_r: f64,
    /// `‖p − p_ex‖ / ‖p_ex‖`
    pub err_p: f64,
}

/// Secular tolerance used for the reference step; tight so that `err_p`
/// measures the projection, not the stopping rule.
pub fn reference_secular() -> SecularConfig {
    SecularConfig {
        psi_tol: 1e-12,
        max_newton: 500,
    }
}

/// Compares an LTR step (factorization `bid` started at `g`, step `p`) with the
/// exact step at the same radius. Both steps are recomputed with the tight
/// [`reference_secular`] tolerance unless `p_ltr` is given.
pub fn compare_metrics(
    bid: &Bidiagonalization,
    svd: &SmallSvd,
    dec: &DenseDecomposition,
    g: &DVector<f64>,
    delta: f64,
    p_ltr: Option<&DVector<f64>>,
) -> Result<CompareMetrics> {
    let g_norm = g.norm();
    let st = s_tilde_with(bid, svd, g_norm)?;
    let exact_st = exact_sqrt_apply(dec, g)?;
    let denom_r = exact_st.norm();
    if denom_r == 0.0 {
        return Err(Error::UndefinedMetric("B^{1/2}g vanishes"));
    }
    let cfg = reference_secular();
    let p = match p_ltr {
        Some(p) => p.clone(),
        None => {
            let kkt = crate::trs::secular_newton(svd, g_norm, delta, &cfg)?;
            recover_step(bid, svd, &kkt.w)?.1
        }
    };
    let p_ex = exact_trs(dec, g, delta, &cfg)?.p;
    let denom_p = p_ex.norm();
    if denom_p == 0.0 {
        return Err(Error::UndefinedMetric("exact step vanishes"));
    }
    Ok(CompareMetrics {
        err_r: (st - exact_st).norm() / denom_r,
        err_p: (p - p_ex).norm() / denom_p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectNorm {
    Frobenius,
    Spectral,
}

/// `‖Q TᵀT Qᵀ − Q Qᵀ B‖`, zero when `ℓ = n`.
pub fn factorization_defect(bid: &Bidiagonalization, b: &DMatrix<f64>, norm: DefectNorm) -> f64 {
    let q = &bid.q;
    let gram = bid.gram().to_dense();
    let defect = q * gram * q.transpose() - q * (q.transpose() * b);
    match norm {
        DefectNorm::Frobenius => defect.norm(),
        DefectNorm::Spectral => spectral_norm(&defect),
    }
}

/// Largest singular value by power iteration on `DᵀD`.
fn spectral_norm(d: &DMatrix<f64>) -> f64 {
    let n = d.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618).sin() * 0.5);
    v /= v.norm();
    let mut sigma = 0.0;
    for _ in 0..300 {
        let w = d.tr_mul(&(d * &v));
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let est = nw.sqrt();
        v = w / nw;
        if (est - sigma).abs() <= 1e-12 * est {
            return est;
        }
        sigma = est;
    }
    sigma
}

//! Projected trust-region subproblem
//!
//! ```text
//! min_w  Φ(w) = ½ wᵀ(TᵀT)²w + ‖g‖ wᵀ(TᵀT)^{1/2}e₁ + f    s.t. ‖w‖ ≤ Δ
//! ```
//!
//! In the right singular basis of `T` (`TᵀT = V S² Vᵀ`) the KKT system
//! `[(TᵀT)² + λI] w = −‖g‖ (TᵀT)^{1/2} e₁` is diagonal:
//!
//! ```text
//! ŵᵢ(λ) = −sᵢ rᵢ / (sᵢ⁴ + λ),   r = ‖g‖ Vᵀe₁,   w = V ŵ.
//! ```
//!
//! The same diagonal form, with `s` the singular values of `J` and `r = Vᵀg`,
//! solves the full-space subproblem of the dense oracle, so both share
//! [`solve_spectral`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gklb::Bidiagonalization;
use crate::krylov_sqrt::{SmallSvd, SINGULAR_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SecularConfig {
    /// Stop once `|ψ(λ)|` drops below this. For `Δ > 1` the bound is scaled by
    /// `1/Δ` so that the returned `‖w‖` stays within a relative `psi_tol` of `Δ`.
    pub psi_tol: f64,
    pub max_newton: usize,
}

impl Default for SecularConfig {
    fn default() -> Self {
        Self {
            psi_tol: 1e-2,
            max_newton: 50,
        }
    }
}

impl SecularConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.psi_tol > 0.0) || self.max_newton == 0 {
            return Err(Error::InvalidArgument(format!(
                "secular tolerance must be positive and max_newton nonzero, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Tolerance on `|ψ|` actually used for radius `delta`.
    pub fn effective_tol(&self, delta: f64) -> f64 {
        self.psi_tol * (1.0 / delta).min(1.0)
    }
}

/// Solution of the projected subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub w: DVector<f64>,
    pub lambda: f64,
    /// Whether the trust-region constraint is active (`λ > 0`).
    pub active: bool,
    pub newton_iters: usize,
    /// Every `λ` visited by Newton's method, starting with `λ₀ = 0`.
    pub lambda_history: Vec<f64>,
}

/// Secular solution expressed in the diagonalizing basis.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SpectralSolution {
    pub coeffs: DVector<f64>,
    pub lambda: f64,
    pub active: bool,
    pub newton_iters: usize,
    pub lambda_history: Vec<f64>,
}

/// Relative radius mismatch `|ψ|Δ` accepted when Newton can make no progress.
const STALL_RELATIVE: f64 = 64.0 * f64::EPSILON;

/// `ŵ(λ)`; at `λ = 0` components with `sᵢ ≤ 1e-14·s₁` are set to zero
/// (minimum-norm solution).
fn coeffs_at(s: &DVector<f64>, r: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let cut = SINGULAR_TOL * s.iter().fold(0.0f64, |a, &b| a.max(b));
    DVector::from_fn(s.len(), |i, _| {
        let si = s[i];
        if lambda == 0.0 && si <= cut {
            0.0
        } else {
            -si * r[i] / (si.powi(4) + lambda)
        }
    })
}

/// `ψ(λ)` and `ψ'(λ)` along with `ŵ(λ)`.
fn psi_and_derivative(
    s: &DVector<f64>,
    r: &DVector<f64>,
    lambda: f64,
    delta: f64,
) -> (DVector<f64>, f64, f64) {
    let c = coeffs_at(s, r, lambda);
    let norm = c.norm();
    // Σ sᵢ²rᵢ²/(sᵢ⁴+λ)³ = Σ ŵᵢ²/(sᵢ⁴+λ)
    let weighted: f64 = c
        .iter()
        .zip(s.iter())
        .filter(|(ci, _)| **ci != 0.0)
        .map(|(ci, si)| ci * ci / (si.powi(4) + lambda))
        .sum();
    let psi = 1.0 / norm - 1.0 / delta;
    let dpsi = weighted / norm.powi(3);
    (c, psi, dpsi)
}

/// Newton's method on `ψ(λ) = 1/‖ŵ(λ)‖ − 1/Δ`.
///
/// `ψ` is increasing and concave in `λ`, so Newton started at `λ₀ = 0` (below
/// the root whenever the constraint is active) produces increasing iterates
/// that never overshoot.
pub(crate) fn solve_spectral(
    s: &DVector<f64>,
    r: &DVector<f64>,
    delta: f64,
    cfg: &SecularConfig,
) -> Result<SpectralSolution> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "trust-region radius must be positive, got {delta}"
        )));
    }
    cfg.validate()?;
    let tol = cfg.effective_tol(delta);
    let (c0, psi0, dpsi0) = psi_and_derivative(s, r, 0.0, delta);
    let mut history = vec![0.0];
    if c0.norm() == 0.0 || psi0 > -tol {
        // interior minimum-norm solution, or on the boundary within tolerance
        return Ok(SpectralSolution {
            active: c0.norm() > 0.0 && psi0 <= 0.0,
            coeffs: c0,
            lambda: 0.0,
            newton_iters: 0,
            lambda_history: history,
        });
    }
    let (mut lambda, mut psi, mut dpsi) = (0.0, psi0, dpsi0);
    for it in 1..=cfg.max_newton {
        let next = lambda - psi / dpsi;
        if !(next > lambda) || !next.is_finite() {
            // the radius is matched to roundoff but the absolute tolerance is
            // out of reach (tiny Δ makes ψ ~ 1/Δ)
            if it > 1 && psi.abs() * delta <= STALL_RELATIVE {
                return Ok(SpectralSolution {
                    coeffs: coeffs_at(s, r, lambda),
                    lambda,
                    active: true,
                    newton_iters: it - 1,
                    lambda_history: history,
                });
            }
            return Err(Error::NonConvergence {
                iterations: it,
                lambda,
                psi,
            });
        }
        lambda = next;
        history.push(lambda);
        let (c, p, dp) = psi_and_derivative(s, r, lambda, delta);
        psi = p;
        dpsi = dp;
        if psi.abs() < tol {
            return Ok(SpectralSolution {
                coeffs: c,
                lambda,
                active: true,
                newton_iters: it,
                lambda_history: history,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_newton,
        lambda,
        psi,
    })
}

/// `r = ‖g‖ Vᵀe₁`.
fn projected_weights(svd: &SmallSvd, g_norm: f64) -> DVector<f64> {
    svd.v_first_row() * g_norm
}

/// `w(λ)` and `‖w(λ)‖` in closed form.
pub fn solve_w(lambda: f64, svd: &SmallSvd, g_norm: f64) -> Result<(DVector<f64>, f64)> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    if lambda == 0.0 && !svd.is_nonsingular() {
        return Err(Error::Singular("w(0) requested with singular T".into()));
    }
    let c = coeffs_at(&svd.s, &projected_weights(svd, g_norm), lambda);
    let norm = c.norm();
    Ok((&svd.v * c, norm))
}

/// Solves the projected subproblem for radius `delta`.
///
/// Returns `λ = 0` with the (minimum-norm) unconstrained minimizer when it lies
/// inside the region; otherwise Newton's method from `λ = 0` on the secular
/// equation until `|ψ| < psi_tol`.
pub fn secular_newton(
    svd: &SmallSvd,
    g_norm: f64,
    delta: f64,
    cfg: &SecularConfig,
) -> Result<KktSolution> {
    if !(g_norm > 0.0) {
        return Err(Error::InvalidArgument(format!("gradient norm must be positive, got {g_norm}")));
    }
    let sol = solve_spectral(&svd.s, &projected_weights(svd, g_norm), delta, cfg)?;
    Ok(KktSolution {
        w: &svd.v * sol.coeffs,
        lambda: sol.lambda,
        active: sol.active,
        newton_iters: sol.newton_iters,
        lambda_history: sol.lambda_history,
    })
}

/// `ψ(λ) = 1/‖w(λ)‖ − 1/Δ`.
pub fn psi(svd: &SmallSvd, g_norm: f64, delta: f64, lambda: f64) -> f64 {
    let c = coeffs_at(&svd.s, &projected_weights(svd, g_norm), lambda);
    1.0 / c.norm() - 1.0 / delta
}

/// `z = Q w` and `p = Q (TᵀT)^{1/2} w`.
pub fn recover_step(
    bid: &Bidiagonalization,
    svd: &SmallSvd,
    w: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim("projected step", bid.ell(), w.len())?;
    let z = &bid.q * w;
    let p = &bid.q * svd.gram_power_apply(1, w);
    Ok((z, p))
}

/// `Φ(w) = ½‖(TᵀT) w‖² + ‖g‖ wᵀ(TᵀT)^{1/2}e₁ + f`.
pub fn model_phi(w: &DVector<f64>, svd: &SmallSvd, g_norm: f64, f_val: f64) -> f64 {
    let hw = svd.gram_power_apply(2, w);
    let grad0 = model_gradient_at_zero(svd, g_norm);
    0.5 * hw.norm_squared() + w.dot(&grad0) + f_val
}

/// `∇Φ(0) = ‖g‖ (TᵀT)^{1/2} e₁`.
pub fn model_gradient_at_zero(svd: &SmallSvd, g_norm: f64) -> DVector<f64> {
    crate::krylov_sqrt::s_tilde_coeffs(svd, g_norm)
}

/// Minimizer of `Φ` along `−∇Φ(0)` inside the ball of radius `delta`.
pub fn cauchy_point(svd: &SmallSvd, g_norm: f64, delta: f64) -> DVector<f64> {
    let c = model_gradient_at_zero(svd, g_norm);
    let cn = c.norm();
    if cn == 0.0 {
        return DVector::zeros(c.len());
    }
    let curvature = svd.gram_power_apply(2, &c).norm_squared();
    let boundary = delta / cn;
    let alpha = if curvature > 0.0 {
        (cn * cn / curvature).min(boundary)
    } else {
        boundary
    };
    c * -alpha
}

/// Lower bound `½ t̃^{1/2}‖g‖ min{Δ, t̃^{1/2}‖g‖/‖TᵀT‖²}` on the Cauchy
/// decrease, with `t̃ = e₁ᵀTᵀTe₁ = α₁²`.
pub fn cauchy_decrease_bound(t_tilde: f64, g_norm: f64, delta: f64, gram_norm: f64) -> f64 {
    let root = t_tilde.sqrt();
    0.5 * root * g_norm * delta.min(root * g_norm / (gram_norm * gram_norm))
}

/// `‖Qᵀ(Bp + g)‖ = ‖TᵀT(TᵀT)^{1/2} w + ‖g‖e₁‖`.
pub fn projected_model_norm(svd: &SmallSvd, w: &DVector<f64>, g_norm: f64) -> f64 {
    let mut m = svd.gram_power_apply(3, w);
    m[0] += g_norm;
    m.norm()
}

/// `Qᵀ m(p) = TᵀT(TᵀT)^{1/2} w + ‖g‖e₁` as a vector.
pub fn projected_model(svd: &SmallSvd, w: &DVector<f64>, g_norm: f64) -> DVector<f64> {
    let mut m = svd.gram_power_apply(3, w);
    m[0] += g_norm;
    m
}

/// `‖β_ℓ² Tᵀe_ℓ e_ℓᵀT‖ = β_ℓ² α_ℓ²`, the dropped rank-one part of `Qᵀ B² Q`.
pub fn rank_one_norm(bid: &Bidiagonalization) -> f64 {
    let alpha = bid.alphas.last().copied().unwrap_or(0.0);
    let beta = bid.beta_last();
    beta * beta * alpha * alpha
}

/// Upper bound `(1−q)‖(TᵀT)^{1/2}Qᵀg‖/‖TᵀT‖²` on the radius that guarantees
/// the projected q-condition.
pub fn step3_radius_bound(svd: &SmallSvd, g_norm: f64, q: f64) -> f64 {
    let st = model_gradient_at_zero(svd, g_norm).norm();
    (1.0 - q) * st / svd.gram_norm().powi(2)
}

/// Backward error of the KKT system `[(TᵀT)² + λI]w = −‖g‖(TᵀT)^{1/2}e₁`,
/// evaluated with the explicitly squared gram matrix: the residual norm over
/// `(‖TᵀT‖² + λ)‖w‖ + ‖rhs‖`.
pub fn kkt_residual(gram: &DMatrix<f64>, svd: &SmallSvd, w: &DVector<f64>, lambda: f64, g_norm: f64) -> f64 {
    let rhs = model_gradient_at_zero(svd, g_norm);
    let lhs = gram * (gram * w) + w * lambda;
    let scale = (gram.norm().powi(2) + lambda) * w.norm() + rhs.norm();
    (lhs + &rhs).norm() / scale
}

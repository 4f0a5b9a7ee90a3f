//! Golub-Kahan-Lanczos partial bidiagonalization.
//!
//! Starting from `q₁`, `ℓ` steps of
//!
//! ```text
//! α_j p_j     = A q_j − β_{j−1} p_{j−1}
//! β_j q_{j+1} = Aᵀ p_j − α_j q_j
//! ```
//!
//! produce `A Q_ℓ = P_ℓ T_ℓ` and `Aᵀ P_ℓ = Q_ℓ T_ℓᵀ + β_ℓ q_{ℓ+1} e_ℓᵀ` with `T_ℓ`
//! upper bidiagonal (`α` on the diagonal, `β` above it). Consequently
//! `Q_ℓᵀ (AᵀA) Q_ℓ = T_ℓᵀ T_ℓ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::operator::JacobianOperator;

/// Relative threshold (against the running norm estimate) below which `α_j`
/// or `β_j` is treated as zero.
pub const BREAKDOWN_TOL: f64 = 1e-14;

/// Above this Krylov dimension the automatic policy switches from full to
/// partial reorthogonalization.
pub const FULL_REORTH_MAX_ELL: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReorthMode {
    None,
    Full,
    /// Omega-recurrence monitoring; reorthogonalize only when the estimated
    /// loss of orthogonality exceeds the threshold.
    Partial,
    /// Full for `ℓ ≤ 200`, partial above.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReorthPolicy {
    pub mode: ReorthMode,
    pub eta_threshold: f64,
}

impl ReorthPolicy {
    pub fn full() -> Self {
        Self {
            mode: ReorthMode::Full,
            eta_threshold: f64::EPSILON.sqrt(),
        }
    }

    pub fn none() -> Self {
        Self {
            mode: ReorthMode::None,
            eta_threshold: f64::EPSILON.sqrt(),
        }
    }

    pub fn partial(eta_threshold: f64) -> Self {
        Self {
            mode: ReorthMode::Partial,
            eta_threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta_threshold > 0.0 && self.eta_threshold < 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "reorthogonalization threshold must lie in (0, 1), got {}",
                self.eta_threshold
            )))
        }
    }

    /// Concrete mode used for a factorization of dimension `ell`.
    pub fn resolve(&self, ell: usize) -> ReorthMode {
        match self.mode {
            ReorthMode::Auto if ell <= FULL_REORTH_MAX_ELL => ReorthMode::Full,
            ReorthMode::Auto => ReorthMode::Partial,
            mode => mode,
        }
    }
}

impl Default for ReorthPolicy {
    fn default() -> Self {
        Self {
            mode: ReorthMode::Auto,
            eta_threshold: f64::EPSILON.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownKind {
    Alpha,
    Beta,
}

/// Where the recurrence stopped early. `index` is the 1-based step `j` at
/// which `α_j` or `β_j` vanished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breakdown {
    pub index: usize,
    pub kind: BreakdownKind,
}

/// Output of [`gklb`].
#[derive(Debug, Clone)]
pub struct Bidiagonalization {
    /// `α₁ … α_ℓ`.
    pub alphas: Vec<f64>,
    /// `β₁ … β_ℓ`; the last entry couples `T_ℓ` to `q_{ℓ+1}` and is not part of `T_ℓ`.
    pub betas: Vec<f64>,
    /// `Q_ℓ`, `n × ℓ`.
    pub q: DMatrix<f64>,
    /// `P_ℓ`, `m × ℓ`.
    pub p: DMatrix<f64>,
    /// Unit `q_{ℓ+1}`; zero when the factorization ended on a `β` breakdown.
    pub q_next: DVector<f64>,
    pub breakdown: Option<Breakdown>,
    /// `‖q₁‖` of the unnormalized start vector.
    pub start_norm: f64,
    /// Largest `α` seen, used as `‖A‖` estimate for tolerances.
    pub norm_estimate: f64,
    /// Number of explicit reorthogonalization passes performed.
    pub reorthogonalizations: usize,
    pub mode: ReorthMode,
}

impl Bidiagonalization {
    pub fn ell(&self) -> usize {
        self.alphas.len()
    }

    /// `β_ℓ`.
    pub fn beta_last(&self) -> f64 {
        self.betas.last().copied().unwrap_or(0.0)
    }

    /// The `ℓ × ℓ` upper bidiagonal `T_ℓ`.
    pub fn bidiagonal(&self) -> DMatrix<f64> {
        bidiagonal_matrix(&self.alphas, &self.betas)
    }

    pub fn gram(&self) -> SymTridiagonal {
        tridiagonal_gram(&self.alphas, &self.betas)
    }
}

pub(crate) fn bidiagonal_matrix(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let ell = alphas.len();
    let mut t = DMatrix::zeros(ell, ell);
    for j in 0..ell {
        t[(j, j)] = alphas[j];
        if j + 1 < ell {
            t[(j, j + 1)] = betas[j];
        }
    }
    t
}

/// A symmetric tridiagonal matrix stored by its diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut out = DMatrix::from_diagonal(&DVector::from_column_slice(&self.diag));
        for (j, &v) in self.off.iter().enumerate() {
            out[(j, j + 1)] = v;
            out[(j + 1, j)] = v;
        }
        debug_assert_eq!(out.nrows(), n);
        out
    }
}

/// `T_ℓᵀ T_ℓ` for the upper bidiagonal with diagonal `alphas` and
/// superdiagonal `betas[..ℓ−1]`.
///
/// Diagonal entries are `α_j² + β_{j−1}²` (with `β₀ = 0`), off-diagonal entries
/// are `α_j β_j`.
pub fn tridiagonal_gram(alphas: &[f64], betas: &[f64]) -> SymTridiagonal {
    let ell = alphas.len();
    let diag = (0..ell)
        .map(|j| {
            let prev = if j > 0 { betas[j - 1] } else { 0.0 };
            alphas[j] * alphas[j] + prev * prev
        })
        .collect();
    let off = (0..ell.saturating_sub(1)).map(|j| alphas[j] * betas[j]).collect();
    SymTridiagonal { diag, off }
}

/// Runs `ell` steps of Golub-Kahan-Lanczos bidiagonalization of `a` from `q1`.
///
/// Stops early when `α_j` or `β_j` falls below `1e-14·‖A‖est`; the returned
/// factorization is then truncated and flagged. A `β_j` breakdown keeps step `j`
/// (the Krylov space is invariant), an `α_j` breakdown keeps `j − 1` steps.
pub fn gklb<A: JacobianOperator + ?Sized>(
    a: &A,
    q1: &DVector<f64>,
    ell: usize,
    policy: ReorthPolicy,
) -> Result<Bidiagonalization> {
    let (m, n) = (a.nrows(), a.ncols());
    check_dim("Lanczos start vector", n, q1.len())?;
    if ell == 0 || ell > n {
        return Err(Error::InvalidArgument(format!(
            "Lanczos dimension must lie in 1..={n}, got {ell}"
        )));
    }
    policy.validate()?;
    let start_norm = q1.norm();
    if start_norm == 0.0 || !start_norm.is_finite() {
        return Err(Error::InvalidStart);
    }
    let mode = policy.resolve(ell);
    let eps = f64::EPSILON;

    let mut qs: Vec<DVector<f64>> = vec![q1 / start_norm];
    let mut ps: Vec<DVector<f64>> = Vec::with_capacity(ell);
    let mut alphas: Vec<f64> = Vec::with_capacity(ell);
    let mut betas: Vec<f64> = Vec::with_capacity(ell);
    let mut q_next = DVector::zeros(n);
    let mut breakdown = None;
    let mut norm_est: f64 = 0.0;
    let mut reorths = 0usize;

    // omega-recurrence state for partial reorthogonalization:
    // nu[k] ≈ q_jᵀ q_k (k < j), mu[k] ≈ p_{j−1}ᵀ p_k (k < j−1)
    let mut nu: Vec<f64> = Vec::new();
    let mut mu: Vec<f64> = Vec::new();
    let mut force_p = false;
    let mut force_q = false;

    for j in 0..ell {
        let beta_prev = if j > 0 { betas[j - 1] } else { 0.0 };
        let mut pj = a.apply(&qs[j]);
        if j > 0 {
            pj.axpy(-beta_prev, &ps[j - 1], 1.0);
        }
        let mut alpha = pj.norm();

        let mut new_mu = Vec::new();
        match mode {
            ReorthMode::Full => {
                orthogonalize(&mut pj, &ps);
                reorths += 1;
                alpha = pj.norm();
            }
            ReorthMode::Partial if j > 0 && alpha > 0.0 => {
                new_mu = (0..j)
                    .map(|k| {
                        let nu_jk = |i: usize| if i == j { 1.0 } else { nu[i] };
                        let mu_prev = if k == j - 1 { 1.0 } else { mu[k] };
                        let v = alphas[k] * nu_jk(k) + betas[k] * nu_jk(k + 1) - beta_prev * mu_prev;
                        let v = v / alpha;
                        v + v.signum() * eps * norm_est.max(alpha) / alpha
                    })
                    .collect();
                let worst = new_mu.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                if force_p || worst > policy.eta_threshold {
                    orthogonalize(&mut pj, &ps);
                    reorths += 1;
                    alpha = pj.norm();
                    new_mu.iter_mut().for_each(|v| *v = eps);
                    force_p = !force_p;
                }
            }
            _ => {}
        }

        norm_est = norm_est.max(alpha);
        if alpha <= BREAKDOWN_TOL * norm_est || alpha == 0.0 {
            if j == 0 {
                return Err(Error::Singular(
                    "operator annihilates the Lanczos start vector".into(),
                ));
            }
            // keep q_j as the continuation vector of the truncated factorization
            q_next = qs.pop().expect("q_j exists");
            breakdown = Some(Breakdown {
                index: j + 1,
                kind: BreakdownKind::Alpha,
            });
            break;
        }
        pj /= alpha;
        alphas.push(alpha);

        let mut qn = a.apply_transpose(&pj);
        qn.axpy(-alpha, &qs[j], 1.0);
        let mut beta = qn.norm();

        match mode {
            ReorthMode::Full => {
                orthogonalize(&mut qn, &qs);
                reorths += 1;
                beta = qn.norm();
            }
            ReorthMode::Partial if beta > 0.0 => {
                let new_nu: Vec<f64> = (0..=j)
                    .map(|k| {
                        let mu_jk = |i: usize| if i == j { 1.0 } else { new_mu[i] };
                        let nu_jk = if k == j { 1.0 } else { nu[k] };
                        let prev = if k > 0 { betas[k - 1] * mu_jk(k - 1) } else { 0.0 };
                        let v = (alphas[k] * mu_jk(k) + prev - alpha * nu_jk) / beta;
                        v + v.signum() * eps * norm_est / beta
                    })
                    .collect();
                let worst = new_nu.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                let mut new_nu = new_nu;
                if force_q || worst > policy.eta_threshold {
                    orthogonalize(&mut qn, &qs);
                    reorths += 1;
                    beta = qn.norm();
                    new_nu.iter_mut().for_each(|v| *v = eps);
                    force_q = !force_q;
                }
                nu = new_nu;
                mu = new_mu;
            }
            _ => {}
        }
        ps.push(pj);

        if beta <= BREAKDOWN_TOL * norm_est {
            betas.push(0.0);
            breakdown = Some(Breakdown {
                index: j + 1,
                kind: BreakdownKind::Beta,
            });
            break;
        }
        qn /= beta;
        betas.push(beta);
        if j + 1 < ell {
            qs.push(qn);
        } else {
            q_next = qn;
        }
    }

    let ell_done = alphas.len();
    debug_assert_eq!(qs.len(), ell_done);
    debug_assert_eq!(ps.len(), ell_done);
    Ok(Bidiagonalization {
        q: columns(&qs, n),
        p: columns(&ps, m),
        alphas,
        betas,
        q_next,
        breakdown,
        start_norm,
        norm_estimate: norm_est,
        reorthogonalizations: reorths,
        mode,
    })
}

/// Two passes of classical Gram-Schmidt against `basis`.
fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.iter().map(|b| b.dot(v)).collect();
        for (b, c) in basis.iter().zip(coeffs) {
            v.axpy(-c, b, 1.0);
        }
    }
}

fn columns(vs: &[DVector<f64>], rows: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, vs.len());
    for (j, v) in vs.iter().enumerate() {
        out.set_column(j, v);
    }
    out
}

/// Frobenius norms of the defects in the Lanczos relations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorizationResiduals {
    /// `‖A Q − P T‖`
    pub aq_minus_pt: f64,
    /// `‖Aᵀ P − Q Tᵀ − β_ℓ q_{ℓ+1} e_ℓᵀ‖`
    pub atp_residual: f64,
    /// `‖QᵀQ − I‖`
    pub q_orthogonality: f64,
    /// `‖PᵀP − I‖`
    pub p_orthogonality: f64,
    /// `‖Qᵀ(AᵀA)Q − TᵀT‖`
    pub gram_defect: f64,
}

impl FactorizationResiduals {
    /// The largest of the five residuals after scaling each by the natural
    /// magnitude of its terms (`‖A‖` or `‖A‖²`).
    pub fn max_scaled(&self, norm_a: f64) -> f64 {
        let na = norm_a.max(f64::MIN_POSITIVE);
        [
            self.aq_minus_pt / na,
            self.atp_residual / na,
            self.q_orthogonality,
            self.p_orthogonality,
            self.gram_defect / (na * na),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn factorization_residuals<A: JacobianOperator + ?Sized>(
    bid: &Bidiagonalization,
    a: &A,
) -> FactorizationResiduals {
    let ell = bid.ell();
    let t = bid.bidiagonal();
    let aq = DMatrix::from_columns(
        &(0..ell)
            .map(|j| a.apply(&bid.q.column(j).into_owned()))
            .collect::<Vec<_>>(),
    );
    let atp = DMatrix::from_columns(
        &(0..ell)
            .map(|j| a.apply_transpose(&bid.p.column(j).into_owned()))
            .collect::<Vec<_>>(),
    );
    let aq_minus_pt = (&aq - &bid.p * &t).norm();
    let mut atp_expected = &bid.q * t.transpose();
    if ell > 0 {
        let mut last = atp_expected.column_mut(ell - 1);
        last.axpy(bid.beta_last(), &bid.q_next, 1.0);
    }
    let atp_residual = (&atp - atp_expected).norm();
    let eye = DMatrix::<f64>::identity(ell, ell);
    let q_orthogonality = (bid.q.tr_mul(&bid.q) - &eye).norm();
    let p_orthogonality = (bid.p.tr_mul(&bid.p) - &eye).norm();
    let gram_defect = (aq.tr_mul(&aq) - bid.gram().to_dense()).norm();
    FactorizationResiduals {
        aq_minus_pt,
        atp_residual,
        q_orthogonality,
        p_orthogonality,
        gram_defect,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn diag(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(values))
    }

    /// Dense matrix with prescribed singular values `decay^i`.
    fn graded(m: usize, n: usize, decay: f64, seed: u64) -> DMatrix<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let gu = DMatrix::from_fn(m, n, |_, _| next());
        let gv = DMatrix::from_fn(n, n, |_, _| next());
        let u = gu.qr().q();
        let v = gv.qr().q();
        let s = DVector::from_fn(n, |i, _| decay.powi(i as i32));
        u * DMatrix::from_diagonal(&s) * v.transpose()
    }

    #[test]
    fn identity_breaks_down_after_one_step() {
        let a = DMatrix::<f64>::identity(3, 3);
        let q1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let bid = gklb(&a, &q1, 2, ReorthPolicy::full()).unwrap();
        assert_eq!(bid.ell(), 1);
        assert_eq!(bid.alphas, vec![1.0]);
        assert_eq!(bid.betas, vec![0.0]);
        assert_eq!(
            bid.breakdown,
            Some(Breakdown {
                index: 1,
                kind: BreakdownKind::Beta
            })
        );
        assert_eq!(bid.q.column(0).into_owned(), q1);
        assert_eq!(bid.bidiagonal(), DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn zero_start_rejected() {
        let a = DMatrix::<f64>::identity(3, 3);
        let err = gklb(&a, &DVector::zeros(3), 2, ReorthPolicy::full()).unwrap_err();
        assert_eq!(err, Error::InvalidStart);
    }

    #[test]
    fn ell_out_of_range_rejected() {
        let a = DMatrix::<f64>::identity(3, 3);
        let q1 = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        assert!(gklb(&a, &q1, 0, ReorthPolicy::full()).is_err());
        assert!(gklb(&a, &q1, 4, ReorthPolicy::full()).is_err());
    }

    #[test]
    fn two_by_two_diagonal_matches_dense_recurrence() {
        // Hand recurrence for A = diag(2, 1), q1 = (1, 1)/√2:
        // A q1 = (2, 1)/√2, α1 = √(5/2), p1 = (2, 1)/√5,
        // Aᵀp1 − α1 q1 = (4, 1)/√5 − (√5/2)(1, 1) = (3, −3)/(2√5), β1 = 3/√10.
        // q2 = (1, −1)/√2, A q2 − β1 p1 = (2, −1)/√2 − (3/√10)(2, 1)/√5 = (2/5)(1, −2)/√2·…
        let a = diag(&[2.0, 1.0]);
        let q1 = DVector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
        let bid = gklb(&a, &q1, 2, ReorthPolicy::full()).unwrap();
        assert_eq!(bid.ell(), 2);
        assert_relative_eq!(bid.alphas[0], (2.5f64).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(bid.betas[0], 3.0 / 10f64.sqrt(), max_relative = 1e-14);
        // det(T) = α1 α2 = |det A| = 2
        assert_relative_eq!(bid.alphas[0] * bid.alphas[1], 2.0, max_relative = 1e-14);
        let b = a.transpose() * &a;
        let lhs = bid.q.transpose() * b * &bid.q;
        assert!((lhs - bid.gram().to_dense()).norm() <= 1e-12);
    }

    #[test]
    fn gram_of_small_bidiagonal() {
        assert_eq!(tridiagonal_gram(&[1.0], &[]).to_dense(), DMatrix::from_element(1, 1, 1.0));
        let g = tridiagonal_gram(&[2.0, 1.0], &[3.0]).to_dense();
        let t = bidiagonal_matrix(&[2.0, 1.0], &[3.0]);
        assert_eq!(g, t.transpose() * &t);
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[4.0, 6.0, 6.0, 10.0]));
        assert_eq!(g, g.transpose());
    }

    #[test]
    fn full_factorization_is_exact() {
        let a = graded(12, 8, 0.7, 3);
        let q1 = DVector::from_fn(8, |i, _| 1.0 + i as f64);
        let bid = gklb(&a, &q1, 8, ReorthPolicy::full()).unwrap();
        assert_eq!(bid.ell(), 8);
        let r = factorization_residuals(&bid, &a);
        assert!(r.max_scaled(1.0) <= 1e-10, "{r:?}");
        // first column of Q is the normalized start
        let diff = bid.q.column(0) - &q1 / q1.norm();
        assert!(diff.norm() <= 1e-15);
    }

    #[test]
    fn reorthogonalization_matters_on_ill_conditioned_operator() {
        let a = graded(60, 50, 0.6, 9);
        let q1 = DVector::from_element(50, 1.0);
        let with = gklb(&a, &q1, 40, ReorthPolicy::full()).unwrap();
        let without = gklb(&a, &q1, 40, ReorthPolicy::none()).unwrap();
        let rw = factorization_residuals(&with, &a);
        let rn = factorization_residuals(&without, &a);
        assert!(rw.q_orthogonality <= 1e-10);
        assert!(rn.q_orthogonality > 1e3 * rw.q_orthogonality, "{rn:?} vs {rw:?}");
    }

    #[test]
    fn partial_reorthogonalization_keeps_semi_orthogonality() {
        let a = graded(60, 50, 0.8, 5);
        let q1 = DVector::from_fn(50, |i, _| (i as f64 * 0.3).cos());
        let bid = gklb(&a, &q1, 40, ReorthPolicy::partial(f64::EPSILON.sqrt())).unwrap();
        let r = factorization_residuals(&bid, &a);
        assert!(r.q_orthogonality <= 1e-6, "{r:?}");
        assert!(r.p_orthogonality <= 1e-6, "{r:?}");
        assert!(bid.reorthogonalizations < 2 * bid.ell());
    }

    #[test]
    fn first_gram_entry_bounded_by_smallest_singular_value() {
        let a = graded(10, 6, 0.5, 21);
        let g = DVector::from_fn(6, |i, _| (i as f64 + 0.5).sin());
        let bid = gklb(&a, &g, 3, ReorthPolicy::full()).unwrap();
        let t11 = bid.gram().diag[0];
        let s_min = 0.5f64.powi(5);
        assert!(t11 >= s_min * s_min);
        assert_relative_eq!(t11, (&a * &g).norm_squared() / g.norm_squared(), max_relative = 1e-12);
    }

    #[test]
    fn krylov_property() {
        let a = graded(9, 7, 0.75, 4);
        let q1 = DVector::from_fn(7, |i, _| 1.0 / (1.0 + i as f64));
        let bid = gklb(&a, &q1, 5, ReorthPolicy::full()).unwrap();
        let b = a.transpose() * &a;
        for j in 0..4 {
            let bq = &b * bid.q.column(j);
            let qj1 = bid.q.columns(0, j + 2);
            let proj = &qj1 * (qj1.transpose() * &bq);
            assert!((&bq - proj).norm() <= 1e-8 * bq.norm());
        }
    }

    #[test]
    fn deterministic() {
        let a = graded(9, 7, 0.75, 4);
        let q1 = DVector::from_fn(7, |i, _| 1.0 / (1.0 + i as f64));
        let x = gklb(&a, &q1, 6, ReorthPolicy::full()).unwrap();
        let y = gklb(&a, &q1, 6, ReorthPolicy::full()).unwrap();
        assert_eq!(x.alphas, y.alphas);
        assert_eq!(x.betas, y.betas);
        assert_eq!(x.q, y.q);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn lanczos_relations_hold(seed in 0u64..1000, ell in 1usize..=10, decay in 0.3f64..0.95) {
            let a = graded(14, 10, decay, seed);
            let q1 = DVector::from_fn(10, |i, _| ((i as u64 + seed) as f64).sin() + 0.1);
            let bid = gklb(&a, &q1, ell, ReorthPolicy::full()).unwrap();
            let r = factorization_residuals(&bid, &a);
            prop_assert!(r.max_scaled(1.0) <= 1e-10, "{:?}", r);
            prop_assert!(bid.q.tr_mul(&bid.q_next).norm() <= 1e-10);
        }
    }
}

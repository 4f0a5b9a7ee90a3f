//! Krylov approximation of `B^{1/2} b` for `B = JᵀJ`.
//!
//! With `J Q = P T` we have `Qᵀ B Q = TᵀT`, and `(TᵀT)^{1/2} = V diag(S) Vᵀ`
//! comes from the SVD of the small bidiagonal `T`, so
//!
//! ```text
//! sq(B, b) = Q V diag(S) Vᵀ Qᵀ b.
//! ```

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::gklb::Bidiagonalization;

/// Relative threshold under which a singular value counts as zero.
pub const SINGULAR_TOL: f64 = 1e-14;

/// Full SVD `T = U diag(S) Vᵀ` with `S` sorted in decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SmallSvd {
    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn sigma_max(&self) -> f64 {
        self.s.get(0).copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.s.iter().copied().last().unwrap_or(0.0)
    }

    /// `‖TᵀT‖ = σ̂₁²`.
    pub fn gram_norm(&self) -> f64 {
        self.sigma_max().powi(2)
    }

    /// Smallest singular value above `1e-14·σ̂₁`.
    pub fn is_nonsingular(&self) -> bool {
        self.sigma_max() > 0.0 && self.sigma_min() > SINGULAR_TOL * self.sigma_max()
    }

    /// `V diag(S^power) Vᵀ x`, i.e. `(TᵀT)^{power/2} x`.
    pub fn gram_power_apply(&self, power: i32, x: &DVector<f64>) -> DVector<f64> {
        let mut c = self.v.tr_mul(x);
        for (ci, si) in c.iter_mut().zip(self.s.iter()) {
            *ci *= si.powi(power);
        }
        &self.v * c
    }

    /// `(TᵀT)^{1/2} = V diag(S) Vᵀ` as a dense matrix.
    pub fn sqrt_gram(&self) -> DMatrix<f64> {
        &self.v * DMatrix::from_diagonal(&self.s) * self.v.transpose()
    }

    /// `Vᵀ e₁`, the first row of `V`.
    pub fn v_first_row(&self) -> DVector<f64> {
        self.v.row(0).transpose()
    }
}

/// SVD of a small dense matrix, singular values sorted decreasingly.
///
/// Computed from the symmetric eigendecomposition of `[[0, T], [Tᵀ, 0]]`,
/// whose eigenpairs are `±σᵢ` with vectors `(uᵢ, ±vᵢ)/√2`. nalgebra's direct
/// SVD loses up to `1e-9` relative reconstruction accuracy on the graded
/// bidiagonals produced by Lanczos; this route stays at roundoff.
pub fn small_svd(t: &DMatrix<f64>) -> SmallSvd {
    let (m, n) = t.shape();
    let k = m.min(n);
    if k == 0 {
        return SmallSvd {
            u: DMatrix::zeros(m, 0),
            s: DVector::zeros(0),
            v: DMatrix::zeros(n, 0),
        };
    }
    let mut h = DMatrix::zeros(m + n, m + n);
    h.view_mut((0, m), (m, n)).copy_from(t);
    h.view_mut((m, 0), (n, m)).copy_from(&t.transpose());
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..m + n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let s = DVector::from_fn(k, |j, _| eig.eigenvalues[order[j]].max(0.0));
    let cut = SINGULAR_TOL * s[0];
    let mut u = DMatrix::zeros(m, k);
    let mut v = DMatrix::zeros(n, k);
    let mut good = vec![false; k];
    for j in 0..k {
        if s[j] <= cut {
            continue;
        }
        // ±σ pairs are separated, so the halves are clean
        let col = eig.eigenvectors.column(order[j]);
        let (uj, vj) = (col.rows(0, m).into_owned(), col.rows(m, n).into_owned());
        u.set_column(j, &(&uj / uj.norm()));
        v.set_column(j, &(&vj / vj.norm()));
        good[j] = true;
    }
    // the zero cluster mixes u and v halves; any orthonormal completion works
    complete_basis(&mut u, &good);
    complete_basis(&mut v, &good);
    SmallSvd { u, s, v }
}

/// Fills the columns not flagged in `keep` with an orthonormal basis of the
/// complement of the kept ones.
fn complete_basis(basis: &mut DMatrix<f64>, keep: &[bool]) {
    let dim = basis.nrows();
    let mut accepted: Vec<usize> = (0..keep.len()).filter(|&j| keep[j]).collect();
    for j in (0..keep.len()).filter(|&j| !keep[j]) {
        let mut best = DVector::zeros(dim);
        let mut best_norm = -1.0;
        for i in 0..dim {
            let mut c = DVector::zeros(dim);
            c[i] = 1.0;
            for _ in 0..2 {
                for &a in &accepted {
                    let col = basis.column(a);
                    let proj = col.dot(&c);
                    c.axpy(-proj, &col, 1.0);
                }
            }
            let nrm = c.norm();
            if nrm > best_norm {
                best_norm = nrm;
                best = c;
            }
        }
        basis.set_column(j, &(&best / best_norm));
        accepted.push(j);
    }
}

/// SVD of the bidiagonal `T_ℓ` of a factorization.
pub fn bidiagonal_svd(bid: &Bidiagonalization) -> SmallSvd {
    small_svd(&bid.bidiagonal())
}

/// `Q (TᵀT)^{1/2} Qᵀ b`.
pub fn sq(bid: &Bidiagonalization, b: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("sq argument", bid.q.nrows(), b.len())?;
    let svd = bidiagonal_svd(bid);
    let c = bid.q.tr_mul(b);
    Ok(&bid.q * svd.gram_power_apply(1, &c))
}

/// `s̃ = ‖g‖ Q (TᵀT)^{1/2} e₁` for a factorization started at `q₁ = g`.
pub fn s_tilde(bid: &Bidiagonalization, g_norm: f64) -> Result<DVector<f64>> {
    s_tilde_with(bid, &bidiagonal_svd(bid), g_norm)
}

/// [`s_tilde`] with the SVD of `T` supplied by the caller.
pub fn s_tilde_with(bid: &Bidiagonalization, svd: &SmallSvd, g_norm: f64) -> Result<DVector<f64>> {
    if (bid.start_norm - g_norm).abs() > 1e-12 * g_norm.max(bid.start_norm) {
        return Err(Error::InvalidArgument(format!(
            "factorization was started from a vector of norm {}, not the gradient (norm {g_norm})",
            bid.start_norm
        )));
    }
    Ok(&bid.q * s_tilde_coeffs(svd, g_norm))
}

/// `Qᵀ s̃ = ‖g‖ (TᵀT)^{1/2} e₁`.
pub fn s_tilde_coeffs(svd: &SmallSvd, g_norm: f64) -> DVector<f64> {
    let mut e1 = DVector::zeros(svd.dim());
    e1[0] = g_norm;
    svd.gram_power_apply(1, &e1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gklb::{gklb, ReorthPolicy};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Dense `B^{1/2} b` from a full SVD of `J`, computed independently of `small_svd`.
    fn dense_sqrt_apply(j: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        let svd = j.clone().svd(false, true);
        let vt = svd.v_t.unwrap();
        let mut c = &vt * b;
        for (ci, si) in c.iter_mut().zip(svd.singular_values.iter()) {
            *ci *= si;
        }
        vt.tr_mul(&c)
    }

    fn lcg_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed ^ 0x9e37_79b9_7f4a_7c15;
        DMatrix::from_fn(m, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn one_by_one_svd() {
        let svd = small_svd(&DMatrix::from_element(1, 1, 1.0));
        assert_eq!(svd.s[0], 1.0);
        assert_eq!(svd.u[(0, 0)].abs(), 1.0);
        assert_eq!(svd.u[(0, 0)], svd.v[(0, 0)]);
    }

    #[test]
    fn two_by_two_matches_eigen_oracle() {
        let t = DMatrix::from_row_slice(2, 2, &[2.0, 3.0, 0.0, 1.0]);
        let svd = small_svd(&t);
        // TᵀT = [[4, 6], [6, 10]]: eigenvalues 7 ± √45
        let expected = [(7.0 + 45f64.sqrt()).sqrt(), (7.0 - 45f64.sqrt()).sqrt()];
        assert_relative_eq!(svd.s[0], expected[0], max_relative = 1e-12);
        assert_relative_eq!(svd.s[1], expected[1], max_relative = 1e-12);
        let rebuilt = &svd.u * DMatrix::from_diagonal(&svd.s) * svd.v.transpose();
        assert!((rebuilt - t).norm() <= 1e-12 * svd.sigma_max());
    }

    #[test]
    fn zero_matrix_svd() {
        let svd = small_svd(&DMatrix::zeros(2, 2));
        assert_eq!(svd.s, DVector::zeros(2));
        assert!(!svd.is_nonsingular());
    }

    #[test]
    fn sq_identity_returns_start() {
        let a = DMatrix::<f64>::identity(3, 3);
        let q1 = DVector::from_vec(vec![1.0, 2.0, 0.5]);
        let bid = gklb(&a, &q1, 1, ReorthPolicy::full()).unwrap();
        let out = sq(&bid, &q1).unwrap();
        assert!((out - &q1).norm() <= 1e-15);
    }

    #[test]
    fn sq_two_steps_is_exact_square_root() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let bid = gklb(&a, &b, 2, ReorthPolicy::full()).unwrap();
        let out = sq(&bid, &b).unwrap();
        assert!((out - DVector::from_vec(vec![2.0, 1.0])).norm() <= 1e-12);
    }

    #[test]
    fn sq_one_step_closed_form() {
        // ℓ = 1: T = [α₁] with α₁² = bᵀBb/‖b‖², so sq(B, b) = √(bᵀBb/‖b‖²)·b.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let bid = gklb(&a, &b, 1, ReorthPolicy::full()).unwrap();
        let out = sq(&bid, &b).unwrap();
        let expected = &b * 2.5f64.sqrt();
        assert!((&out - expected).norm() <= 1e-12);
        assert_relative_eq!(out[0], 1.5811388300841898, max_relative = 1e-12);
    }

    #[test]
    fn s_tilde_identity() {
        let a = DMatrix::<f64>::identity(3, 3);
        let g = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let bid = gklb(&a, &g, 1, ReorthPolicy::full()).unwrap();
        assert!((s_tilde(&bid, 1.0).unwrap() - &g).norm() <= 1e-15);
    }

    #[test]
    fn s_tilde_full_dimension_matches_dense() {
        let j = lcg_matrix(5, 5, 17);
        let g = DVector::from_vec(vec![0.3, -1.0, 0.2, 0.7, 0.1]);
        let bid = gklb(&j, &g, 5, ReorthPolicy::full()).unwrap();
        let st = s_tilde(&bid, g.norm()).unwrap();
        let exact = dense_sqrt_apply(&j, &g);
        assert!((st - &exact).norm() <= 1e-10 * exact.norm());
    }

    #[test]
    fn s_tilde_rejects_foreign_start() {
        let a = DMatrix::<f64>::identity(2, 2);
        let bid = gklb(&a, &DVector::from_vec(vec![2.0, 0.0]), 1, ReorthPolicy::full()).unwrap();
        assert!(s_tilde(&bid, 1.0).is_err());
    }

    #[test]
    fn sq_result_lies_in_krylov_space() {
        let j = lcg_matrix(12, 10, 3);
        let q1 = DVector::from_fn(10, |i, _| 1.0 + i as f64);
        let b = DVector::from_fn(10, |i, _| (i as f64).cos());
        let bid = gklb(&j, &q1, 4, ReorthPolicy::full()).unwrap();
        let out = sq(&bid, &b).unwrap();
        let proj = &bid.q * bid.q.tr_mul(&out);
        assert!((&out - proj).norm() <= 1e-13 * out.norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn exact_at_full_dimension(seed in 0u64..10_000, n in 2usize..=12) {
            let j = lcg_matrix(n + 3, n, seed) + DMatrix::<f64>::identity(n + 3, n) * 0.5;
            let b = DVector::from_fn(n, |i, _| ((i as u64 * 7 + seed) as f64).sin());
            let bid = gklb(&j, &b, n, ReorthPolicy::full()).unwrap();
            prop_assume!(bid.ell() == n);
            let out = sq(&bid, &b).unwrap();
            let exact = dense_sqrt_apply(&j, &b);
            prop_assert!((out - &exact).norm() <= 1e-8 * exact.norm());
        }

        #[test]
        fn svd_reconstructs(seed in 0u64..10_000, n in 1usize..=8) {
            let t = lcg_matrix(n, n, seed);
            let svd = small_svd(&t);
            let rebuilt = &svd.u * DMatrix::from_diagonal(&svd.s) * svd.v.transpose();
            prop_assert!((rebuilt - &t).norm() <= 1e-12 * svd.sigma_max().max(1e-300));
            prop_assert!((svd.v.tr_mul(&svd.v) - DMatrix::identity(n, n)).norm() <= 1e-12);
            for i in 1..n {
                prop_assert!(svd.s[i - 1] >= svd.s[i]);
            }
        }
    }
}

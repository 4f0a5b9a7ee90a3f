//! Cholesky factorization of symmetric positive definite band matrices.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Lower band storage: row `i` keeps entries `(i, i−w) … (i, i)`, with the
/// diagonal in the last slot.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    w: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, half_bandwidth: usize) -> Self {
        Self {
            n,
            w: half_bandwidth,
            data: vec![0.0; n * (half_bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.w
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.w);
        i * (self.w + 1) + self.w - (i - j)
    }

    /// Entry `(i, j)` of the symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.w {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Sets `(i, j)` and, implicitly, `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.w, "entry ({i}, {j}) outside the band");
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn add_diagonal(&mut self, d: &DVector<f64>) {
        for i in 0..self.n {
            let s = self.slot(i, i);
            self.data[s] += d[i];
        }
    }

    pub fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.w);
            for j in lo..i {
                let a = self.data[self.slot(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.data[self.slot(i, i)] * x[i];
        }
        y
    }

    /// In-place band Cholesky `M = L Lᵀ`. Fails if a pivot is not positive.
    pub fn cholesky(mut self) -> Result<BandCholesky> {
        let (n, w) = (self.n, self.w);
        for i in 0..n {
            let lo = i.saturating_sub(w);
            for j in lo..=i {
                let mut sum = self.data[self.slot(i, j)];
                let klo = lo.max(j.saturating_sub(w));
                for k in klo..j {
                    sum -= self.data[self.slot(i, k)] * self.data[self.slot(j, k)];
                }
                if j == i {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(Error::Evaluation(format!(
                            "matrix is not positive definite (pivot {sum:e} at row {i})"
                        )));
                    }
                    let s = self.slot(i, i);
                    self.data[s] = sum.sqrt();
                } else {
                    let s = self.slot(i, j);
                    self.data[s] = sum / self.data[self.slot(j, j)];
                }
            }
        }
        Ok(BandCholesky { factor: self })
    }
}

/// The factor `L` of a band Cholesky decomposition.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    factor: BandMatrix,
}

impl BandCholesky {
    pub fn dim(&self) -> usize {
        self.factor.n
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let l = &self.factor;
        let (n, w) = (l.n, l.w);
        let mut x = b.clone();
        for i in 0..n {
            let mut sum = x[i];
            for k in i.saturating_sub(w)..i {
                sum -= l.data[l.slot(i, k)] * x[k];
            }
            x[i] = sum / l.data[l.slot(i, i)];
        }
        for i in (0..n).rev() {
            let mut sum = x[i];
            for k in (i + 1)..(i + w + 1).min(n) {
                sum -= l.data[l.slot(k, i)] * x[k];
            }
            x[i] = sum / l.data[l.slot(i, i)];
        }
        x
    }
}

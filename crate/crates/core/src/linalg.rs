//! Dense square matrices and the few vector kernels the policy needs.
//!
//! All reductions run in index order, so repeated evaluations are
//! bit-identical.

use crate::error::{Error, Result};
use crate::num::Real;

/// Row-major square matrix; entry `(j, k)` is row `j`, column `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    n: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![F::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, F::one());
        }
        m
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "expected {} columns, got {}",
                    n,
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { n, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut m = Self::zeros(n);
        for j in 0..n {
            for k in 0..n {
                m.set(j, k, f(j, k));
            }
        }
        m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> F {
        self.data[j * self.n + k]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, v: F) {
        self.data[j * self.n + k] = v;
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[F] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    /// `y = A x`.
    pub fn matvec_into(&self, x: &[F], y: &mut [F]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for j in 0..self.n {
            let row = self.row(j);
            let mut acc = F::zero();
            for k in 0..self.n {
                acc += row[k] * x[k];
            }
            y[j] = acc;
        }
    }

    pub fn matvec(&self, x: &[F]) -> Vec<F> {
        let mut y = vec![F::zero(); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = A^T x`, scanned row-major so the access pattern stays linear.
    pub fn tr_matvec_into(&self, x: &[F], y: &mut [F]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        y.fill(F::zero());
        for j in 0..self.n {
            let row = self.row(j);
            let xj = x[j];
            for k in 0..self.n {
                y[k] += row[k] * xj;
            }
        }
    }

    pub fn scaled(&self, s: F) -> Matrix<F> {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    /// Maximum absolute row sum (the infinity operator norm).
    pub fn max_abs_row_sum(&self) -> F {
        let mut best = F::zero();
        for j in 0..self.n {
            let mut sum = F::zero();
            for k in 0..self.n {
                sum += self.get(j, k).abs();
            }
            if sum > best {
                best = sum;
            }
        }
        best
    }

    /// `P A P^T` for the permutation sending old index `perm[i]` to new
    /// index `i`: entry `(a, b)` of the result is `A[perm[a], perm[b]]`.
    pub fn permuted(&self, perm: &[usize]) -> Matrix<F> {
        debug_assert_eq!(perm.len(), self.n);
        Matrix::from_fn(self.n, |a, b| self.get(perm[a], perm[b]))
    }
}

/// Apply the same permutation convention as [`Matrix::permuted`] to a vector:
/// `out[i] = x[perm[i]]`.
pub fn permute_vec<F: Copy>(x: &[F], perm: &[usize]) -> Vec<F> {
    perm.iter().map(|&p| x[p]).collect()
}

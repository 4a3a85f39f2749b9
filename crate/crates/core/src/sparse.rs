//! Compressed sparse row storage, an envelope Cholesky factorization and a
//! Jacobi-preconditioned conjugate gradient restricted to an index subset.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-compressed sparsity structure of a square matrix. Column indices are
/// sorted within each row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds a pattern from (row, col) pairs; duplicates are merged.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in entries {
            assert!(i < n && j < n, "entry ({i},{j}) outside {n}x{n}");
            rows[i].push(j);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(&r);
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx }
    }

    pub fn dense(n: usize) -> Self {
        Self::from_entries(n, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))))
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    #[inline]
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }
}

/// Square sparse matrix in CSR format.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    pattern: Arc<SparsityPattern>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![T::zero(); pattern.nnz()];
        Self { pattern, values }
    }

    pub fn identity(n: usize) -> Self {
        let pattern = Arc::new(SparsityPattern::from_entries(n, (0..n).map(|i| (i, i))));
        Self { pattern, values: vec![T::one(); n] }
    }

    pub fn from_diagonal(d: &[T]) -> Self {
        let mut m = Self::identity(d.len());
        m.values.copy_from_slice(d);
        m
    }

    /// Builds a matrix from a row-major dense array, keeping every nonzero entry.
    pub fn from_dense(n: usize, dense: &[T]) -> Self {
        assert_eq!(dense.len(), n * n);
        let entries =
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| dense[i * n + j] != T::zero() || i == j);
        let pattern = Arc::new(SparsityPattern::from_entries(n, entries));
        let mut m = Self::zeros(pattern);
        for i in 0..n {
            for j in 0..n {
                if let Some(k) = m.pattern.find(i, j) {
                    m.values[k] = dense[i * n + j];
                }
            }
        }
        m
    }

    pub fn size(&self) -> usize {
        self.pattern.n
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.pattern.find(i, j).map_or(T::zero(), |k| self.values[k])
    }

    /// Adds `v` at an entry that must be part of the pattern.
    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: T) {
        let k = self.pattern.find(i, j).unwrap_or_else(|| panic!("({i},{j}) not in pattern"));
        self.values[k] += v;
    }

    /// Iterates over `(column, value)` pairs of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (s, e) = (self.pattern.row_ptr[i], self.pattern.row_ptr[i + 1]);
        self.pattern.col_idx[s..e].iter().copied().zip(self.values[s..e].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.size()).map(|i| self.get(i, i)).collect()
    }

    pub fn scale(&mut self, s: T) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.size());
        debug_assert_eq!(y.len(), self.size());
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).fold(T::zero(), |acc, (j, a)| acc + a * x[j]);
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.size()];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[T]) -> T {
        (0..self.size()).fold(T::zero(), |acc, i| acc + x[i] * self.row(i).fold(T::zero(), |s, (j, a)| s + a * x[j]))
    }

    /// Returns `self + alpha * other`; patterns are merged if they differ.
    pub fn add_scaled(&self, other: &Self, alpha: T) -> Self {
        assert_eq!(self.size(), other.size());
        if Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern {
            let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a + alpha * b).collect();
            return Self { pattern: self.pattern.clone(), values };
        }
        let n = self.size();
        let entries = (0..n).flat_map(|i| self.pattern.row(i).iter().chain(other.pattern.row(i)).map(move |&j| (i, j)));
        let mut out = Self::zeros(Arc::new(SparsityPattern::from_entries(n, entries)));
        for i in 0..n {
            for (j, v) in self.row(i) {
                out.add_at(i, j, v);
            }
            for (j, v) in other.row(i) {
                out.add_at(i, j, alpha * v);
            }
        }
        out
    }

    /// Largest absolute asymmetry `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.size() {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<T> {
        let n = self.size();
        let mut d = vec![T::zero(); n * n];
        for i in 0..n {
            for (j, v) in self.row(i) {
                d[i * n + j] = v;
            }
        }
        d
    }

    /// Zeroes rows and columns flagged in `mask`; `diag` is placed on their diagonal.
    pub fn apply_mask(&mut self, mask: &[bool], diag: T) {
        assert_eq!(mask.len(), self.size());
        for i in 0..self.size() {
            let (s, e) = (self.pattern.row_ptr[i], self.pattern.row_ptr[i + 1]);
            for k in s..e {
                let j = self.pattern.col_idx[k];
                if mask[i] || mask[j] {
                    self.values[k] = if i == j { diag } else { T::zero() };
                }
            }
        }
    }
}

/// Cholesky factor stored row-wise over the lower envelope (profile) of the matrix.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky<T> {
    first_col: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> EnvelopeCholesky<T> {
    /// Factorizes a symmetric positive definite matrix `A = L L^T`.
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.size();
        let first_col: Vec<usize> = (0..n).map(|i| a.pattern.row(i).first().copied().unwrap_or(i).min(i)).collect();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + i - first_col[i] + 1);
        }
        let mut data = vec![T::zero(); offsets[n]];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    data[offsets[i] + j - first_col[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first_col[i];
            let oi = offsets[i];
            for j in fi..=i {
                let fj = first_col[j];
                let oj = offsets[j];
                let k0 = fi.max(fj);
                let mut s = data[oi + j - fi];
                for k in k0..j {
                    s -= data[oi + k - fi] * data[oj + k - fj];
                }
                if j < i {
                    s /= data[oj + j - fj];
                    data[oi + j - fi] = s;
                } else {
                    if !(s > T::zero()) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s.as_f64() });
                    }
                    data[oi + i - fi] = s.sqrt();
                }
            }
        }
        Ok(Self { first_col, offsets, data })
    }

    pub fn size(&self) -> usize {
        self.first_col.len()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.size();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first_col[i];
            let row = &self.data[self.offsets[i]..self.offsets[i + 1]];
            let mut s = y[i];
            for k in fi..i {
                s -= row[k - fi] * y[k];
            }
            y[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first_col[i];
            let row = &self.data[self.offsets[i]..self.offsets[i + 1]];
            let xi = y[i] / row[i - fi];
            y[i] = xi;
            for k in fi..i {
                y[k] -= row[k - fi] * xi;
            }
        }
        y
    }
}

/// Outcome of [`pcg_restricted`].
#[derive(Debug, Clone)]
pub struct CgOutcome<T> {
    pub solution: Vec<T>,
    pub iterations: usize,
    pub relative_residual: T,
}

/// Jacobi-preconditioned CG on the principal submatrix `A[free, free]`.
///
/// `rhs` entries outside `free` are ignored and the returned solution is zero
/// there. Stops when the Euclidean residual drops below `rtol * ||rhs||` or
/// after `max_iter` steps. Nonpositive curvature `p^T A p <= 0` is reported as
/// [`Error::NonconvexCurvature`].
pub fn pcg_restricted<T: Scalar>(
    a: &CsrMatrix<T>,
    free: &[bool],
    rhs: &[T],
    rtol: T,
    max_iter: usize,
) -> Result<CgOutcome<T>> {
    let n = a.size();
    let restrict = |v: &mut [T]| {
        v.iter_mut().zip(free).filter(|(_, &f)| !f).for_each(|(x, _)| *x = T::zero());
    };
    let mut x = vec![T::zero(); n];
    let mut r = rhs.to_vec();
    restrict(&mut r);
    let norm = |v: &[T]| v.iter().map(|&t| t * t).sum::<T>().sqrt();
    let b_norm = norm(&r);
    if b_norm == T::zero() {
        return Ok(CgOutcome { solution: x, iterations: 0, relative_residual: T::zero() });
    }
    let diag = a.diagonal();
    let precond = |r: &[T], z: &mut [T]| {
        for i in 0..n {
            z[i] = if free[i] && diag[i] > T::zero() {
                r[i] / diag[i]
            } else if free[i] {
                r[i]
            } else {
                T::zero()
            };
        }
    };
    let mut z = vec![T::zero(); n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = r.iter().zip(&z).map(|(&a, &b)| a * b).sum::<T>();
    let mut ap = vec![T::zero(); n];
    let mut rel = T::one();
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        restrict(&mut ap);
        let pap = p.iter().zip(&ap).map(|(&a, &b)| a * b).sum::<T>();
        if !(pap > T::zero()) {
            return Err(Error::NonconvexCurvature { curvature: pap.as_f64() });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm(&r) / b_norm;
        if rel <= rtol {
            return Ok(CgOutcome { solution: x, iterations: it, relative_residual: rel });
        }
        precond(&r, &mut z);
        let rz_new = r.iter().zip(&z).map(|(&a, &b)| a * b).sum::<T>();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(CgOutcome { solution: x, iterations: max_iter, relative_residual: rel })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> CsrMatrix<f64> {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            d[i * n + i] = 4.0;
            if i + 1 < n {
                d[i * n + i + 1] = -1.0;
                d[(i + 1) * n + i] = -1.0;
            }
        }
        CsrMatrix::from_dense(n, &d)
    }

    #[test]
    fn cholesky_solves_tridiagonal() {
        let a = tridiag(7);
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..7).map(|i| i as f64 - 2.5).collect();
        let x = chol.solve(&b);
        let ax = a.mul_vec(&x);
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = CsrMatrix::from_dense(2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(EnvelopeCholesky::factor(&a), Err(Error::NotPositiveDefinite { row: 1, .. })));
    }

    #[test]
    fn restricted_cg_ignores_fixed_rows() {
        let a = tridiag(5);
        let free = [true, true, false, true, true];
        let rhs = [1.0, 2.0, 100.0, 3.0, 4.0];
        let out = pcg_restricted(&a, &free, &rhs, 1e-14, 50).unwrap();
        assert_eq!(out.solution[2], 0.0);
        let ax = a.mul_vec(&out.solution);
        for i in [0, 1, 3, 4] {
            assert!((ax[i] - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn add_scaled_merges_patterns() {
        let a = CsrMatrix::<f64>::identity(3);
        let b = tridiag(3);
        let c = a.add_scaled(&b, 2.0);
        assert_eq!(c.get(0, 0), 9.0);
        assert_eq!(c.get(0, 1), -2.0);
        assert_eq!(c.get(0, 2), 0.0);
    }

    #[test]
    fn mask_replaces_rows_and_columns() {
        let mut a = tridiag(3);
        a.apply_mask(&[false, true, false], 1.0);
        assert_eq!(a.get(1, 1), 1.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.get(2, 1), 0.0);
        assert_eq!(a.get(0, 0), 4.0);
    }
}

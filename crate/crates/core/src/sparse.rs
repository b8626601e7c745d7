//! Compressed sparse rows for symmetric real matrices.
//!
//! Both triangles are stored so row access is direct; the builder inserts
//! entries symmetrically, which keeps `entry(i, j) == entry(j, i)` exact by
//! construction.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::dense::DenseMat;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SparseError {
    #[error("index ({i}, {j}) out of bounds for dimension {dim}")]
    OutOfBounds { i: usize, j: usize, dim: usize },
    #[error("entry ({i}, {j}) is not finite")]
    NonFinite { i: usize, j: usize },
}

/// Builder that accumulates symmetric triplets into a [`SparseSymmetric`].
#[derive(Debug, Clone, Default)]
pub struct SymmetricBuilder {
    dim: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl SymmetricBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    /// Adds `v` at `(i, j)` and, for off-diagonal positions, at `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<(), SparseError> {
        if i >= self.dim || j >= self.dim {
            return Err(SparseError::OutOfBounds {
                i,
                j,
                dim: self.dim,
            });
        }
        if !v.is_finite() {
            return Err(SparseError::NonFinite { i, j });
        }
        if v == 0.0 {
            return Ok(());
        }
        *self.entries.entry((i, j)).or_insert(0.0) += v;
        if i != j {
            *self.entries.entry((j, i)).or_insert(0.0) += v;
        }
        Ok(())
    }

    pub fn build(self) -> SparseSymmetric {
        let mut row_ptr = vec![0usize; self.dim + 1];
        for (&(i, _), _) in &self.entries {
            row_ptr[i + 1] += 1;
        }
        for i in 0..self.dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let nnz = self.entries.len();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        // BTreeMap iterates in (row, col) order, exactly CSR order.
        for ((_, j), v) in self.entries {
            col_idx.push(j);
            values.push(v);
        }
        SparseSymmetric {
            dim: self.dim,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Symmetric sparse matrix in CSR form (both triangles stored).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetric {
    pub fn zeros(dim: usize) -> Self {
        SymmetricBuilder::new(dim).build()
    }

    pub fn identity(dim: usize) -> Self {
        let mut b = SymmetricBuilder::new(dim);
        for i in 0..dim {
            b.add(i, i, 1.0).unwrap();
        }
        b.build()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries `(column, value)` of row `i`, ascending by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.entry(i, i)).collect()
    }

    /// y = M x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        let mut y = vec![0.0; self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.dim {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    /// xᵀ M y
    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            let mut row = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.values[k] * y[self.col_idx[k]];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// M + shift·I
    pub fn shifted(&self, shift: f64) -> SparseSymmetric {
        let mut b = SymmetricBuilder::new(self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                if j >= i {
                    b.add(i, j, v).unwrap();
                }
            }
            b.add(i, i, shift).unwrap();
        }
        b.build()
    }

    /// M + other
    pub fn plus(&self, other: &SparseSymmetric) -> SparseSymmetric {
        debug_assert_eq!(self.dim, other.dim);
        let mut b = SymmetricBuilder::new(self.dim);
        for m in [self, other] {
            for i in 0..m.dim {
                for (j, v) in m.row(i) {
                    if j >= i {
                        b.add(i, j, v).unwrap();
                    }
                }
            }
        }
        b.build()
    }

    pub fn scaled(&self, s: f64) -> SparseSymmetric {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        crate::math::sqrt(self.values.iter().map(|v| v * v).sum())
    }

    /// ‖A − B‖_F via a merged sweep over both sparsity patterns.
    pub fn frobenius_distance(&self, other: &SparseSymmetric) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut acc = 0.0;
        for i in 0..self.dim {
            let mut a = self.row(i).peekable();
            let mut b = other.row(i).peekable();
            loop {
                match (a.peek().copied(), b.peek().copied()) {
                    (Some((ja, va)), Some((jb, vb))) => {
                        if ja == jb {
                            acc += (va - vb) * (va - vb);
                            a.next();
                            b.next();
                        } else if ja < jb {
                            acc += va * va;
                            a.next();
                        } else {
                            acc += vb * vb;
                            b.next();
                        }
                    }
                    (Some((_, va)), None) => {
                        acc += va * va;
                        a.next();
                    }
                    (None, Some((_, vb))) => {
                        acc += vb * vb;
                        b.next();
                    }
                    (None, None) => break,
                }
            }
        }
        crate::math::sqrt(acc)
    }

    pub fn to_dense(&self) -> DenseMat {
        let mut m = DenseMat::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                *m.at_mut(i, j) = v;
            }
        }
        m
    }

    pub fn from_dense_lower(m: &DenseMat) -> SparseSymmetric {
        assert_eq!(m.rows(), m.cols());
        let mut b = SymmetricBuilder::new(m.rows());
        for i in 0..m.rows() {
            for j in 0..=i {
                let v = m.at(i, j);
                if v != 0.0 {
                    b.add(i, j, v).unwrap();
                }
            }
        }
        b.build()
    }
}

/// General (non-symmetric) sparse matrix in CSR form. Mainly holds
/// similarity-transformed Laplacians, which lose symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRows {
    /// Row-scaled similarity transform `diag(s) M diag(s)⁻¹` of a symmetric
    /// matrix, with `s_i = 1 / v_i`.
    pub fn similarity_from_symmetric(m: &SparseSymmetric, v: &[f64]) -> SparseRows {
        assert_eq!(v.len(), m.dim());
        let dim = m.dim();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..dim {
            for (j, w) in m.row(i) {
                col_idx.push(j);
                values.push(w * v[j] / v[i]);
            }
            row_ptr.push(col_idx.len());
        }
        SparseRows {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DenseMat {
        let mut m = DenseMat::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                *m.at_mut(i, j) = v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseSymmetric {
        let mut b = SymmetricBuilder::new(3);
        b.add(0, 0, 2.0).unwrap();
        b.add(0, 1, -1.0).unwrap();
        b.add(1, 1, 2.0).unwrap();
        b.add(1, 2, -1.0).unwrap();
        b.add(2, 2, 2.0).unwrap();
        b.build()
    }

    #[test]
    fn builder_symmetrizes() {
        let m = sample();
        assert_eq!(m.entry(0, 1), m.entry(1, 0));
        assert_eq!(m.entry(0, 1), -1.0);
        assert_eq!(m.entry(0, 2), 0.0);
        assert_eq!(m.nnz(), 7);
    }

    #[test]
    fn matvec_matches_by_hand() {
        let m = sample();
        let y = m.matvec(&[1.0, 2.0, 3.0]);
        assert_eq!(y, alloc::vec![0.0, 0.0, 4.0]);
    }

    #[test]
    fn quadratic_form_matches_matvec() {
        let m = sample();
        let x = [1.0, -2.0, 0.5];
        let y = m.matvec(&x);
        let direct: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((m.quadratic_form(&x, &x) - direct).abs() < 1e-15);
    }

    #[test]
    fn frobenius_distance_merged_sweep() {
        let a = sample();
        let b = a.scaled(0.5);
        let expect = a.scaled(0.5).frobenius_norm();
        assert!((a.frobenius_distance(&b) - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_entries_are_dropped() {
        let mut b = SymmetricBuilder::new(2);
        b.add(0, 1, 0.5).unwrap();
        b.add(0, 1, -0.5).unwrap();
        let m = b.build();
        // Exact cancellation keeps the slot with value zero; entry() reports 0.
        assert_eq!(m.entry(0, 1), 0.0);
    }

    #[test]
    fn rejects_out_of_bounds_and_nonfinite() {
        let mut b = SymmetricBuilder::new(2);
        assert!(b.add(0, 2, 1.0).is_err());
        assert!(b.add(0, 1, f64::NAN).is_err());
    }
}

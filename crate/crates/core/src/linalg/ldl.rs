//! Sparse LDLᵀ factorization (up-looking, elimination-tree based) with a
//! reverse Cuthill-McKee fill-reducing ordering. Serves the covariance-column
//! cache of the balancing objective and log-determinant evaluation.

use alloc::vec;
use alloc::vec::Vec;

use super::LinalgError;
use crate::math;
use crate::sparse::SparseSymmetric;

/// Reverse Cuthill-McKee ordering of the sparsity pattern; `perm[new] = old`.
/// Each connected component is swept breadth-first from a minimum-degree
/// node, neighbors visited in (degree, index) order, then the whole order is
/// reversed.
pub fn rcm_order(m: &SparseSymmetric) -> Vec<usize> {
    let n = m.dim();
    let degree: Vec<usize> = (0..n)
        .map(|i| m.row(i).filter(|&(j, _)| j != i).count())
        .collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = Vec::new();

    let mut starts: Vec<usize> = (0..n).collect();
    starts.sort_by_key(|&i| (degree[i], i));

    for &start in &starts {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push(start);
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            order.push(u);
            let mut nbrs: Vec<usize> = m
                .row(u)
                .filter(|&(j, _)| j != u && !visited[j])
                .map(|(j, _)| j)
                .collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                if !visited[j] {
                    visited[j] = true;
                    queue.push(j);
                }
            }
        }
        queue.clear();
    }
    order.reverse();
    order
}

/// `P A Pᵀ = L D Lᵀ` with unit lower-triangular `L` (stored by columns) and
/// positive diagonal `D`. Factorization fails on any non-positive pivot,
/// which doubles as the positive-definiteness check.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    d: Vec<f64>,
}

impl LdlFactor {
    /// Factors with an RCM ordering computed from the pattern.
    pub fn factor(m: &SparseSymmetric) -> Result<Self, LinalgError> {
        let perm = rcm_order(m);
        Self::factor_with_order(m, perm)
    }

    pub fn factor_with_order(m: &SparseSymmetric, perm: Vec<usize>) -> Result<Self, LinalgError> {
        let n = m.dim();
        assert_eq!(perm.len(), n);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // Symbolic pass: elimination tree and column counts.
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut col_nnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for (j_old, _) in m.row(perm[k]) {
                let mut j = iperm[j_old];
                if j >= k {
                    continue;
                }
                while flag[j] != k {
                    if parent[j] == usize::MAX {
                        parent[j] = k;
                    }
                    col_nnz[j] += 1;
                    flag[j] = k;
                    j = parent[j];
                }
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for k in 0..n {
            col_ptr[k + 1] = col_ptr[k] + col_nnz[k];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![0.0f64; nnz];
        let mut d = vec![0.0f64; n];

        // Numeric pass.
        let mut y = vec![0.0f64; n];
        let mut pattern = vec![0usize; n];
        let mut stack = vec![0usize; n];
        let mut filled = vec![0usize; n];
        for f in flag.iter_mut() {
            *f = usize::MAX;
        }
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            d[k] = 0.0;
            for (j_old, v) in m.row(perm[k]) {
                let j = iperm[j_old];
                if j > k {
                    continue;
                }
                y[j] += v;
                let mut len = 0;
                let mut jj = j;
                while flag[jj] != k {
                    stack[len] = jj;
                    len += 1;
                    flag[jj] = k;
                    jj = parent[jj];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = stack[len];
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            for idx in top..n {
                let j = pattern[idx];
                let yj = y[j];
                y[j] = 0.0;
                for p in col_ptr[j]..col_ptr[j] + filled[j] {
                    y[row_idx[p]] -= values[p] * yj;
                }
                let dj = d[j];
                let lkj = yj / dj;
                d[k] -= lkj * yj;
                let slot = col_ptr[j] + filled[j];
                row_idx[slot] = k;
                values[slot] = lkj;
                filled[j] += 1;
            }
            if !(d[k] > 0.0) {
                return Err(LinalgError::NotPositiveDefinite {
                    index: perm[k],
                    pivot: d[k],
                });
            }
        }

        Ok(LdlFactor {
            n,
            perm,
            col_ptr,
            row_idx,
            values,
            d,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut z: Vec<f64> = (0..n).map(|k| b[self.perm[k]]).collect();
        for k in 0..n {
            let zk = z[k];
            if zk != 0.0 {
                for p in self.col_ptr[k]..self.col_ptr[k + 1] {
                    z[self.row_idx[p]] -= self.values[p] * zk;
                }
            }
        }
        for k in 0..n {
            z[k] /= self.d[k];
        }
        for k in (0..n).rev() {
            let mut acc = z[k];
            for p in self.col_ptr[k]..self.col_ptr[k + 1] {
                acc -= self.values[p] * z[self.row_idx[p]];
            }
            z[k] = acc;
        }
        let mut x = vec![0.0; n];
        for k in 0..n {
            x[self.perm[k]] = z[k];
        }
        x
    }

    /// `ln det(A) = Σ ln d_k` (valid because every pivot is positive).
    pub fn logdet(&self) -> f64 {
        self.d.iter().map(|&v| math::ln(v)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense_eig;
    use crate::sparse::SymmetricBuilder;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_laplacian_plus_delta(n: usize, delta: f64, seed: u64) -> SparseSymmetric {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = SymmetricBuilder::new(n);
        for i in 0..n {
            b.add(i, i, delta).unwrap();
        }
        for i in 0..n - 1 {
            let w = rng.random::<f64>() + 0.05;
            b.add(i, i + 1, -w).unwrap();
            b.add(i, i, w).unwrap();
            b.add(i + 1, i + 1, w).unwrap();
        }
        for _ in 0..2 * n {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                let w = rng.random::<f64>();
                b.add(i.min(j), i.max(j), -w).unwrap();
                b.add(i, i, w).unwrap();
                b.add(j, j, w).unwrap();
            }
        }
        b.build()
    }

    #[test]
    fn solve_matches_cg() {
        let m = random_laplacian_plus_delta(60, 0.5, 3);
        let f = LdlFactor::factor(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<f64> = (0..60).map(|_| rng.random::<f64>() - 0.5).collect();
        let x = f.solve(&b);
        let r = m.matvec(&x);
        let err: f64 = r
            .iter()
            .zip(&b)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-10, "residual {err}");
    }

    #[test]
    fn logdet_matches_dense_spectrum() {
        let m = random_laplacian_plus_delta(40, 0.3, 11);
        let f = LdlFactor::factor(&m).unwrap();
        let eig = dense_eig(&m.to_dense()).unwrap();
        let expect: f64 = eig.eigenvalues.iter().map(|v| v.ln()).sum();
        assert!((f.logdet() - expect).abs() < 1e-8);
    }

    #[test]
    fn rejects_indefinite() {
        let mut b = SymmetricBuilder::new(2);
        b.add(0, 0, 1.0).unwrap();
        b.add(0, 1, 2.0).unwrap();
        b.add(1, 1, 1.0).unwrap();
        let m = b.build();
        assert!(matches!(
            LdlFactor::factor(&m),
            Err(LinalgError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn rcm_is_a_permutation() {
        let m = random_laplacian_plus_delta(30, 0.1, 7);
        let mut p = rcm_order(&m);
        p.sort_unstable();
        assert_eq!(p, (0..30).collect::<Vec<_>>());
    }
}

//! Lanczos Krylov basis and the low-pass graph filter
//! `p ≈ ‖q̃‖ V_M (I + γ H_M)⁻¹ e₁`.

use alloc::vec;
use alloc::vec::Vec;

use super::eig::sym_tridiag_eig;
use super::LinalgError;
use crate::dense::DenseMat;
use crate::math;
use crate::sparse::SparseSymmetric;

/// Orthonormal Krylov basis `V_M` with the tridiagonal projection `H_M`
/// (`alphas` on the diagonal, `betas` below). `order` may come out smaller
/// than requested when the recurrence breaks down early.
#[derive(Debug, Clone)]
pub struct LanczosBasis {
    pub order: usize,
    /// Basis vectors, one column per entry.
    pub basis: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub rhs_norm: f64,
}

impl LanczosBasis {
    /// The projected tridiagonal matrix as a dense `order × order` matrix.
    pub fn h_dense(&self) -> DenseMat {
        let m = self.order;
        let mut h = DenseMat::zeros(m, m);
        for i in 0..m {
            *h.at_mut(i, i) = self.alphas[i];
        }
        for i in 0..m.saturating_sub(1) {
            *h.at_mut(i, i + 1) = self.betas[i];
            *h.at_mut(i + 1, i) = self.betas[i];
        }
        h
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

/// Runs `order` Lanczos steps on `m` starting from `q`, with full
/// reorthogonalization (two Gram-Schmidt passes) per step.
pub fn lanczos_basis(
    m: &SparseSymmetric,
    q: &[f64],
    order: usize,
) -> Result<LanczosBasis, LinalgError> {
    let n = m.dim();
    if q.len() != n {
        return Err(LinalgError::DimMismatch {
            expected: n,
            got: q.len(),
        });
    }
    let rhs_norm = norm(q);
    if rhs_norm == 0.0 || order == 0 {
        return Ok(LanczosBasis {
            order: 0,
            basis: Vec::new(),
            alphas: Vec::new(),
            betas: Vec::new(),
            rhs_norm,
        });
    }
    let order = order.min(n);
    let breakdown = 1e-14 * rhs_norm.max(1.0);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(order);
    let mut alphas = Vec::with_capacity(order);
    let mut betas = Vec::with_capacity(order.saturating_sub(1));

    let v0: Vec<f64> = q.iter().map(|x| x / rhs_norm).collect();
    basis.push(v0);

    for j in 0..order {
        let mut w = m.matvec(&basis[j]);
        let alpha = dot(&w, &basis[j]);
        alphas.push(alpha);
        if j + 1 == order {
            break;
        }
        for i in 0..basis[j].len() {
            w[i] -= alpha * basis[j][i];
            if j > 0 {
                w[i] -= betas[j - 1] * basis[j - 1][i];
            }
        }
        // Full reorthogonalization against everything computed so far.
        for _pass in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                for i in 0..w.len() {
                    w[i] -= c * v[i];
                }
            }
        }
        let beta = norm(&w);
        if beta <= breakdown {
            // Lucky termination: the Krylov subspace is invariant.
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|x| x / beta).collect());
    }

    Ok(LanczosBasis {
        order: alphas.len(),
        basis,
        alphas,
        betas,
        rhs_norm,
    })
}

/// Approximates `(I + γ L̃)⁻¹ q̃` with the order-`order` Lanczos filter. The
/// tridiagonal solve goes through the symmetric tridiagonal
/// eigendecomposition.
pub fn lanczos_filter(
    ltilde: &SparseSymmetric,
    qtilde: &[f64],
    gamma: f64,
    order: usize,
) -> Result<Vec<f64>, LinalgError> {
    let lan = lanczos_basis(ltilde, qtilde, order)?;
    if lan.order == 0 {
        return Ok(vec![0.0; ltilde.dim()]);
    }
    let m = lan.order;
    let (theta, q) = sym_tridiag_eig(&lan.alphas, &lan.betas)?;
    // (I + γH)⁻¹ e₁ = Q diag(1/(1+γθ)) Qᵀ e₁
    let mut coeff = vec![0.0; m];
    for k in 0..m {
        coeff[k] = q.at(0, k) / (1.0 + gamma * theta[k]);
    }
    let mut ge1 = vec![0.0; m];
    for i in 0..m {
        let mut acc = 0.0;
        for k in 0..m {
            acc += q.at(i, k) * coeff[k];
        }
        ge1[i] = acc;
    }
    let n = ltilde.dim();
    let mut out = vec![0.0; n];
    for (j, v) in lan.basis.iter().enumerate().take(m) {
        let w = lan.rhs_norm * ge1[j];
        for i in 0..n {
            out[i] += w * v[i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cg_solve, dense_eig};
    use crate::sparse::SymmetricBuilder;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_psd(n: usize, seed: u64) -> SparseSymmetric {
        // Laplacian-like: positive path plus random extra edges.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = SymmetricBuilder::new(n);
        let add_edge = |b: &mut SymmetricBuilder, i: usize, j: usize, w: f64| {
            b.add(i, j, -w).unwrap();
            b.add(i, i, w).unwrap();
            b.add(j, j, w).unwrap();
        };
        for i in 0..n - 1 {
            add_edge(&mut b, i, i + 1, rng.random::<f64>() + 0.1);
        }
        for _ in 0..n {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                add_edge(&mut b, i.min(j), i.max(j), rng.random::<f64>());
            }
        }
        b.build()
    }

    #[test]
    fn zero_matrix_is_identity_filter() {
        let l = SparseSymmetric::zeros(4);
        let q = [1.0, -2.0, 3.0, 0.25];
        let p = lanczos_filter(&l, &q, 0.8, 4).unwrap();
        for i in 0..4 {
            assert!((p[i] - q[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let l = random_psd(10, 1);
        let p = lanczos_filter(&l, &[0.0; 10], 0.5, 5).unwrap();
        assert_eq!(p, vec![0.0; 10]);
    }

    #[test]
    fn full_order_matches_dense_solve() {
        let n = 24;
        let l = random_psd(n, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let gamma = 0.6;
        let p = lanczos_filter(&l, &q, gamma, n).unwrap();

        let eig = dense_eig(&l.shifted(1.0 / gamma).scaled(gamma).to_dense()).unwrap();
        // (I + γL) x = q via dense spectrum of (γL + I).
        let mut expect = vec![0.0; n];
        for k in 0..n {
            let v = eig.eigenvector(k);
            let c: f64 = v.iter().zip(&q).map(|(a, b)| a * b).sum();
            for i in 0..n {
                expect[i] += c / eig.eigenvalues[k] * v[i];
            }
        }
        for i in 0..n {
            assert!((p[i] - expect[i]).abs() < 1e-6, "i={i} {} vs {}", p[i], expect[i]);
        }
    }

    #[test]
    fn basis_is_orthonormal_and_tridiagonalizes() {
        let n = 40;
        let l = random_psd(n, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let lan = lanczos_basis(&l, &q, 12).unwrap();
        assert_eq!(lan.order, 12);
        for a in 0..lan.order {
            for b in 0..lan.order {
                let d = dot(&lan.basis[a], &lan.basis[b]);
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-8, "V not orthonormal at ({a},{b})");
            }
        }
        // VᵀLV ≈ H on the computed subspace.
        let h = lan.h_dense();
        for a in 0..lan.order {
            let lv = l.matvec(&lan.basis[a]);
            for b in 0..lan.order {
                let proj = dot(&lan.basis[b], &lv);
                assert!((proj - h.at(b, a)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn error_vs_dense_shrinks_with_order() {
        let n = 100;
        let gamma = 0.5;
        let mut med_errs = Vec::new();
        for order in [5usize, 10, 20] {
            let mut errs = Vec::new();
            for seed in 0..20u64 {
                let l = random_psd(n, seed);
                let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
                let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                let sys = l.scaled(gamma).shifted(1.0);
                let exact = cg_solve(&sys, &q, 1e-12, 10 * n).unwrap();
                let approx = lanczos_filter(&l, &q, gamma, order).unwrap();
                let err: f64 = exact
                    .iter()
                    .zip(&approx)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                errs.push(err);
            }
            errs.sort_by(|a, b| a.total_cmp(b));
            med_errs.push(errs[errs.len() / 2]);
        }
        assert!(
            med_errs[0] >= med_errs[1] && med_errs[1] >= med_errs[2],
            "median errors not non-increasing: {med_errs:?}"
        );
    }
}

//! Jacobi-preconditioned conjugate gradient for symmetric positive definite
//! systems.

use alloc::vec;
use alloc::vec::Vec;

use super::LinalgError;
use crate::math;
use crate::sparse::SparseSymmetric;

fn norm(v: &[f64]) -> f64 {
    math::sqrt(v.iter().map(|x| x * x).sum())
}

/// Solves `M x = rhs` starting from zero. Converges when the residual drops
/// below `tol · ‖rhs‖`.
pub fn cg_solve(
    m: &SparseSymmetric,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, LinalgError> {
    cg_solve_from(m, rhs, None, tol, max_iter)
}

/// Same as [`cg_solve`] with an explicit starting point. A starting point
/// that already solves the system is returned untouched, which callers rely
/// on for exact no-op paths.
pub fn cg_solve_from(
    m: &SparseSymmetric,
    rhs: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, LinalgError> {
    let n = m.dim();
    if rhs.len() != n {
        return Err(LinalgError::DimMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    let rhs_norm = norm(rhs);
    if rhs_norm == 0.0 {
        return Ok(x0.map(|x| x.to_vec()).unwrap_or_else(|| vec![0.0; n]));
    }

    let mut x = x0.map(|x| x.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut r = rhs.to_vec();
    if x0.is_some() {
        let mx = m.matvec(&x);
        for i in 0..n {
            r[i] -= mx[i];
        }
    }
    // Jacobi preconditioner; non-positive diagonals fall back to identity.
    let inv_diag: Vec<f64> = m
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut resid = norm(&r);
    if resid <= tol * rhs_norm {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut mp = vec![0.0; n];

    for _ in 0..max_iter {
        m.matvec_into(&p, &mut mp);
        let curvature: f64 = p.iter().zip(&mp).map(|(a, b)| a * b).sum();
        if curvature <= 0.0 {
            return Err(LinalgError::CgIndefinite(curvature));
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * mp[i];
        }
        resid = norm(&r);
        if resid <= tol * rhs_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LinalgError::CgNoConvergence {
        iters: max_iter,
        residual: resid / rhs_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMat;
    use crate::sparse::SymmetricBuilder;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_returns_rhs() {
        let m = SparseSymmetric::identity(4);
        let b = [1.0, -2.0, 3.0, 0.5];
        let x = cg_solve(&m, &b, 1e-12, 40).unwrap();
        for i in 0..4 {
            assert!((x[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn diagonal_two() {
        let mut b = SymmetricBuilder::new(2);
        b.add(0, 0, 2.0).unwrap();
        b.add(1, 1, 2.0).unwrap();
        let m = b.build();
        let x = cg_solve(&m, &[4.0, 6.0], 1e-12, 20).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-10);
        assert!((x[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn random_spd_matches_dense_solve() {
        // SPD by construction: A = Rᵀ R + n·I, solved densely by Gaussian
        // elimination as the oracle.
        let n = 100;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut r = DenseMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                *r.at_mut(i, j) = rng.random::<f64>() * 2.0 - 1.0;
            }
        }
        let mut a = r.transpose().matmul(&r);
        for i in 0..n {
            *a.at_mut(i, i) += n as f64;
        }
        let m = SparseSymmetric::from_dense_lower(&a);
        let rhs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();

        let x = cg_solve(&m, &rhs, 1e-10, 10 * n).unwrap();

        // Dense Gaussian elimination with partial pivoting.
        let mut aug = a.clone();
        let mut b = rhs.clone();
        for col in 0..n {
            let mut piv = col;
            for row in (col + 1)..n {
                if aug.at(row, col).abs() > aug.at(piv, col).abs() {
                    piv = row;
                }
            }
            if piv != col {
                for j in 0..n {
                    let tmp = aug.at(col, j);
                    *aug.at_mut(col, j) = aug.at(piv, j);
                    *aug.at_mut(piv, j) = tmp;
                }
                b.swap(col, piv);
            }
            for row in (col + 1)..n {
                let f = aug.at(row, col) / aug.at(col, col);
                for j in col..n {
                    let v = aug.at(col, j);
                    *aug.at_mut(row, j) -= f * v;
                }
                b[row] -= f * b[col];
            }
        }
        let mut xd = vec![0.0; n];
        for row in (0..n).rev() {
            let mut acc = b[row];
            for j in (row + 1)..n {
                acc -= aug.at(row, j) * xd[j];
            }
            xd[row] = acc / aug.at(row, row);
        }

        let xnorm = xd.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = x
            .iter()
            .zip(&xd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err / xnorm < 1e-6, "relative error {}", err / xnorm);
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let m = SparseSymmetric::identity(3);
        let x = cg_solve(&m, &[0.0; 3], 1e-10, 10).unwrap();
        assert_eq!(x, vec![0.0; 3]);
    }

    #[test]
    fn reports_nonconvergence() {
        // An ill-conditioned system with a one-iteration budget.
        let mut b = SymmetricBuilder::new(3);
        b.add(0, 0, 1e8).unwrap();
        b.add(1, 1, 1.0).unwrap();
        b.add(2, 2, 1e-8).unwrap();
        b.add(0, 1, 0.5).unwrap();
        b.add(1, 2, 0.5).unwrap();
        let m = b.build();
        let r = cg_solve(&m, &[1.0, 1.0, 1.0], 1e-14, 1);
        assert!(matches!(r, Err(LinalgError::CgNoConvergence { .. })));
    }

    #[test]
    fn exact_start_is_returned_unchanged() {
        let m = SparseSymmetric::identity(3);
        let q = [1.5, -0.25, 4.0];
        let x = cg_solve_from(&m, &q, Some(&q), 1e-12, 10).unwrap();
        assert_eq!(x, q.to_vec());
    }
}

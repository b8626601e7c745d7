//! Smallest eigenpair of a sparse symmetric matrix: block-size-1 LOBPCG with
//! a Jacobi preconditioner, falling back to shifted inverse iteration when
//! progress stalls.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::eig::dense_eig;
use super::LinalgError;
use crate::dense::DenseMat;
use crate::math;
use crate::sparse::SparseSymmetric;

const DEFAULT_MAX_ITER: usize = 600;
const STAGNATION_WINDOW: usize = 25;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

fn normalize(a: &mut [f64]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        for x in a.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Flips the vector so its first nonzero component is positive.
fn fix_sign(v: &mut [f64]) {
    for &x in v.iter() {
        if x != 0.0 {
            if x < 0.0 {
                for y in v.iter_mut() {
                    *y = -*y;
                }
            }
            return;
        }
    }
}

fn residual(m: &SparseSymmetric, x: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let mut r = m.matvec(x);
    for i in 0..r.len() {
        r[i] -= lambda * x[i];
    }
    let n = norm(&r);
    (r, n)
}

/// Rayleigh-Ritz on the span of `basis` (columns assumed orthonormal);
/// returns the smallest Ritz value with its coefficient vector.
fn rayleigh_ritz(m: &SparseSymmetric, basis: &[Vec<f64>]) -> Result<(f64, Vec<f64>), LinalgError> {
    let k = basis.len();
    let mut t = DenseMat::zeros(k, k);
    let images: Vec<Vec<f64>> = basis.iter().map(|v| m.matvec(v)).collect();
    for a in 0..k {
        for b in a..k {
            let v = dot(&basis[a], &images[b]);
            *t.at_mut(a, b) = v;
            *t.at_mut(b, a) = v;
        }
    }
    let eig = dense_eig(&t)?;
    Ok((eig.eigenvalues[0], eig.eigenvector(0)))
}

/// Orthonormalizes `vectors` in place by modified Gram-Schmidt, dropping
/// near-dependent directions.
fn orthonormalize(vectors: &mut Vec<Vec<f64>>) {
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors.drain(..) {
        for _ in 0..2 {
            for u in &kept {
                let c = dot(&v, u);
                for i in 0..v.len() {
                    v[i] -= c * u[i];
                }
            }
        }
        let n = normalize(&mut v);
        if n > 1e-12 {
            kept.push(v);
        }
    }
    *vectors = kept;
}

/// Smallest eigenpair with default starting vector and iteration budget.
pub fn smallest_eigpair(
    m: &SparseSymmetric,
    tol: f64,
) -> Result<(f64, Vec<f64>), LinalgError> {
    smallest_eigpair_from(m, None, tol, DEFAULT_MAX_ITER)
}

/// Smallest eigenpair of a symmetric matrix.
///
/// Convergence means `‖M v − λ v‖₂ ≤ tol` with `‖v‖ = 1`; the returned
/// vector has its first nonzero component positive. A good `x0` (for
/// instance the coloring vector of a balanced graph) cuts the iteration
/// count substantially.
pub fn smallest_eigpair_from(
    m: &SparseSymmetric,
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>), LinalgError> {
    let n = m.dim();
    if n == 0 {
        return Err(LinalgError::DimMismatch {
            expected: 1,
            got: 0,
        });
    }
    if n == 1 {
        return Ok((m.entry(0, 0), vec![1.0]));
    }

    let mut x: Vec<f64> = match x0 {
        Some(v) => {
            if v.len() != n {
                return Err(LinalgError::DimMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
            v.to_vec()
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
        }
    };
    if normalize(&mut x) == 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        x = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        normalize(&mut x);
    }

    let diag = m.diagonal();
    let diag_scale = diag.iter().fold(1.0f64, |s, d| math::max(s, math::abs(*d)));

    let mut lambda = m.quadratic_form(&x, &x);
    let mut p: Option<Vec<f64>> = None;
    let mut best_resid = f64::INFINITY;
    let mut since_improvement = 0usize;

    for _ in 0..max_iter {
        let (r, rnorm) = residual(m, &x, lambda);
        if rnorm <= tol {
            fix_sign(&mut x);
            return Ok((lambda, x));
        }
        if rnorm < best_resid * 0.995 {
            best_resid = rnorm;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= STAGNATION_WINDOW {
                break;
            }
        }

        // Jacobi-preconditioned residual, shifted by the current estimate.
        let w: Vec<f64> = r
            .iter()
            .zip(&diag)
            .map(|(ri, di)| {
                let denom = math::max(di - lambda, 1e-8 * diag_scale);
                ri / denom
            })
            .collect();

        let mut basis = vec![x.clone(), w];
        if let Some(prev) = &p {
            basis.push(prev.clone());
        }
        orthonormalize(&mut basis);
        if basis.is_empty() {
            break;
        }
        let (theta, y) = rayleigh_ritz(m, &basis)?;

        let mut x_new = vec![0.0; n];
        for (c, v) in y.iter().zip(&basis) {
            for i in 0..n {
                x_new[i] += c * v[i];
            }
        }
        // Correction component (everything except the x direction) becomes
        // the next conjugate direction.
        let mut p_new = vec![0.0; n];
        for (c, v) in y.iter().zip(&basis).skip(1) {
            for i in 0..n {
                p_new[i] += c * v[i];
            }
        }
        normalize(&mut x_new);
        if normalize(&mut p_new) > 0.0 {
            p = Some(p_new);
        } else {
            p = None;
        }
        x = x_new;
        lambda = theta;
    }

    // Shifted inverse iteration fallback. A shift σ below λ_min makes
    // M − σI positive definite, so a failed LDLᵀ factorization is itself the
    // signal that σ overshot; bisecting between the Gershgorin floor and the
    // Rayleigh estimate finds a usable shift, and each factored solve then
    // contracts toward the ground eigenvector at rate (λ_min−σ)/(λ₂−σ).
    let (_, gersh_lo, _) = super::gersh::gershgorin_bounds(m);
    let mut hi = lambda;
    let mut offset = math::max(4.0 * best_resid, 1e-9 * diag_scale);
    for _attempt in 0..48 {
        let sigma = math::max(hi - offset, gersh_lo - 1e-9 * diag_scale - 1e-300);
        match super::ldl::LdlFactor::factor(&m.shifted(-sigma)) {
            Err(_) => {
                // σ ≥ λ_min: widen the offset (and remember the ceiling).
                hi = math::min(hi, sigma);
                offset *= 4.0;
                if sigma <= gersh_lo - 1e-9 * diag_scale {
                    break;
                }
            }
            Ok(factor) => {
                let mut xi = x.clone();
                for _ in 0..60 {
                    let mut z = factor.solve(&xi);
                    if normalize(&mut z) == 0.0 {
                        break;
                    }
                    xi = z;
                    let theta = m.quadratic_form(&xi, &xi);
                    let (_, rnorm) = residual(m, &xi, theta);
                    if rnorm < best_resid {
                        best_resid = rnorm;
                        x = xi.clone();
                        lambda = theta;
                    }
                    if rnorm <= tol {
                        fix_sign(&mut x);
                        return Ok((lambda, x));
                    }
                }
                // Converged geometry but not to tolerance: move the shift
                // closer beneath the improved estimate.
                hi = math::min(hi, lambda);
                offset = math::max(4.0 * best_resid, 1e-12 * diag_scale);
                if offset < 1e-14 * diag_scale {
                    break;
                }
            }
        }
    }
    Err(LinalgError::EigNoConvergence(best_resid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SymmetricBuilder;

    fn path_laplacian(n: usize) -> SparseSymmetric {
        let mut b = SymmetricBuilder::new(n);
        for i in 0..n - 1 {
            b.add(i, i + 1, -1.0).unwrap();
            b.add(i, i, 1.0).unwrap();
            b.add(i + 1, i + 1, 1.0).unwrap();
        }
        b.build()
    }

    #[test]
    fn laplacian_ground_state_is_constant() {
        let m = path_laplacian(12);
        let (lambda, v) = smallest_eigpair(&m, 1e-10).unwrap();
        assert!(lambda.abs() < 1e-9, "lambda = {lambda}");
        let c = 1.0 / (12.0f64).sqrt();
        for x in v {
            assert!((x - c).abs() < 1e-5);
        }
    }

    #[test]
    fn two_by_two_analytic() {
        let mut b = SymmetricBuilder::new(2);
        b.add(0, 0, 2.0).unwrap();
        b.add(0, 1, -1.0).unwrap();
        b.add(1, 1, 3.0).unwrap();
        let m = b.build();
        let (lambda, v) = smallest_eigpair(&m, 1e-12).unwrap();
        let expect = (5.0 - 5.0f64.sqrt()) / 2.0;
        assert!((lambda - expect).abs() < 1e-10);
        assert!((norm(&v) - 1.0).abs() < 1e-12);
        assert!(v[0] > 0.0);
    }

    #[test]
    fn random_psd_matches_dense_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        let n = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut r = crate::dense::DenseMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                *r.at_mut(i, j) = rng.random::<f64>() - 0.5;
            }
        }
        let mut a = r.transpose().matmul(&r);
        for i in 0..n {
            *a.at_mut(i, i) += 0.5;
        }
        let m = SparseSymmetric::from_dense_lower(&a);
        let (lambda, v) = smallest_eigpair(&m, 1e-9).unwrap();
        let oracle = dense_eig(&a).unwrap().min_eigenvalue();
        assert!((lambda - oracle).abs() <= 1e-7, "{lambda} vs {oracle}");
        let (_, rnorm) = residual(&m, &v, lambda);
        assert!(rnorm <= 1e-9);
    }

    #[test]
    fn respects_initial_guess() {
        let m = path_laplacian(40);
        let ones = vec![1.0; 40];
        let (lambda, _) = smallest_eigpair_from(&m, Some(&ones), 1e-12, 50).unwrap();
        assert!(lambda.abs() < 1e-12);
    }
}

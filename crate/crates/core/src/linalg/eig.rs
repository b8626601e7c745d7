//! Dense symmetric eigendecomposition: Householder reduction to tridiagonal
//! form followed by the implicit-shift QL sweep, with eigenvector
//! accumulation. Doubles as the test oracle for the iterative solvers and as
//! the dense graph-spectral-filter path.

use alloc::vec;
use alloc::vec::Vec;

use super::LinalgError;
use crate::dense::DenseMat;
use crate::math;
use crate::sparse::SparseSymmetric;

/// Dense paths refuse to run above this dimension.
pub const DENSE_EIG_CAP: usize = 500;

/// Full spectrum of a symmetric matrix, eigenvalues ascending, eigenvectors
/// in the matching columns of `vectors`.
#[derive(Debug, Clone)]
pub struct DenseEigDecomposition {
    pub eigenvalues: Vec<f64>,
    pub vectors: DenseMat,
}

impl DenseEigDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| self.vectors.at(i, k)).collect()
    }

    /// Spectral attenuation `1/(1 + γ μ_i)` per eigenvalue.
    pub fn spectral_response(&self, gamma: f64) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|mu| 1.0 / (1.0 + gamma * mu))
            .collect()
    }

    /// Applies `Φ f(μ) Φᵀ x` for the diagonal response `f`.
    pub fn apply_filter(&self, response: &[f64], x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut coeff = vec![0.0; n];
        for k in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += self.vectors.at(i, k) * x[i];
            }
            coeff[k] = acc * response[k];
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += self.vectors.at(i, k) * coeff[k];
            }
            out[i] = acc;
        }
        out
    }
}

/// Householder reduction of the symmetric matrix in `z` to tridiagonal form;
/// `z` accumulates the orthogonal transform, `d` receives the diagonal and
/// `e` the subdiagonal (in `e[1..]`).
fn tred2(z: &mut DenseMat, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += math::abs(z.at(i, k));
            }
            if scale == 0.0 {
                e[i] = z.at(i, l);
            } else {
                for k in 0..=l {
                    *z.at_mut(i, k) /= scale;
                    h += z.at(i, k) * z.at(i, k);
                }
                let f = z.at(i, l);
                let g = if f >= 0.0 { -math::sqrt(h) } else { math::sqrt(h) };
                e[i] = scale * g;
                h -= f * g;
                *z.at_mut(i, l) = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    *z.at_mut(j, i) = z.at(i, j) / h;
                    let mut g_acc = 0.0;
                    for k in 0..=j {
                        g_acc += z.at(j, k) * z.at(i, k);
                    }
                    for k in (j + 1)..=l {
                        g_acc += z.at(k, j) * z.at(i, k);
                    }
                    e[j] = g_acc / h;
                    f_acc += e[j] * z.at(i, j);
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = z.at(i, j);
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        *z.at_mut(j, k) -= f * e[k] + g * z.at(i, k);
                    }
                }
            }
        } else {
            e[i] = z.at(i, l);
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += z.at(i, k) * z.at(k, j);
                }
                for k in 0..i {
                    *z.at_mut(k, j) -= g * z.at(k, i);
                }
            }
        }
        d[i] = z.at(i, i);
        *z.at_mut(i, i) = 1.0;
        for j in 0..i {
            *z.at_mut(j, i) = 0.0;
            *z.at_mut(i, j) = 0.0;
        }
    }
}

/// Implicit-shift QL sweep on the tridiagonal (`d`, `e[1..]`); rotations are
/// accumulated into the columns of `z`.
fn tql2(d: &mut [f64], e: &mut [f64], z: &mut DenseMat) -> Result<(), LinalgError> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = math::abs(d[m]) + math::abs(d[m + 1]);
                if math::abs(e[m]) <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(LinalgError::QlIterationBudget(l));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = math::pythag(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + math::copysign(r, g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = math::pythag(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z.at(k, i + 1);
                    *z.at_mut(k, i + 1) = s * z.at(k, i) + c * f;
                    *z.at_mut(k, i) = c * z.at(k, i) - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn sort_ascending(d: &mut [f64], z: &mut DenseMat) {
    let n = d.len();
    // Selection sort keeps the eigenvector columns in step; n is dense-sized.
    for i in 0..n {
        let mut k = i;
        for j in (i + 1)..n {
            if d[j] < d[k] {
                k = j;
            }
        }
        if k != i {
            d.swap(i, k);
            for row in 0..z.rows() {
                let tmp = z.at(row, i);
                *z.at_mut(row, i) = z.at(row, k);
                *z.at_mut(row, k) = tmp;
            }
        }
    }
}

/// Full eigendecomposition of a symmetric dense matrix (dimension capped at
/// [`DENSE_EIG_CAP`]).
pub fn dense_eig(m: &DenseMat) -> Result<DenseEigDecomposition, LinalgError> {
    let n = m.rows();
    if n != m.cols() {
        return Err(LinalgError::DimMismatch {
            expected: n,
            got: m.cols(),
        });
    }
    if n > DENSE_EIG_CAP {
        return Err(LinalgError::DenseCap {
            dim: n,
            cap: DENSE_EIG_CAP,
        });
    }
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = math::max(asym, math::abs(m.at(i, j) - m.at(j, i)));
        }
    }
    let scale = math::max(m.max_abs(), 1.0);
    if asym > 1e-9 * scale {
        return Err(LinalgError::NotSymmetric(asym));
    }
    if n == 0 {
        return Ok(DenseEigDecomposition {
            eigenvalues: Vec::new(),
            vectors: DenseMat::zeros(0, 0),
        });
    }
    let mut z = m.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut z, &mut d, &mut e);
    tql2(&mut d, &mut e, &mut z)?;
    sort_ascending(&mut d, &mut z);
    Ok(DenseEigDecomposition {
        eigenvalues: d,
        vectors: z,
    })
}

/// Eigendecomposition of a symmetric tridiagonal matrix given its diagonal
/// and subdiagonal; returns ascending eigenvalues and the orthogonal `Q`.
pub fn sym_tridiag_eig(
    diag: &[f64],
    subdiag: &[f64],
) -> Result<(Vec<f64>, DenseMat), LinalgError> {
    let n = diag.len();
    assert!(subdiag.len() + 1 == n || (n == 0 && subdiag.is_empty()));
    let mut d = diag.to_vec();
    // tql2 expects the subdiagonal in e[1..].
    let mut e = vec![0.0; n];
    for i in 1..n {
        e[i] = subdiag[i - 1];
    }
    let mut z = DenseMat::identity(n);
    tql2(&mut d, &mut e, &mut z)?;
    sort_ascending(&mut d, &mut z);
    Ok((d, z))
}

/// Solves `(I + γ L̃) p = q̃` through the dense eigendecomposition of `L̃`
/// (graph spectral filtering with response `1/(1 + γ μ_i)`).
pub fn gsf_solve(
    ltilde: &SparseSymmetric,
    qtilde: &[f64],
    gamma: f64,
) -> Result<Vec<f64>, LinalgError> {
    let n = ltilde.dim();
    if n > DENSE_EIG_CAP {
        return Err(LinalgError::DenseCap {
            dim: n,
            cap: DENSE_EIG_CAP,
        });
    }
    if qtilde.len() != n {
        return Err(LinalgError::DimMismatch {
            expected: n,
            got: qtilde.len(),
        });
    }
    let eig = dense_eig(&ltilde.to_dense())?;
    let response = eig.spectral_response(gamma);
    Ok(eig.apply_filter(&response, qtilde))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DenseMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DenseMat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.random::<f64>() * 2.0 - 1.0;
                *m.at_mut(i, j) = v;
                *m.at_mut(j, i) = v;
            }
        }
        m
    }

    #[test]
    fn diagonal_matrix_spectrum() {
        let mut m = DenseMat::zeros(3, 3);
        *m.at_mut(0, 0) = 1.0;
        *m.at_mut(1, 1) = 2.0;
        *m.at_mut(2, 2) = 3.0;
        let eig = dense_eig(&m).unwrap();
        assert!((eig.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((eig.eigenvalues[1] - 2.0).abs() < 1e-12);
        assert!((eig.eigenvalues[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_analytic() {
        let mut m = DenseMat::zeros(2, 2);
        *m.at_mut(0, 0) = 2.0;
        *m.at_mut(0, 1) = -1.0;
        *m.at_mut(1, 0) = -1.0;
        *m.at_mut(1, 1) = 2.0;
        let eig = dense_eig(&m).unwrap();
        assert!((eig.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((eig.eigenvalues[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn residual_and_orthonormality_random_50() {
        let m = random_symmetric(50, 17);
        let eig = dense_eig(&m).unwrap();
        // M φ_k = μ_k φ_k
        for k in 0..50 {
            let v = eig.eigenvector(k);
            let mv = m.matvec(&v);
            let mut resid = 0.0f64;
            for i in 0..50 {
                resid += (mv[i] - eig.eigenvalues[k] * v[i]).powi(2);
            }
            assert!(resid.sqrt() < 1e-8, "eigenpair {k} residual {}", resid.sqrt());
        }
        // ΦᵀΦ = I
        let q = &eig.vectors;
        for a in 0..50 {
            for b in 0..50 {
                let mut dot = 0.0;
                for i in 0..50 {
                    dot += q.at(i, a) * q.at(i, b);
                }
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn reconstruction_residual() {
        let m = random_symmetric(30, 5);
        let eig = dense_eig(&m).unwrap();
        let mut recon = DenseMat::zeros(30, 30);
        for k in 0..30 {
            let v = eig.eigenvector(k);
            for i in 0..30 {
                for j in 0..30 {
                    *recon.at_mut(i, j) += eig.eigenvalues[k] * v[i] * v[j];
                }
            }
        }
        assert!(recon.minus(&m).max_abs() < 1e-8);
    }

    #[test]
    fn rejects_asymmetric() {
        let mut m = DenseMat::zeros(2, 2);
        *m.at_mut(0, 1) = 1.0;
        assert!(matches!(dense_eig(&m), Err(LinalgError::NotSymmetric(_))));
    }

    #[test]
    fn tridiag_path_matches_dense() {
        let diag = [2.0, 3.0, 1.0, 4.0];
        let sub = [-1.0, 0.5, -0.25];
        let (vals, q) = sym_tridiag_eig(&diag, &sub).unwrap();
        let mut m = DenseMat::zeros(4, 4);
        for i in 0..4 {
            *m.at_mut(i, i) = diag[i];
        }
        for i in 0..3 {
            *m.at_mut(i, i + 1) = sub[i];
            *m.at_mut(i + 1, i) = sub[i];
        }
        let eig = dense_eig(&m).unwrap();
        for k in 0..4 {
            assert!((vals[k] - eig.eigenvalues[k]).abs() < 1e-12);
            // Columns of q are eigenvectors of the tridiagonal matrix.
            let v: Vec<f64> = (0..4).map(|i| q.at(i, k)).collect();
            let mv = m.matvec(&v);
            for i in 0..4 {
                assert!((mv[i] - vals[k] * v[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gsf_identity_when_gamma_zero() {
        let mut b = crate::sparse::SymmetricBuilder::new(3);
        b.add(0, 0, 2.0).unwrap();
        b.add(0, 1, -1.0).unwrap();
        b.add(1, 1, 2.0).unwrap();
        b.add(2, 2, 1.0).unwrap();
        let l = b.build();
        let q = [1.0, -2.0, 0.5];
        let p = gsf_solve(&l, &q, 0.0).unwrap();
        for i in 0..3 {
            assert!((p[i] - q[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gsf_eigenvector_attenuation() {
        let mut b = crate::sparse::SymmetricBuilder::new(2);
        b.add(0, 0, 2.0).unwrap();
        b.add(0, 1, -1.0).unwrap();
        b.add(1, 0, 0.0).unwrap();
        b.add(1, 1, 2.0).unwrap();
        let l = b.build();
        let eig = dense_eig(&l.to_dense()).unwrap();
        let gamma = 0.7;
        for k in 0..2 {
            let v = eig.eigenvector(k);
            let p = gsf_solve(&l, &v, gamma).unwrap();
            let expect = 1.0 / (1.0 + gamma * eig.eigenvalues[k]);
            for i in 0..2 {
                assert!((p[i] - expect * v[i]).abs() < 1e-12);
            }
        }
    }
}

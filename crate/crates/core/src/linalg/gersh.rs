//! Gershgorin disc bookkeeping and the condition-number bound built on it.

use alloc::vec::Vec;

use super::LinalgError;
use crate::math;
use crate::sparse::SparseSymmetric;

/// Per-row Gershgorin discs: center `c_i = M(i,i)`, radius
/// `r_i = Σ_{j≠i} |M(i,j)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discs {
    pub centers: Vec<f64>,
    pub radii: Vec<f64>,
}

impl Discs {
    pub fn left_ends(&self) -> Vec<f64> {
        self.centers
            .iter()
            .zip(&self.radii)
            .map(|(c, r)| c - r)
            .collect()
    }

    pub fn right_ends(&self) -> Vec<f64> {
        self.centers
            .iter()
            .zip(&self.radii)
            .map(|(c, r)| c + r)
            .collect()
    }
}

/// Discs plus the eigenvalue bracket `[min(c−r), max(c+r)]`.
pub fn gershgorin_bounds(m: &SparseSymmetric) -> (Discs, f64, f64) {
    let n = m.dim();
    let mut centers = Vec::with_capacity(n);
    let mut radii = Vec::with_capacity(n);
    for i in 0..n {
        let mut c = 0.0;
        let mut r = 0.0;
        for (j, v) in m.row(i) {
            if j == i {
                c = v;
            } else {
                r += math::abs(v);
            }
        }
        centers.push(c);
        radii.push(r);
    }
    let lower = centers
        .iter()
        .zip(&radii)
        .map(|(c, r)| c - r)
        .fold(f64::INFINITY, math::min);
    let upper = centers
        .iter()
        .zip(&radii)
        .map(|(c, r)| c + r)
        .fold(f64::NEG_INFINITY, math::max);
    (Discs { centers, radii }, lower, upper)
}

/// Ingredients of the linearized-system condition bound: a Gershgorin upper
/// bound on the prior Laplacian's largest eigenvalue and the worst-case
/// normal-estimation geometry `min_i ‖p_i − p_k‖² sin² β_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBounds {
    pub rho_max: f64,
    pub min_geom: f64,
}

impl SpectralBounds {
    pub fn new(prior_laplacian: &SparseSymmetric, min_geom: f64) -> Self {
        let (_, _, upper) = gershgorin_bounds(prior_laplacian);
        SpectralBounds {
            rho_max: upper,
            min_geom,
        }
    }
}

/// Upper bound `1 + 6 γ ρ_max / min_geom` on the condition number of the
/// linearized denoising system.
pub fn condition_bound(gamma: f64, bounds: &SpectralBounds) -> Result<f64, LinalgError> {
    if bounds.min_geom <= 0.0 {
        return Err(LinalgError::DegenerateGeometry(bounds.min_geom));
    }
    Ok(1.0 + 6.0 * gamma * bounds.rho_max / bounds.min_geom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense_eig;
    use crate::sparse::SymmetricBuilder;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_by_two_analytic() {
        let mut b = SymmetricBuilder::new(2);
        b.add(0, 0, 2.0).unwrap();
        b.add(0, 1, -1.0).unwrap();
        b.add(1, 1, 2.0).unwrap();
        let (discs, lo, hi) = gershgorin_bounds(&b.build());
        assert_eq!(discs.centers, alloc::vec![2.0, 2.0]);
        assert_eq!(discs.radii, alloc::vec![1.0, 1.0]);
        assert_eq!(lo, 1.0);
        assert_eq!(hi, 3.0);
    }

    #[test]
    fn laplacian_lower_bound_is_zero() {
        // Combinatorial Laplacian of a positive path graph.
        let mut b = SymmetricBuilder::new(3);
        b.add(0, 0, 1.0).unwrap();
        b.add(0, 1, -1.0).unwrap();
        b.add(1, 1, 2.0).unwrap();
        b.add(1, 2, -1.0).unwrap();
        b.add(2, 2, 1.0).unwrap();
        let (_, lo, _) = gershgorin_bounds(&b.build());
        assert_eq!(lo, 0.0);
    }

    #[test]
    fn bounds_bracket_dense_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..5 {
            let n = 30;
            let mut b = SymmetricBuilder::new(n);
            for i in 0..n {
                for j in i..n {
                    if i == j || rng.random::<f64>() < 0.2 {
                        b.add(i, j, rng.random::<f64>() * 2.0 - 1.0).unwrap();
                    }
                }
            }
            let m = b.build();
            let (_, lo, hi) = gershgorin_bounds(&m);
            let eig = dense_eig(&m.to_dense()).unwrap();
            for ev in eig.eigenvalues {
                assert!(ev >= lo - 1e-12 && ev <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn condition_bound_arithmetic() {
        let b = SpectralBounds {
            rho_max: 6.0,
            min_geom: 1.0,
        };
        assert_eq!(condition_bound(0.5, &b).unwrap(), 19.0);
        assert_eq!(condition_bound(0.0, &b).unwrap(), 1.0);
        let bad = SpectralBounds {
            rho_max: 1.0,
            min_geom: 0.0,
        };
        assert!(condition_bound(1.0, &bad).is_err());
    }
}

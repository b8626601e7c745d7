//! Sparse symmetric kernels: conjugate gradient, smallest-eigenpair solver,
//! Lanczos spectral filtering, Gershgorin discs, sparse LDLᵀ and the dense
//! eigendecomposition oracle.

mod cg;
mod eig;
mod gersh;
mod lanczos;
mod ldl;
mod lobpcg;

pub use cg::{cg_solve, cg_solve_from};
pub use eig::{dense_eig, gsf_solve, sym_tridiag_eig, DenseEigDecomposition, DENSE_EIG_CAP};
pub use gersh::{condition_bound, gershgorin_bounds, Discs, SpectralBounds};
pub use lanczos::{lanczos_basis, lanczos_filter, LanczosBasis};
pub use ldl::{rcm_order, LdlFactor};
pub use lobpcg::{smallest_eigpair, smallest_eigpair_from};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("dimension {dim} exceeds the dense-path cap {cap}")]
    DenseCap { dim: usize, cap: usize },
    #[error("matrix is not symmetric (max asymmetry {0})")]
    NotSymmetric(f64),
    #[error("CG did not converge in {iters} iterations (relative residual {residual})")]
    CgNoConvergence { iters: usize, residual: f64 },
    #[error("CG breakdown: matrix appears indefinite (curvature {0})")]
    CgIndefinite(f64),
    #[error("eigensolver did not converge (residual {0})")]
    EigNoConvergence(f64),
    #[error("QL sweep exceeded its iteration budget on index {0}")]
    QlIterationBudget(usize),
    #[error("matrix is not positive definite (pivot {index} = {pivot})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("geometry bound requires min_geom > 0, got {0}")]
    DegenerateGeometry(f64),
}

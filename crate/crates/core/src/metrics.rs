//! Quality and similarity metrics: point-to-point and point-to-plane cloud
//! distances, Frobenius relative Laplacian error, DELTACON graph similarity,
//! and smallest-eigenvalue reporting for sampling systems.

use alloc::vec;
use alloc::vec::Vec;

use crate::cloud::{nearest_neighbors_between, PointCloud};
use crate::linalg::{dense_eig, smallest_eigpair, LdlFactor, LinalgError, DENSE_EIG_CAP};
use crate::math;
use crate::normals::{pca_normals, NormalError};
use crate::sampling::{system_matrix, SamplingSet};
use crate::sparse::{SparseSymmetric, SymmetricBuilder};
use crate::vec3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("graphs have different node counts ({0} vs {1})")]
    NodeCountMismatch(usize, usize),
    #[error("matrix dimensions differ ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("reference Laplacian has zero Frobenius norm")]
    ZeroReference,
    #[error("similarity system I + ε²D − εA is not positive definite")]
    NonPositiveDefinite,
    #[error(transparent)]
    Cloud(#[from] crate::cloud::CloudError),
    #[error(transparent)]
    Normals(#[from] NormalError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    /// DELTACON ε; `None` picks `1 / (1 + max unsigned degree)`, which keeps
    /// the similarity system strictly diagonally dominant.
    pub dcs_epsilon: Option<f64>,
    /// Neighbors used for the tangent-plane normals of the point-to-plane
    /// distance.
    pub c2p_normal_k: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            dcs_epsilon: None,
            c2p_normal_k: 12,
        }
    }
}

fn directed_c2c(from: &PointCloud, to: &PointCloud) -> f64 {
    let nn = nearest_neighbors_between(&from.points, &to.points);
    let total: f64 = from
        .points
        .iter()
        .zip(&nn)
        .map(|(&p, &j)| vec3::dist(p, to.points[j]))
        .sum();
    total / from.len() as f64
}

/// Point-to-point cloud distance: the larger of the two directed mean
/// nearest-neighbor distances.
pub fn c2c(gt: &PointCloud, rec: &PointCloud) -> Result<f64, MetricError> {
    if gt.is_empty() || rec.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    Ok(math::max(directed_c2c(gt, rec), directed_c2c(rec, gt)))
}

/// Mean distance from `from` points to the tangent planes anchored at their
/// nearest neighbors in `to` (planes from PCA normals on `to`).
pub fn c2p_directed(
    from: &PointCloud,
    to: &PointCloud,
    cfg: &MetricsConfig,
) -> Result<f64, MetricError> {
    if from.is_empty() || to.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let k = cfg.c2p_normal_k.min(to.len().saturating_sub(1)).max(3);
    let normals = pca_normals(to, k)?;
    let nn = nearest_neighbors_between(&from.points, &to.points);
    let total: f64 = from
        .points
        .iter()
        .zip(&nn)
        .map(|(&p, &j)| math::abs(vec3::dot(normals[j], vec3::sub(p, to.points[j]))))
        .sum();
    Ok(total / from.len() as f64)
}

/// Point-to-plane cloud distance: the larger of the two directed means.
pub fn c2p(gt: &PointCloud, rec: &PointCloud, cfg: &MetricsConfig) -> Result<f64, MetricError> {
    Ok(math::max(
        c2p_directed(gt, rec, cfg)?,
        c2p_directed(rec, gt, cfg)?,
    ))
}

/// `‖L − L_B‖_F / ‖L‖_F`
pub fn relative_error(
    l: &SparseSymmetric,
    l_b: &SparseSymmetric,
) -> Result<f64, MetricError> {
    if l.dim() != l_b.dim() {
        return Err(MetricError::DimMismatch(l.dim(), l_b.dim()));
    }
    let denom = l.frobenius_norm();
    if denom == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    Ok(l.frobenius_distance(l_b) / denom)
}

fn similarity_matrix(
    g: &crate::graph::WeightedGraph,
    eps: f64,
) -> Result<Vec<Vec<f64>>, MetricError> {
    let n = g.node_count();
    // Adjacency without self-loops; degree is the signed row sum.
    let mut b = SymmetricBuilder::new(n);
    let mut degree = vec![0.0; n];
    for e in g.edges() {
        degree[e.i] += e.w;
        degree[e.j] += e.w;
        b.add(e.i, e.j, -eps * e.w).unwrap();
    }
    for i in 0..n {
        b.add(i, i, 1.0 + eps * eps * degree[i]).unwrap();
    }
    let system = b.build();
    let factor = LdlFactor::factor(&system).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { .. } => MetricError::NonPositiveDefinite,
        other => MetricError::Linalg(other),
    })?;
    let mut cols = Vec::with_capacity(n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        cols.push(factor.solve(&e));
        e[j] = 0.0;
    }
    Ok(cols)
}

/// DELTACON similarity in `(0, 1]`: Matusita distance between the two
/// graphs' node-similarity matrices `[I + ε²D − εA]⁻¹`, mapped through
/// `1/(1 + d)`. Negative similarity entries are clamped to zero before the
/// square roots.
pub fn deltacon_similarity(
    g_a: &crate::graph::WeightedGraph,
    g_b: &crate::graph::WeightedGraph,
    cfg: &MetricsConfig,
) -> Result<f64, MetricError> {
    let n = g_a.node_count();
    if n != g_b.node_count() {
        return Err(MetricError::NodeCountMismatch(n, g_b.node_count()));
    }
    if n == 0 {
        return Ok(1.0);
    }
    let eps = match cfg.dcs_epsilon {
        Some(e) => e,
        None => {
            let mut max_deg = 0.0f64;
            for g in [g_a, g_b] {
                let mut deg = vec![0.0; n];
                for e in g.edges() {
                    deg[e.i] += math::abs(e.w);
                    deg[e.j] += math::abs(e.w);
                }
                for d in deg {
                    max_deg = math::max(max_deg, d);
                }
            }
            1.0 / (1.0 + max_deg)
        }
    };
    let sa = similarity_matrix(g_a, eps)?;
    let sb = similarity_matrix(g_b, eps)?;
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            let a = math::sqrt(math::max(sa[j][i], 0.0));
            let b = math::sqrt(math::max(sb[j][i], 0.0));
            acc += (a - b) * (a - b);
        }
    }
    let d_m = math::sqrt(acc);
    Ok(1.0 / (1.0 + d_m))
}

/// `λ_min(HᵀH + μ𝓛)`: dense oracle up to [`DENSE_EIG_CAP`], iterative
/// solver above.
pub fn lambda_min_report(
    samples: &SamplingSet,
    ltilde: &SparseSymmetric,
    mu: f64,
    coord_block: usize,
) -> Result<f64, MetricError> {
    let b = system_matrix(samples, ltilde, mu, coord_block);
    if b.dim() <= DENSE_EIG_CAP {
        Ok(dense_eig(&b.to_dense())?.min_eigenvalue())
    } else {
        let scale = b.diagonal().iter().fold(1.0f64, |s, d| math::max(s, math::abs(*d)));
        let (lambda, _) = smallest_eigpair(&b, 1e-7 * scale)?;
        Ok(lambda)
    }
}

//! Signed weighted graphs, edge-weight computation, Laplacians, smoothness
//! functionals and the GMRF covariance model.

mod bipartite;

pub use bipartite::{bipartite_approx, BipartiteApprox, BipartiteStep};

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::cloud::{knn_search, PointCloud};
use crate::linalg::{cg_solve, LdlFactor, LinalgError};
use crate::math;
use crate::sparse::{SparseSymmetric, SymmetricBuilder};
use crate::vec3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("edge ({i}, {j}) out of bounds for {n} nodes")]
    EdgeOutOfBounds { i: usize, j: usize, n: usize },
    #[error("edge ({i}, {j}) is a self-loop; use the self_loops field")]
    SelfLoopEdge { i: usize, j: usize },
    #[error("duplicate edge ({i}, {j})")]
    DuplicateEdge { i: usize, j: usize },
    #[error("edge ({i}, {j}) has non-finite or zero weight")]
    BadWeight { i: usize, j: usize },
    #[error("point cloud has no normals; estimate them first")]
    MissingNormals,
    #[error("graph config: {0}")]
    BadConfig(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Cloud(#[from] crate::cloud::CloudError),
    #[error(transparent)]
    Normals(#[from] alloc::boxed::Box<crate::normals::NormalError>),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl From<crate::normals::NormalError> for GraphError {
    fn from(e: crate::normals::NormalError) -> Self {
        GraphError::Normals(alloc::boxed::Box::new(e))
    }
}

/// Undirected edge with `i < j` and nonzero finite weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Signed weighted undirected graph with optional self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    node_count: usize,
    edges: Vec<Edge>,
    self_loops: Vec<f64>,
}

impl WeightedGraph {
    pub fn new(node_count: usize) -> Self {
        Self {
            node_count,
            edges: Vec::new(),
            self_loops: vec![0.0; node_count],
        }
    }

    /// Builds a validated graph. Edges may be given in any orientation; they
    /// are normalized to `i < j` and must not repeat.
    pub fn from_edges(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
        self_loops: Option<Vec<f64>>,
    ) -> Result<Self, GraphError> {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (a, b, w) in edges {
            if a >= node_count || b >= node_count {
                return Err(GraphError::EdgeOutOfBounds {
                    i: a,
                    j: b,
                    n: node_count,
                });
            }
            if a == b {
                return Err(GraphError::SelfLoopEdge { i: a, j: b });
            }
            if !w.is_finite() || w == 0.0 {
                return Err(GraphError::BadWeight { i: a, j: b });
            }
            let key = (a.min(b), a.max(b));
            if map.insert(key, w).is_some() {
                return Err(GraphError::DuplicateEdge { i: key.0, j: key.1 });
            }
        }
        let self_loops = match self_loops {
            Some(u) => {
                if u.len() != node_count {
                    return Err(GraphError::DimMismatch {
                        expected: node_count,
                        got: u.len(),
                    });
                }
                u
            }
            None => vec![0.0; node_count],
        };
        Ok(Self {
            node_count,
            edges: map
                .into_iter()
                .map(|((i, j), w)| Edge { i, j, w })
                .collect(),
            self_loops,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn self_loops(&self) -> &[f64] {
        &self.self_loops
    }

    pub fn set_self_loops(&mut self, loops: Vec<f64>) {
        assert_eq!(loops.len(), self.node_count);
        self.self_loops = loops;
    }

    /// Neighbor lists `(neighbor, weight)`, ascending by neighbor.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for e in &self.edges {
            adj[e.i].push((e.j, e.w));
            adj[e.j].push((e.i, e.w));
        }
        for list in adj.iter_mut() {
            list.sort_by_key(|&(j, _)| j);
        }
        adj
    }

    /// Connected components (by edge structure), each ascending, ordered by
    /// smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.node_count];
        let mut out = Vec::new();
        for start in 0..self.node_count {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut head = 0;
            while head < comp.len() {
                let u = comp[head];
                head += 1;
                for &(v, _) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Connected components when edges with `|w| < min_abs` are ignored.
    /// Numerically negligible couplings otherwise force eigenvector entries
    /// arbitrarily close to zero.
    pub fn components_with_min_weight(&self, min_abs: f64) -> Vec<Vec<usize>> {
        let filtered = WeightedGraph::from_edges(
            self.node_count,
            self.edges
                .iter()
                .filter(|e| crate::math::abs(e.w) >= min_abs)
                .map(|e| (e.i, e.j, e.w)),
            None,
        )
        .unwrap();
        filtered.components()
    }

    pub fn max_abs_edge_weight(&self) -> f64 {
        self.edges
            .iter()
            .fold(0.0f64, |m, e| crate::math::max(m, crate::math::abs(e.w)))
    }

    /// Graph induced on `nodes` (which must be sorted ascending); node `k` of
    /// the result corresponds to `nodes[k]`.
    pub fn subgraph(&self, nodes: &[usize]) -> WeightedGraph {
        let mut local = BTreeMap::new();
        for (k, &v) in nodes.iter().enumerate() {
            local.insert(v, k);
        }
        let edges = self
            .edges
            .iter()
            .filter_map(|e| match (local.get(&e.i), local.get(&e.j)) {
                (Some(&a), Some(&b)) => Some((a, b, e.w)),
                _ => None,
            })
            .collect::<Vec<_>>();
        let loops = nodes.iter().map(|&v| self.self_loops[v]).collect();
        WeightedGraph::from_edges(nodes.len(), edges, Some(loops)).unwrap()
    }

    /// Reads a generalized Laplacian as a signed graph: off-diagonal entry
    /// `M(i,j)` becomes an edge of weight `−M(i,j)`, and whatever remains on
    /// the diagonal after removing edge degrees becomes a self-loop.
    pub fn from_generalized_laplacian(m: &SparseSymmetric) -> WeightedGraph {
        let n = m.dim();
        let mut edges = Vec::new();
        let mut degree = vec![0.0; n];
        for i in 0..n {
            for (j, v) in m.row(i) {
                if j > i && v != 0.0 {
                    edges.push((i, j, -v));
                    degree[i] += -v;
                    degree[j] += -v;
                }
            }
        }
        let loops = (0..n).map(|i| m.entry(i, i) - degree[i]).collect();
        WeightedGraph::from_edges(n, edges, Some(loops)).unwrap()
    }
}

/// Parameters of the distance/normal edge weight kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphConfig {
    pub k: usize,
    pub sigma_p: f64,
    pub sigma_n: f64,
}

/// Graph-construction knobs with deferred bandwidth resolution and the GMRF
/// regularization shared by balancing and bipartition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    pub k: usize,
    /// Distance bandwidth; `None` resolves to the RMS kNN distance.
    pub sigma_p: Option<f64>,
    pub sigma_n: f64,
    pub delta: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            k: 8,
            sigma_p: None,
            sigma_n: 1.0,
            delta: 1e-4,
        }
    }
}

impl GraphParams {
    pub fn resolve(&self, cloud: &PointCloud) -> Result<GraphConfig, GraphError> {
        let sigma_p = match self.sigma_p {
            Some(s) => s,
            None => mean_knn_distance(cloud, self.k)?,
        };
        Ok(GraphConfig {
            k: self.k,
            sigma_p,
            sigma_n: self.sigma_n,
        })
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.k < 2 {
            return Err(GraphError::BadConfig("k must be at least 2"));
        }
        if !(self.sigma_p > 0.0) || !(self.sigma_n > 0.0) {
            return Err(GraphError::BadConfig("sigma_p and sigma_n must be positive"));
        }
        Ok(())
    }
}

/// Root-mean-square k-nearest-neighbor distance, the default `sigma_p`.
pub fn mean_knn_distance(cloud: &PointCloud, k: usize) -> Result<f64, GraphError> {
    let nn = knn_search(cloud, k.min(cloud.len().saturating_sub(1)))?;
    let mut acc = 0.0;
    let mut count = 0usize;
    for (i, list) in nn.iter().enumerate() {
        for &j in list {
            acc += vec3::dist_sq(cloud.points[i], cloud.points[j]);
            count += 1;
        }
    }
    if count == 0 {
        return Err(GraphError::BadConfig("not enough points for a kNN scale"));
    }
    Ok(math::sqrt(acc / count as f64))
}

/// k-nearest-neighbor graph with bilateral-style weights
/// `exp(−‖p_i−p_j‖²/σ_p² − ‖n_i−n_j‖²/σ_n²)`. An edge exists when either
/// endpoint lists the other among its k nearest ("or" symmetrization).
pub fn build_knn_graph(cloud: &PointCloud, cfg: &GraphConfig) -> Result<WeightedGraph, GraphError> {
    cfg.validate()?;
    let normals = cloud.normals.as_ref().ok_or(GraphError::MissingNormals)?;
    let nn = knn_search(cloud, cfg.k)?;
    let mut pairs: BTreeMap<(usize, usize), ()> = BTreeMap::new();
    for (i, list) in nn.iter().enumerate() {
        for &j in list {
            pairs.insert((i.min(j), i.max(j)), ());
        }
    }
    let sp2 = cfg.sigma_p * cfg.sigma_p;
    let sn2 = cfg.sigma_n * cfg.sigma_n;
    let edges = pairs.into_keys().map(|(i, j)| {
        let dp = vec3::dist_sq(cloud.points[i], cloud.points[j]);
        let dn = vec3::dist_sq(normals[i], normals[j]);
        (i, j, math::exp(-dp / sp2 - dn / sn2))
    });
    WeightedGraph::from_edges(cloud.len(), edges, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianKind {
    /// `L = D − W` with self-loops ignored.
    Combinatorial,
    /// `L + diag(W)`: combinatorial plus self-loop diagonal.
    Generalized,
}

pub fn laplacian(g: &WeightedGraph, kind: LaplacianKind) -> SparseSymmetric {
    let n = g.node_count();
    let mut b = SymmetricBuilder::new(n);
    for e in g.edges() {
        b.add(e.i, e.j, -e.w).unwrap();
        b.add(e.i, e.i, e.w).unwrap();
        b.add(e.j, e.j, e.w).unwrap();
    }
    if kind == LaplacianKind::Generalized {
        for (i, &u) in g.self_loops().iter().enumerate() {
            if u != 0.0 {
                b.add(i, i, u).unwrap();
            }
        }
    }
    b.build()
}

/// Splits a generalized Laplacian into its loop-free combinatorial part and
/// the self-loop diagonal, so that `L + diag(loops) == M`.
pub fn strip_self_loops(m: &SparseSymmetric) -> (SparseSymmetric, Vec<f64>) {
    let n = m.dim();
    let mut b = SymmetricBuilder::new(n);
    let mut loops = vec![0.0; n];
    for i in 0..n {
        let mut offdiag_sum = 0.0;
        for (j, v) in m.row(i) {
            if j > i {
                b.add(i, j, v).unwrap();
            }
            if j != i {
                offdiag_sum += v;
            }
        }
        let l_ii = -offdiag_sum;
        b.add(i, i, l_ii).unwrap();
        loops[i] = m.entry(i, i) - l_ii;
    }
    (b.build(), loops)
}

/// Graph Laplacian regularizer `xᵀ L x`.
pub fn glr(l: &SparseSymmetric, x: &[f64]) -> Result<f64, GraphError> {
    if x.len() != l.dim() {
        return Err(GraphError::DimMismatch {
            expected: l.dim(),
            got: x.len(),
        });
    }
    Ok(l.quadratic_form(x, x))
}

/// `diag(L, L, L)` acting on component-major stacked signals.
pub fn block_diag3(l: &SparseSymmetric) -> SparseSymmetric {
    let n = l.dim();
    let mut b = SymmetricBuilder::new(3 * n);
    for f in 0..3 {
        let off = f * n;
        for i in 0..n {
            for (j, v) in l.row(i) {
                if j >= i {
                    b.add(off + i, off + j, v).unwrap();
                }
            }
        }
    }
    b.build()
}

/// Feature graph Laplacian regularizer `n̄ᵀ L̄ n̄` for a stacked feature
/// vector (component-major) and `L̄ = diag(L̃, L̃, L̃)`.
pub fn fglr(l_block: &SparseSymmetric, stack: &[f64]) -> Result<f64, GraphError> {
    glr(l_block, stack)
}

/// Zero-mean GMRF with precision `𝓛 + δI`.
#[derive(Debug, Clone)]
pub struct GmrfModel {
    precision: SparseSymmetric,
    delta: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl GmrfModel {
    /// `delta` must be positive so the precision is positive definite for
    /// any PSD `laplacian`.
    pub fn new(laplacian: &SparseSymmetric, delta: f64) -> Result<Self, GraphError> {
        if !(delta > 0.0) {
            return Err(GraphError::BadConfig("gmrf delta must be positive"));
        }
        let dim = laplacian.dim();
        Ok(Self {
            precision: laplacian.shifted(delta),
            delta,
            cg_tol: 1e-8,
            cg_max_iter: 20 * dim.max(10),
        })
    }

    pub fn precision(&self) -> &SparseSymmetric {
        &self.precision
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.precision.dim()
    }

    /// `Σ y = (𝓛 + δI)⁻¹ y` by conjugate gradient.
    pub fn apply_covariance(&self, y: &[f64]) -> Result<Vec<f64>, GraphError> {
        Ok(cg_solve(&self.precision, y, self.cg_tol, self.cg_max_iter)?)
    }

    /// Exact covariance-column cache backed by a sparse LDLᵀ factorization;
    /// the workhorse behind trace objectives evaluated many times.
    pub fn covariance_cache(&self) -> Result<CovarianceCache, GraphError> {
        let dim = self.precision.dim();
        Ok(CovarianceCache {
            factor: LdlFactor::factor(&self.precision)?,
            dim,
            columns: vec![None; dim],
        })
    }
}

/// Lazily computed, cached columns of a GMRF covariance matrix.
pub struct CovarianceCache {
    factor: LdlFactor,
    dim: usize,
    columns: Vec<Option<Vec<f64>>>,
}

impl CovarianceCache {
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn ensure(&mut self, col: usize) {
        if self.columns[col].is_none() {
            let mut e = vec![0.0; self.dim];
            e[col] = 1.0;
            self.columns[col] = Some(self.factor.solve(&e));
        }
    }

    /// `Σ(row, col)`
    pub fn entry(&mut self, row: usize, col: usize) -> f64 {
        self.ensure(col);
        self.columns[col].as_ref().unwrap()[row]
    }

    /// `(e_a − e_b)ᵀ Σ (e_a − e_b)`, the trace change of a unit edge-weight
    /// perturbation on edge `(a, b)`.
    pub fn edge_quad(&mut self, a: usize, b: usize) -> f64 {
        let saa = self.entry(a, a);
        let sbb = self.entry(b, b);
        let sab = self.entry(a, b);
        saa + sbb - 2.0 * sab
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;
    use crate::linalg::dense_eig;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_node_laplacians() {
        let g = WeightedGraph::from_edges(2, [(0, 1, 1.0)], None).unwrap();
        let l = laplacian(&g, LaplacianKind::Combinatorial);
        assert_eq!(l.entry(0, 0), 1.0);
        assert_eq!(l.entry(0, 1), -1.0);
        assert_eq!(l.entry(1, 1), 1.0);

        let gneg = WeightedGraph::from_edges(2, [(0, 1, -1.0)], None).unwrap();
        let ln = laplacian(&gneg, LaplacianKind::Combinatorial);
        assert_eq!(ln.entry(0, 0), -1.0);
        assert_eq!(ln.entry(0, 1), 1.0);
        assert_eq!(ln.entry(1, 1), -1.0);
    }

    #[test]
    fn generalized_adds_self_loops() {
        let mut g = WeightedGraph::from_edges(2, [(0, 1, 1.0)], None).unwrap();
        g.set_self_loops(alloc::vec![0.0, 2.0]);
        let lc = laplacian(&g, LaplacianKind::Combinatorial);
        let lg = laplacian(&g, LaplacianKind::Generalized);
        assert_eq!(lg.entry(0, 0), lc.entry(0, 0));
        assert_eq!(lg.entry(1, 1), lc.entry(1, 1) + 2.0);
    }

    #[test]
    fn strip_self_loops_cases() {
        // M = [[1,-1],[-1,1]] is already loop-free.
        let mut b = SymmetricBuilder::new(2);
        b.add(0, 0, 1.0).unwrap();
        b.add(0, 1, -1.0).unwrap();
        b.add(1, 1, 1.0).unwrap();
        let m = b.build();
        let (l, loops) = strip_self_loops(&m);
        assert_eq!(l, m);
        assert_eq!(loops, alloc::vec![0.0, 0.0]);

        // M = [[3,-1],[-1,1]] has a loop of 2 at node 0.
        let mut b = SymmetricBuilder::new(2);
        b.add(0, 0, 3.0).unwrap();
        b.add(0, 1, -1.0).unwrap();
        b.add(1, 1, 1.0).unwrap();
        let m = b.build();
        let (l, loops) = strip_self_loops(&m);
        assert_eq!(l.entry(0, 0), 1.0);
        assert_eq!(loops, alloc::vec![2.0, 0.0]);
    }

    #[test]
    fn strip_reassembles_random_generalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut b = SymmetricBuilder::new(12);
        for i in 0..12 {
            b.add(i, i, rng.random::<f64>() * 4.0 - 2.0).unwrap();
            for j in (i + 1)..12 {
                if rng.random::<f64>() < 0.3 {
                    b.add(i, j, rng.random::<f64>() * 2.0 - 1.0).unwrap();
                }
            }
        }
        let m = b.build();
        let (l, loops) = strip_self_loops(&m);
        for i in 0..12 {
            let row_sum: f64 = l.row(i).filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
            assert!((l.entry(i, i) + row_sum).abs() < 1e-12);
            assert!((l.entry(i, i) + loops[i] - m.entry(i, i)).abs() < 1e-12);
        }
    }

    #[test]
    fn glr_simple_cases() {
        let g = WeightedGraph::from_edges(2, [(0, 1, 1.0)], None).unwrap();
        let l = laplacian(&g, LaplacianKind::Combinatorial);
        assert_eq!(glr(&l, &[5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(glr(&l, &[0.0, 1.0]).unwrap(), 1.0);
        assert!(glr(&l, &[1.0]).is_err());
    }

    #[test]
    fn glr_matches_edge_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 40;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.15 {
                    edges.push((i, j, rng.random::<f64>() * 2.0 - 1.0));
                }
            }
        }
        let edges: Vec<_> = edges.into_iter().filter(|e| e.2 != 0.0).collect();
        let g = WeightedGraph::from_edges(n, edges.clone(), None).unwrap();
        let l = laplacian(&g, LaplacianKind::Combinatorial);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let by_edges: f64 = edges
            .iter()
            .map(|&(i, j, w)| w * (x[i] - x[j]) * (x[i] - x[j]))
            .sum();
        let by_form = glr(&l, &x).unwrap();
        assert!(
            (by_edges - by_form).abs() <= 1e-12 * by_edges.abs().max(1.0),
            "{by_edges} vs {by_form}"
        );
    }

    #[test]
    fn fglr_decomposes_per_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 15;
        let mut edges = Vec::new();
        for i in 0..n - 1 {
            edges.push((i, i + 1, rng.random::<f64>() + 0.1));
        }
        let g = WeightedGraph::from_edges(n, edges, None).unwrap();
        let l = laplacian(&g, LaplacianKind::Combinatorial);
        let lb = block_diag3(&l);
        let stack: Vec<f64> = (0..3 * n).map(|_| rng.random::<f64>() - 0.5).collect();
        let whole = fglr(&lb, &stack).unwrap();
        let parts: f64 = (0..3)
            .map(|f| glr(&l, &stack[f * n..(f + 1) * n]).unwrap())
            .sum();
        assert!((whole - parts).abs() < 1e-10);
    }

    #[test]
    fn fglr_zero_for_identical_normals() {
        let g = WeightedGraph::from_edges(3, [(0, 1, 0.7), (1, 2, 0.3)], None).unwrap();
        let l = laplacian(&g, LaplacianKind::Combinatorial);
        let lb = block_diag3(&l);
        // All three points share the same normal.
        let stack = alloc::vec![0.5, 0.5, 0.5, 0.1, 0.1, 0.1, 0.8, 0.8, 0.8];
        assert!(fglr(&lb, &stack).unwrap().abs() < 1e-14);
    }

    #[test]
    fn positive_laplacian_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..5 {
            let n = 20;
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.2 {
                        edges.push((i, j, rng.random::<f64>() + 1e-3));
                    }
                }
            }
            let g = WeightedGraph::from_edges(n, edges, None).unwrap();
            let l = laplacian(&g, LaplacianKind::Combinatorial);
            let eig = dense_eig(&l.to_dense()).unwrap();
            assert!(eig.min_eigenvalue() >= -1e-10, "trial {trial}");
        }
    }

    #[test]
    fn knn_graph_weights_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 200;
        let points: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let normals: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                let v = [
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                ];
                vec3::unit(v, 1e-12).unwrap()
            })
            .collect();
        let cloud = PointCloud::with_normals(points, normals);
        let cfg = GraphConfig {
            k: 6,
            sigma_p: 0.3,
            sigma_n: 0.8,
        };
        let g = build_knn_graph(&cloud, &cfg).unwrap();
        let nn = knn_search(&cloud, 6).unwrap();
        for e in g.edges() {
            assert!(e.w > 0.0 && e.w <= 1.0);
            assert!(nn[e.i].contains(&e.j) || nn[e.j].contains(&e.i));
        }
        // Every kNN pair must be present.
        for (i, list) in nn.iter().enumerate() {
            for &j in list {
                assert!(g
                    .edges()
                    .iter()
                    .any(|e| (e.i, e.j) == (i.min(j), i.max(j))));
            }
        }
    }

    #[test]
    fn knn_graph_analytic_weights() {
        // Two coincident points with identical normals: w = 1. Two points at
        // distance σ_p with identical normals: w = e⁻¹.
        let sigma_p = 0.5;
        let cloud = PointCloud::with_normals(
            alloc::vec![
                [0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0],
                [sigma_p, 0.0, 0.0],
            ],
            alloc::vec![[0.0, 0.0, 1.0]; 3],
        );
        let cfg = GraphConfig {
            k: 2,
            sigma_p,
            sigma_n: 1.0,
        };
        let g = build_knn_graph(&cloud, &cfg).unwrap();
        let w01 = g.edges().iter().find(|e| (e.i, e.j) == (0, 1)).unwrap().w;
        assert!((w01 - 1.0).abs() < 1e-12);
        let w02 = g.edges().iter().find(|e| (e.i, e.j) == (0, 2)).unwrap().w;
        assert!((w02 - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn gmrf_covariance_scalar_case() {
        let l = SparseSymmetric::zeros(1);
        let gmrf = GmrfModel::new(&l, 0.5).unwrap();
        let x = gmrf.apply_covariance(&[1.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-10);
        assert_eq!(gmrf.apply_covariance(&[0.0]).unwrap(), alloc::vec![0.0]);
    }

    #[test]
    fn gmrf_covariance_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 20;
        let mut edges = Vec::new();
        for i in 0..n - 1 {
            edges.push((i, i + 1, rng.random::<f64>() + 0.2));
        }
        edges.push((0, n - 1, 0.4));
        let g = WeightedGraph::from_edges(n, edges, None).unwrap();
        let l = laplacian(&g, LaplacianKind::Combinatorial);
        let gmrf = GmrfModel::new(&l, 0.05).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let x = gmrf.apply_covariance(&y).unwrap();
        // Dense oracle: solve with the eigendecomposition.
        let eig = dense_eig(&gmrf.precision().to_dense()).unwrap();
        let mut expect = alloc::vec![0.0; n];
        for k in 0..n {
            let v = eig.eigenvector(k);
            let c: f64 = v.iter().zip(&y).map(|(a, b)| a * b).sum();
            for i in 0..n {
                expect[i] += c / eig.eigenvalues[k] * v[i];
            }
        }
        for i in 0..n {
            assert!((x[i] - expect[i]).abs() < 1e-6);
        }
        // The LDL-backed cache agrees with CG.
        let mut cache = gmrf.covariance_cache().unwrap();
        for col in [0usize, 3, n - 1] {
            let mut e = alloc::vec![0.0; n];
            e[col] = 1.0;
            let via_cg = gmrf.apply_covariance(&e).unwrap();
            for row in 0..n {
                assert!((cache.entry(row, col) - via_cg[row]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn from_generalized_roundtrip() {
        let mut g = WeightedGraph::from_edges(4, [(0, 1, 0.5), (1, 2, -0.8), (2, 3, 1.5)], None)
            .unwrap();
        g.set_self_loops(alloc::vec![0.0, 1.0, -0.5, 0.0]);
        let m = laplacian(&g, LaplacianKind::Generalized);
        let back = WeightedGraph::from_generalized_laplacian(&m);
        assert_eq!(back.edges(), g.edges());
        for (a, b) in back.self_loops().iter().zip(g.self_loops()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

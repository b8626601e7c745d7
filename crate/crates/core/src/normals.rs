//! Surface-normal estimation (PCA plane fit and cross-product schemes), MST
//! orientation consistency, and the per-node linearization
//! `n_i = A_i p_i + b_i` with its stacked operators.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::cloud::{knn_search, PointCloud};
use crate::dense::DenseMat;
use crate::linalg::{dense_eig, LinalgError};
use crate::math;
use crate::sparse::{SparseSymmetric, SymmetricBuilder};
use crate::vec3::{self, V3};

/// Two points are collinear with a third when the cross-product norm falls
/// below this fraction of the product of the segment lengths (that is,
/// `sin β` below this value).
pub const COLLINEAR_SIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NormalError {
    #[error("neighborhood of point {0} is degenerate (rank < 2)")]
    DegenerateNeighborhood(usize),
    #[error("candidate pairs of point {0} are all collinear")]
    CollinearCandidates(usize),
    #[error("collinear triple (cross norm {cross_norm} below tolerance)")]
    CollinearTriple { cross_norm: f64 },
    #[error("point {0} has fewer than 2 candidate neighbors")]
    TooFewCandidates(usize),
    #[error("pca_normals needs k >= 3, got {0}")]
    KTooSmall(usize),
    #[error(transparent)]
    Cloud(#[from] crate::cloud::CloudError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn fix_sign3(mut v: V3) -> V3 {
    for c in v {
        if c != 0.0 {
            if c < 0.0 {
                v = vec3::scale(v, -1.0);
            }
            return v;
        }
    }
    v
}

/// Plane-fit normals: eigenvector of the smallest eigenvalue of each point's
/// k-neighborhood covariance. Signs follow the first-nonzero-positive
/// convention and are not consistent across points; run [`orient_mst`] after
/// when consistency matters.
pub fn pca_normals(cloud: &PointCloud, k: usize) -> Result<Vec<V3>, NormalError> {
    if k < 3 {
        return Err(NormalError::KTooSmall(k));
    }
    let nn = knn_search(cloud, k)?;
    let mut normals = Vec::with_capacity(cloud.len());
    for (i, list) in nn.iter().enumerate() {
        let mut mean = cloud.points[i];
        for &j in list {
            mean = vec3::add(mean, cloud.points[j]);
        }
        mean = vec3::scale(mean, 1.0 / (list.len() + 1) as f64);
        let mut cov = DenseMat::zeros(3, 3);
        for &j in list.iter().chain(core::iter::once(&i)) {
            let d = vec3::sub(cloud.points[j], mean);
            for a in 0..3 {
                for b in 0..3 {
                    *cov.at_mut(a, b) += d[a] * d[b];
                }
            }
        }
        let eig = dense_eig(&cov)?;
        // A plane fit needs spread in two directions: the two largest
        // eigenvalues must dominate rounding noise.
        let scale = eig.eigenvalues[2];
        if scale <= 0.0 || eig.eigenvalues[1] <= 1e-12 * scale {
            return Err(NormalError::DegenerateNeighborhood(i));
        }
        let v = eig.eigenvector(0);
        normals.push(fix_sign3([v[0], v[1], v[2]]));
    }
    Ok(normals)
}

/// Neighbor pair backing one cross-product normal: indices `k`, `l`, the
/// anchor distance `‖p_i − p_k‖²` and `sin² β` of the angle between
/// `p_i − p_k` and `p_k − p_l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BluePair {
    pub k: usize,
    pub l: usize,
    pub dist_sq: f64,
    pub sin_sq: f64,
}

impl BluePair {
    /// The well-conditionedness score `‖p_i − p_k‖² sin² β` this pair was
    /// selected to maximize.
    pub fn geometry_score(&self) -> f64 {
        self.dist_sq * self.sin_sq
    }
}

fn pair_geometry(p_i: V3, p_k: V3, p_l: V3) -> Option<(f64, f64)> {
    let a = vec3::sub(p_i, p_k);
    let b = vec3::sub(p_k, p_l);
    let na_sq = vec3::norm_sq(a);
    let nb_sq = vec3::norm_sq(b);
    if na_sq == 0.0 || nb_sq == 0.0 {
        return None;
    }
    let cross_sq = vec3::norm_sq(vec3::cross(a, b));
    let sin_sq = cross_sq / (na_sq * nb_sq);
    if sin_sq < COLLINEAR_SIN_TOL * COLLINEAR_SIN_TOL {
        return None;
    }
    Some((na_sq, sin_sq))
}

/// Picks the ordered candidate pair `(k, l)` maximizing
/// `‖p_i − p_k‖² sin² β`; exact ties resolve to the lexicographically
/// smallest pair. Collinear pairs are skipped, and if every pair is
/// collinear the selection fails.
pub fn select_blue_pair(
    i: usize,
    candidates: &[usize],
    coords: &[V3],
) -> Result<BluePair, NormalError> {
    if candidates.len() < 2 {
        return Err(NormalError::TooFewCandidates(i));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<BluePair> = None;
    for &k in &sorted {
        if k == i {
            continue;
        }
        for &l in &sorted {
            if l == i || l == k {
                continue;
            }
            if let Some((dist_sq, sin_sq)) = pair_geometry(coords[i], coords[k], coords[l]) {
                let score = dist_sq * sin_sq;
                let better = match &best {
                    None => true,
                    Some(b) => score > b.geometry_score(),
                };
                if better {
                    best = Some(BluePair {
                        k,
                        l,
                        dist_sq,
                        sin_sq,
                    });
                }
            }
        }
    }
    best.ok_or(NormalError::CollinearCandidates(i))
}

/// Cross-product normal of the plane through `p_i`, `p_k`, `p_l` together
/// with the linear expansion `(p_i − p_k) × (p_k − p_l) = C p_i + d`.
pub fn cross_product_normal(
    p_i: V3,
    p_k: V3,
    p_l: V3,
) -> Result<(V3, [[f64; 3]; 3], V3), NormalError> {
    let (xk, yk, zk) = (p_k[0], p_k[1], p_k[2]);
    let (xl, yl, zl) = (p_l[0], p_l[1], p_l[2]);
    let c = [
        [0.0, zk - zl, yl - yk],
        [zl - zk, 0.0, xk - xl],
        [yk - yl, xl - xk, 0.0],
    ];
    let d = vec3::cross(p_k, p_l);
    let raw = [
        c[0][0] * p_i[0] + c[0][1] * p_i[1] + c[0][2] * p_i[2] + d[0],
        c[1][0] * p_i[0] + c[1][1] * p_i[1] + c[1][2] * p_i[2] + d[1],
        c[2][0] * p_i[0] + c[2][1] * p_i[1] + c[2][2] * p_i[2] + d[2],
    ];
    let norm = vec3::norm(raw);
    let scale_sq = vec3::dist(p_i, p_k) * vec3::dist(p_k, p_l);
    if norm < COLLINEAR_SIN_TOL * scale_sq || norm == 0.0 {
        return Err(NormalError::CollinearTriple { cross_norm: norm });
    }
    Ok((vec3::scale(raw, 1.0 / norm), c, d))
}

/// Orients `normals` consistently by propagating signs over a minimum
/// spanning tree of the k-NN graph weighted by `1 − |n_iᵀ n_j|`. The
/// component containing node 0 is rooted there; other components at their
/// smallest index. Returns the oriented normals and per-node `α ∈ {+1, −1}`
/// recording the net flip.
pub fn orient_mst(normals: &[V3], coords: &[V3], k: usize) -> Result<(Vec<V3>, Vec<f64>), NormalError> {
    let n = normals.len();
    assert_eq!(coords.len(), n);
    if n <= 1 {
        return Ok((normals.to_vec(), vec![1.0; n]));
    }
    let cloud = PointCloud::new(coords.to_vec());
    let nn = knn_search(&cloud, k.min(n - 1))?;
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, list) in nn.iter().enumerate() {
        for &j in list {
            let key = (i.min(j), i.max(j));
            if seen.insert(key, ()).is_none() {
                let w = 1.0 - math::abs(vec3::dot(normals[i], normals[j]));
                edges.push((w, key.0, key.1));
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| (a.1, a.2).cmp(&(b.1, b.2))));

    // Kruskal union-find.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut tree = vec![Vec::new(); n];
    for (_, i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            tree[i].push(j);
            tree[j].push(i);
        }
    }

    let mut oriented = normals.to_vec();
    let mut alpha = vec![1.0; n];
    let mut visited = vec![false; n];
    for root in 0..n {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            for &v in &tree[u] {
                if visited[v] {
                    continue;
                }
                visited[v] = true;
                if vec3::dot(oriented[u], oriented[v]) < 0.0 {
                    oriented[v] = vec3::scale(oriented[v], -1.0);
                    alpha[v] = -alpha[v];
                }
                stack.push(v);
            }
        }
    }
    Ok((oriented, alpha))
}

/// Frozen linearization of one node's cross-product normal.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedNormal {
    /// `A_i = C_i α / ‖C_i p_i + d_i‖`, frozen at the linearization point.
    pub a: [[f64; 3]; 3],
    /// `b_i = d_i α / ‖C_i p_i + d_i‖`.
    pub b: V3,
    pub alpha: f64,
    pub norm_at_lin: f64,
    pub pair: BluePair,
}

impl LinearizedNormal {
    pub fn normal_at(&self, p: V3) -> V3 {
        [
            self.a[0][0] * p[0] + self.a[0][1] * p[1] + self.a[0][2] * p[2] + self.b[0],
            self.a[1][0] * p[0] + self.a[1][1] * p[1] + self.a[1][2] * p[2] + self.b[1],
            self.a[2][0] * p[0] + self.a[2][1] * p[1] + self.a[2][2] * p[2] + self.b[2],
        ]
    }
}

/// Per-node linearizations `n_i ≈ A_i p_i + b_i` for the nodes in
/// `node_ids`, plus everything needed to assemble the stacked operators.
#[derive(Debug, Clone)]
pub struct NormalLinearization {
    /// Indices (into the caller's coordinate array) that were linearized,
    /// in block order.
    pub node_ids: Vec<usize>,
    pub nodes: Vec<LinearizedNormal>,
}

/// Linearizes the cross-product normal of every node in `node_ids` at
/// `coords`, with the orientation signs `alphas` (parallel to `node_ids`)
/// frozen in.
pub fn linearize(
    node_ids: &[usize],
    pairs: &[BluePair],
    coords: &[V3],
    alphas: &[f64],
) -> Result<NormalLinearization, NormalError> {
    assert_eq!(node_ids.len(), pairs.len());
    assert_eq!(node_ids.len(), alphas.len());
    let mut nodes = Vec::with_capacity(node_ids.len());
    for ((&i, pair), &alpha) in node_ids.iter().zip(pairs).zip(alphas) {
        let (_, c, d) = cross_product_normal(coords[i], coords[pair.k], coords[pair.l])?;
        let raw = [
            c[0][0] * coords[i][0] + c[0][1] * coords[i][1] + c[0][2] * coords[i][2] + d[0],
            c[1][0] * coords[i][0] + c[1][1] * coords[i][1] + c[1][2] * coords[i][2] + d[1],
            c[2][0] * coords[i][0] + c[2][1] * coords[i][1] + c[2][2] * coords[i][2] + d[2],
        ];
        let norm_at_lin = vec3::norm(raw);
        let s = alpha / norm_at_lin;
        let a = [
            [c[0][0] * s, c[0][1] * s, c[0][2] * s],
            [c[1][0] * s, c[1][1] * s, c[1][2] * s],
            [c[2][0] * s, c[2][1] * s, c[2][2] * s],
        ];
        nodes.push(LinearizedNormal {
            a,
            b: vec3::scale(d, s),
            alpha,
            norm_at_lin,
            pair: *pair,
        });
    }
    Ok(NormalLinearization {
        node_ids: node_ids.to_vec(),
        nodes,
    })
}

impl NormalLinearization {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Worst-case geometry `min_i ‖p_i − p_k‖² sin² β_i` across the
    /// linearized nodes.
    pub fn min_geom(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.pair.geometry_score())
            .fold(f64::INFINITY, math::min)
    }

    /// Stacked normals `[n_xᵀ n_yᵀ n_zᵀ]ᵀ` (component-major) evaluated at
    /// the block coordinates `p` (point-major, `3m` long).
    pub fn stacked_normals(&self, p: &[f64]) -> Vec<f64> {
        let m = self.len();
        debug_assert_eq!(p.len(), 3 * m);
        let mut out = vec![0.0; 3 * m];
        for (r, node) in self.nodes.iter().enumerate() {
            let pi = [p[3 * r], p[3 * r + 1], p[3 * r + 2]];
            let ni = node.normal_at(pi);
            out[r] = ni[0];
            out[m + r] = ni[1];
            out[2 * m + r] = ni[2];
        }
        out
    }

    /// Stacked offset `b̄ = [b_xᵀ b_yᵀ b_zᵀ]ᵀ` (component-major).
    pub fn stacked_offset(&self) -> Vec<f64> {
        let m = self.len();
        let mut out = vec![0.0; 3 * m];
        for (r, node) in self.nodes.iter().enumerate() {
            out[r] = node.b[0];
            out[m + r] = node.b[1];
            out[2 * m + r] = node.b[2];
        }
        out
    }

    /// Dense stacked operator `Ā` (rows component-major over nodes, columns
    /// point-major), sized `3m × 3m`. Test oracle; the solvers use
    /// [`Self::fglr_quadratic`] instead.
    pub fn abar_dense(&self) -> DenseMat {
        let m = self.len();
        let mut out = DenseMat::zeros(3 * m, 3 * m);
        for (r, node) in self.nodes.iter().enumerate() {
            for f in 0..3 {
                for col in 0..3 {
                    *out.at_mut(f * m + r, 3 * r + col) = node.a[f][col];
                }
            }
        }
        out
    }

    /// Assembles the quadratic form of the feature prior under a fixed
    /// feature-graph Laplacian `ltilde` (over the linearized nodes, local
    /// indexing): `(Āp + b̄)ᵀ L̄ (Āp + b̄) = pᵀ big p + 2 linᵀ p + constant`
    /// with `big = Āᵀ L̄ Ā` and `lin = Āᵀ L̄ b̄`.
    pub fn fglr_quadratic(&self, ltilde: &SparseSymmetric) -> FglrQuadratic {
        let m = self.len();
        assert_eq!(ltilde.dim(), m);
        let mut big = SymmetricBuilder::new(3 * m);
        let mut lin = vec![0.0; 3 * m];
        let mut constant = 0.0;
        for i in 0..m {
            let ai = &self.nodes[i].a;
            let bi = self.nodes[i].b;
            for (j, v) in ltilde.row(i) {
                if v == 0.0 {
                    continue;
                }
                let aj = &self.nodes[j].a;
                let bj = self.nodes[j].b;
                // Block (i, j) of Āᵀ L̄ Ā is v · A_iᵀ A_j.
                if j >= i {
                    for a in 0..3 {
                        for b in 0..3 {
                            let mut acc = 0.0;
                            for f in 0..3 {
                                acc += ai[f][a] * aj[f][b];
                            }
                            let value = v * acc;
                            if value != 0.0 {
                                if i == j {
                                    if b >= a {
                                        big.add(3 * i + a, 3 * j + b, value).unwrap();
                                    }
                                } else {
                                    big.add(3 * i + a, 3 * j + b, value).unwrap();
                                }
                            }
                        }
                    }
                }
                // lin block i gets v · A_iᵀ b_j; every (i, j) pair
                // contributes because L̃ is stored with both triangles.
                for a in 0..3 {
                    let mut acc = 0.0;
                    for f in 0..3 {
                        acc += ai[f][a] * bj[f];
                    }
                    lin[3 * i + a] += v * acc;
                }
                constant += v * vec3::dot(bi, bj);
            }
        }
        FglrQuadratic {
            big: big.build(),
            lin,
            constant,
        }
    }
}

/// `pᵀ big p + 2 linᵀ p + constant`, the feature prior after linearization.
#[derive(Debug, Clone)]
pub struct FglrQuadratic {
    pub big: SparseSymmetric,
    pub lin: Vec<f64>,
    pub constant: f64,
}

impl FglrQuadratic {
    pub fn eval(&self, p: &[f64]) -> f64 {
        self.big.quadratic_form(p, p)
            + 2.0 * self.lin.iter().zip(p).map(|(a, b)| a * b).sum::<f64>()
            + self.constant
    }
}

/// Selects a cross-product pair for every node from its neighbor list, with
/// a global-nearest fallback when a neighborhood is too small or fully
/// collinear.
pub fn pairs_from_neighbors(
    coords: &[V3],
    neighbor_lists: &[Vec<usize>],
) -> Result<Vec<BluePair>, NormalError> {
    let n = coords.len();
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        match select_blue_pair(i, &neighbor_lists[i], coords) {
            Ok(p) => pairs.push(p),
            Err(NormalError::TooFewCandidates(_)) | Err(NormalError::CollinearCandidates(_)) => {
                // Fall back to the nearest points overall.
                let mut by_dist: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                by_dist.sort_by(|&a, &b| {
                    vec3::dist_sq(coords[i], coords[a])
                        .total_cmp(&vec3::dist_sq(coords[i], coords[b]))
                        .then_with(|| a.cmp(&b))
                });
                by_dist.truncate(8);
                pairs.push(select_blue_pair(i, &by_dist, coords)?);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(pairs)
}

/// Everything the linearized feature prior needs for one cloud snapshot.
#[derive(Debug, Clone)]
pub struct FglrBuild {
    /// Positive kNN graph weighted by distance and (PCA, MST-oriented)
    /// normal affinity.
    pub graph: crate::graph::WeightedGraph,
    /// Its combinatorial Laplacian.
    pub ltilde_p: SparseSymmetric,
    pub linearization: NormalLinearization,
    /// `pᵀ big p + 2 linᵀ p + const`, the stacked feature prior.
    pub quadratic: FglrQuadratic,
}

/// Builds the neighborhood graph and the linearized feature prior at the
/// given coordinates: PCA normals (MST-oriented) feed the edge weights;
/// per-node cross-product normals (also MST-oriented) are linearized and
/// stacked against the graph Laplacian.
pub fn build_fglr_operator(
    points: &[V3],
    params: &crate::graph::GraphParams,
) -> Result<FglrBuild, crate::graph::GraphError> {
    let n = points.len();
    let cloud = PointCloud::new(points.to_vec());
    let pca = pca_normals(&cloud, params.k.max(3))?;
    let (oriented, _) = orient_mst(&pca, points, params.k)?;
    let weighted = PointCloud::with_normals(points.to_vec(), oriented);
    let cfg = params.resolve(&cloud)?;
    let graph = crate::graph::build_knn_graph(&weighted, &cfg)?;
    let ltilde_p = crate::graph::laplacian(&graph, crate::graph::LaplacianKind::Combinatorial);

    let adj_lists: Vec<Vec<usize>> = graph
        .adjacency()
        .into_iter()
        .map(|l| l.into_iter().map(|(j, _)| j).collect())
        .collect();
    let pairs = pairs_from_neighbors(points, &adj_lists)?;
    let ids: Vec<usize> = (0..n).collect();
    let raw: Vec<V3> = ids
        .iter()
        .map(|&i| {
            cross_product_normal(points[i], points[pairs[i].k], points[pairs[i].l])
                .map(|(nrm, _, _)| nrm)
        })
        .collect::<Result<_, _>>()?;
    let (_, alphas) = orient_mst(&raw, points, params.k)?;
    let linearization = linearize(&ids, &pairs, points, &alphas)?;
    let quadratic = linearization.fglr_quadratic(&ltilde_p);
    Ok(FglrBuild {
        graph,
        ltilde_p,
        linearization,
        quadratic,
    })
}

//! Balance detection (two-coloring), the greedy graph-balancing algorithm
//! with positive-semidefiniteness-preserving edge removals, and the GMRF
//! trace objective it maximizes.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{laplacian, CovarianceCache, GmrfModel, GraphError, LaplacianKind, WeightedGraph};
use crate::linalg::{dense_eig, LinalgError};
use crate::sparse::SparseSymmetric;

/// Dense PSD-gap certificates are computed up to this node count.
pub const PSD_GAP_DENSE_CAP: usize = 128;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BalanceError {
    #[error("edge weight is zero")]
    ZeroWeight,
    #[error("edge ({j}, {i}) missing or not negative")]
    NotNegativeEdge { j: usize, i: usize },
    #[error("node {k} must have the opposite color of {i} and {j}")]
    SameColor { k: usize, i: usize, j: usize },
    #[error("nodes {i} and {j} must share a color for a negative inconsistent edge")]
    ColorMismatch { i: usize, j: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Two-coloring of the nodes: `+1` (blue) or `−1` (red).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    pub beta: Vec<i8>,
}

impl Coloring {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// The coloring as a ±1 vector, a natural first-eigenvector guess for
    /// the balanced Laplacian.
    pub fn as_sign_vector(&self) -> Vec<f64> {
        self.beta.iter().map(|&b| b as f64).collect()
    }
}

/// `β_i β_j sign(w)`: `+1` for a consistent edge, `−1` for an inconsistent
/// one.
pub fn edge_consistency(
    coloring: &Coloring,
    i: usize,
    j: usize,
    w: f64,
) -> Result<i8, BalanceError> {
    if w == 0.0 {
        return Err(BalanceError::ZeroWeight);
    }
    let sign = if w > 0.0 { 1i8 } else { -1i8 };
    Ok(coloring.beta[i] * coloring.beta[j] * sign)
}

/// Checks balance by sign-parity BFS: returns a coloring with every edge
/// consistent when one exists.
pub fn is_balanced(g: &WeightedGraph) -> Option<Coloring> {
    let n = g.node_count();
    let adj = g.adjacency();
    let mut beta = vec![0i8; n];
    for start in 0..n {
        if beta[start] != 0 {
            continue;
        }
        beta[start] = 1;
        let mut queue = vec![start];
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            for &(v, w) in &adj[u] {
                let expect = if w > 0.0 { beta[u] } else { -beta[u] };
                if beta[v] == 0 {
                    beta[v] = expect;
                    queue.push(v);
                } else if beta[v] != expect {
                    return None;
                }
            }
        }
    }
    Some(Coloring { beta })
}

/// Removes the inconsistent negative edge `(j, i)` by the triangle update:
/// the edge is deleted and `2 w_{j,i}` is added onto `(k, j)` and `(k, i)`
/// (created at weight zero when missing), where `k` has the opposite color.
pub fn remove_negative_edge(
    g: &WeightedGraph,
    j: usize,
    i: usize,
    k: usize,
    coloring: &Coloring,
) -> Result<WeightedGraph, BalanceError> {
    let key = (j.min(i), j.max(i));
    let w_ji = g
        .edges()
        .iter()
        .find(|e| (e.i, e.j) == key)
        .map(|e| e.w)
        .ok_or(BalanceError::NotNegativeEdge { j, i })?;
    if w_ji >= 0.0 {
        return Err(BalanceError::NotNegativeEdge { j, i });
    }
    if coloring.beta[i] != coloring.beta[j] {
        return Err(BalanceError::ColorMismatch { i, j });
    }
    if coloring.beta[k] == coloring.beta[i] {
        return Err(BalanceError::SameColor { k, i, j });
    }
    let mut weights: BTreeMap<(usize, usize), f64> = g
        .edges()
        .iter()
        .map(|e| ((e.i, e.j), e.w))
        .collect();
    weights.remove(&key);
    for node in [j, i] {
        let kk = (k.min(node), k.max(node));
        *weights.entry(kk).or_insert(0.0) += 2.0 * w_ji;
    }
    let edges = weights
        .into_iter()
        .filter(|&(_, w)| w != 0.0)
        .map(|((a, b), w)| (a, b, w));
    Ok(WeightedGraph::from_edges(
        g.node_count(),
        edges,
        Some(g.self_loops().to_vec()),
    )?)
}

/// `Tr(L_B Σ)` for the GMRF covariance `Σ`, evaluated column-by-column with
/// [`GmrfModel::apply_covariance`].
pub fn trace_objective(l_b: &SparseSymmetric, gmrf: &GmrfModel) -> Result<f64, BalanceError> {
    let n = l_b.dim();
    if n != gmrf.dim() {
        return Err(BalanceError::Graph(GraphError::DimMismatch {
            expected: gmrf.dim(),
            got: n,
        }));
    }
    let mut acc = 0.0;
    let mut e = vec![0.0; n];
    for j in 0..n {
        if l_b.row(j).next().is_none() {
            continue;
        }
        e[j] = 1.0;
        let col = gmrf.apply_covariance(&e)?;
        e[j] = 0.0;
        for (i, v) in l_b.row(j) {
            acc += v * col[i];
        }
    }
    Ok(acc)
}

/// Edge-removal events surfaced to observers, mainly so tests can certify
/// the PSD gap after every single update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BalanceEvent {
    PositiveEdgeRemoved { j: usize, i: usize },
    NegativeEdgeRemoved { j: usize, i: usize, k: usize },
}

/// Output of [`greedy_balance`].
#[derive(Debug, Clone)]
pub struct BalancedGraphResult {
    pub graph: WeightedGraph,
    pub coloring: Coloring,
    /// Combinatorial Laplacian of the balanced graph.
    pub l_b: SparseSymmetric,
    /// Generalized Laplacian (self-loops included).
    pub gen_l_b: SparseSymmetric,
    /// Smallest eigenvalue of `L − L_B` when the graph is small enough for
    /// the dense certificate.
    pub psd_gap_mineig: Option<f64>,
}

struct Working {
    n: usize,
    weights: BTreeMap<(usize, usize), f64>,
    adj: Vec<BTreeSet<usize>>,
}

impl Working {
    fn from_graph(g: &WeightedGraph) -> Self {
        let n = g.node_count();
        let mut weights = BTreeMap::new();
        let mut adj = vec![BTreeSet::new(); n];
        for e in g.edges() {
            weights.insert((e.i, e.j), e.w);
            adj[e.i].insert(e.j);
            adj[e.j].insert(e.i);
        }
        Working { n, weights, adj }
    }

    fn weight(&self, a: usize, b: usize) -> f64 {
        self.weights
            .get(&(a.min(b), a.max(b)))
            .copied()
            .unwrap_or(0.0)
    }

    fn remove_edge(&mut self, a: usize, b: usize) {
        self.weights.remove(&(a.min(b), a.max(b)));
        self.adj[a].remove(&b);
        self.adj[b].remove(&a);
    }

    fn add_weight(&mut self, a: usize, b: usize, dw: f64) {
        let key = (a.min(b), a.max(b));
        *self.weights.entry(key).or_insert(0.0) += dw;
        self.adj[a].insert(b);
        self.adj[b].insert(a);
    }

    fn to_graph(&self, self_loops: &[f64]) -> WeightedGraph {
        let edges = self
            .weights
            .iter()
            .filter(|&(_, &w)| w != 0.0)
            .map(|(&(a, b), &w)| (a, b, w));
        WeightedGraph::from_edges(self.n, edges, Some(self_loops.to_vec())).unwrap()
    }
}

#[derive(Clone, Debug)]
enum PlannedOp {
    DropPositive { i: usize },
    DropNegative { i: usize, k: usize },
}

/// Greedy balancing: grows a bi-colored set one frontier node at a time,
/// choosing the node/color pair that maximizes the GMRF trace objective
/// after its inconsistent edges are removed (positive edges dropped
/// outright, negative ones via the PSD-preserving triangle update).
pub fn greedy_balance(
    g: &WeightedGraph,
    gmrf: &GmrfModel,
    seed: u64,
) -> Result<BalancedGraphResult, BalanceError> {
    greedy_balance_observed(g, gmrf, seed, |_, _| {})
}

/// [`greedy_balance`] with an observer invoked after every edge
/// removal/update event with the current working graph.
pub fn greedy_balance_observed(
    g: &WeightedGraph,
    gmrf: &GmrfModel,
    seed: u64,
    mut observer: impl FnMut(BalanceEvent, &WeightedGraph),
) -> Result<BalancedGraphResult, BalanceError> {
    let n = g.node_count();
    if gmrf.dim() != n {
        return Err(BalanceError::Graph(GraphError::DimMismatch {
            expected: n,
            got: gmrf.dim(),
        }));
    }
    let mut cov = gmrf.covariance_cache()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = Working::from_graph(g);
    let mut beta = vec![0i8; n];
    let mut in_s = vec![false; n];

    // Per-component sweep; each component seeds with a random blue node.
    let components = g.components();
    for comp in components {
        let start = comp[rng.random_range(0..comp.len())];
        beta[start] = 1;
        in_s[start] = true;
        let mut frontier: BTreeSet<usize> = work.adj[start]
            .iter()
            .copied()
            .filter(|&v| !in_s[v])
            .collect();

        while !frontier.is_empty() {
            let mut best: Option<(f64, usize, i8, Vec<PlannedOp>)> = None;
            for &j in frontier.iter() {
                for &beta_j in &[1i8, -1i8] {
                    if let Some((delta, plan)) =
                        evaluate_candidate(&work, &beta, &in_s, j, beta_j, &mut cov, &mut rng)
                    {
                        let better = match &best {
                            None => true,
                            Some((d, _, _, _)) => delta > *d,
                        };
                        if better {
                            best = Some((delta, j, beta_j, plan));
                        }
                    }
                }
            }
            // A frontier node always admits at least one feasible color
            // (worst case: the one that turns every negative edge
            // consistent, leaving only positive removals).
            let (_, j_star, beta_star, plan) = best.expect("frontier candidate must exist");

            for op in &plan {
                match *op {
                    PlannedOp::DropPositive { i } => {
                        work.remove_edge(j_star, i);
                        observer(
                            BalanceEvent::PositiveEdgeRemoved { j: j_star, i },
                            &work.to_graph(g.self_loops()),
                        );
                    }
                    PlannedOp::DropNegative { i, k } => {
                        let w_ji = work.weight(j_star, i);
                        work.remove_edge(j_star, i);
                        work.add_weight(k, j_star, 2.0 * w_ji);
                        work.add_weight(k, i, 2.0 * w_ji);
                        observer(
                            BalanceEvent::NegativeEdgeRemoved { j: j_star, i, k },
                            &work.to_graph(g.self_loops()),
                        );
                    }
                }
            }
            beta[j_star] = beta_star;
            in_s[j_star] = true;
            frontier.remove(&j_star);
            for &v in &work.adj[j_star] {
                if !in_s[v] {
                    frontier.insert(v);
                }
            }
        }
    }
    // Isolated nodes (no edges) never enter any frontier; color them blue.
    for b in beta.iter_mut() {
        if *b == 0 {
            *b = 1;
        }
    }

    let graph = work.to_graph(g.self_loops());
    let coloring = Coloring { beta };
    debug_assert!(is_balanced(&graph).is_some());
    let l_b = laplacian(&graph, LaplacianKind::Combinatorial);
    let gen_l_b = laplacian(&graph, LaplacianKind::Generalized);
    let psd_gap_mineig = if n <= PSD_GAP_DENSE_CAP {
        let l = laplacian(g, LaplacianKind::Combinatorial);
        let gap = l.to_dense().minus(&l_b.to_dense());
        Some(dense_eig(&gap)?.min_eigenvalue())
    } else {
        None
    };
    Ok(BalancedGraphResult {
        graph,
        coloring,
        l_b,
        gen_l_b,
        psd_gap_mineig,
    })
}

/// Tentatively colors `j` with `beta_j` and scores the trace-objective
/// change of removing its inconsistent edges into the bi-colored set. The
/// candidate is infeasible (`None`) when some inconsistent negative edge has
/// no opposite-color partner anywhere in the set.
fn evaluate_candidate(
    work: &Working,
    beta: &[i8],
    in_s: &[bool],
    j: usize,
    beta_j: i8,
    cov: &mut CovarianceCache,
    rng: &mut ChaCha8Rng,
) -> Option<(f64, Vec<PlannedOp>)> {
    let mut delta = 0.0;
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for &i in work.adj[j].iter() {
        if !in_s[i] {
            continue;
        }
        let w = work.weight(j, i);
        if w == 0.0 {
            continue;
        }
        let sign = if w > 0.0 { 1i8 } else { -1i8 };
        if beta_j * beta[i] * sign == 1 {
            continue;
        }
        if w > 0.0 {
            delta += -w * cov.edge_quad(j, i);
            positives.push(PlannedOp::DropPositive { i });
        } else {
            let k = pick_triangle_partner(work, beta, in_s, i, j, rng)?;
            delta += -w * cov.edge_quad(j, i)
                + 2.0 * w * (cov.edge_quad(k, j) + cov.edge_quad(k, i));
            negatives.push(PlannedOp::DropNegative { i, k });
        }
    }
    // Positive removals are committed before the triangle updates.
    positives.extend(negatives);
    Some((delta, positives))
}

/// Random opposite-color node from the bi-colored set, preferring the
/// immediate neighborhood of `{i, j}`, then two hops, then anywhere.
fn pick_triangle_partner(
    work: &Working,
    beta: &[i8],
    in_s: &[bool],
    i: usize,
    j: usize,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    let want = -beta[i];
    let eligible = |v: usize| in_s[v] && beta[v] == want && v != i && v != j;

    let mut hop1: BTreeSet<usize> = BTreeSet::new();
    for &src in &[i, j] {
        for &v in &work.adj[src] {
            if eligible(v) {
                hop1.insert(v);
            }
        }
    }
    let pool: Vec<usize> = if !hop1.is_empty() {
        hop1.into_iter().collect()
    } else {
        let mut hop2: BTreeSet<usize> = BTreeSet::new();
        for &src in &[i, j] {
            for &u in &work.adj[src] {
                for &v in &work.adj[u] {
                    if eligible(v) {
                        hop2.insert(v);
                    }
                }
            }
        }
        if !hop2.is_empty() {
            hop2.into_iter().collect()
        } else {
            (0..work.n).filter(|&v| eligible(v)).collect()
        }
    };
    if pool.is_empty() {
        None
    } else {
        Some(pool[rng.random_range(0..pool.len())])
    }
}

//! Gershgorin-disc-driven sample selection: the eigenvector similarity
//! transform that aligns all disc left-ends, the greedy disc shift/scale
//! sweep toward a target bound, budgeted binary search over targets, and the
//! per-sub-cloud sampling pipeline.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::balance::{greedy_balance, BalanceError};
use crate::cloud::PointCloud;
use crate::graph::{
    laplacian, strip_self_loops, GmrfModel, GraphError, GraphParams, LaplacianKind, WeightedGraph,
};
use crate::linalg::{smallest_eigpair_from, LinalgError};
use crate::math;
use crate::metrics;
use crate::normals::{build_fglr_operator, NormalError};
use crate::sparse::{SparseRows, SparseSymmetric, SymmetricBuilder};

/// Scaling factors are floored here when a sampled disc cannot reach the
/// target exactly.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Relative slack when deciding that scaling alone reaches the target; disc
/// arithmetic on aligned rows is exact only up to rounding.
const SCALE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("first eigenvector component {index} is numerically zero ({value}); graph must be irreducible")]
    DegenerateEigenvector { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("sub-cloud of {n} points is too small for k = {k}")]
    SubcloudTooSmall { n: usize, k: usize },
    #[error("sample budget {m} exceeds point count {n}")]
    BudgetTooLarge { m: usize, n: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Normals(#[from] NormalError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Strictly increasing sample indices out of `n` blocks (points, or scalar
/// nodes when the coordinate block is 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingSet {
    pub selected: Vec<usize>,
    pub n: usize,
}

impl SamplingSet {
    pub fn new(mut selected: Vec<usize>, n: usize) -> Self {
        selected.sort_unstable();
        selected.dedup();
        assert!(selected.last().map(|&i| i < n).unwrap_or(true));
        Self { selected, n }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.selected.binary_search(&i).is_ok()
    }
}

/// `HᵀH + μ 𝓛` for the block-structured sampling matrix: every coordinate
/// of a selected block gets a unit diagonal entry.
pub fn system_matrix(
    samples: &SamplingSet,
    ltilde: &SparseSymmetric,
    mu: f64,
    coord_block: usize,
) -> SparseSymmetric {
    let dim = ltilde.dim();
    let mut b = SymmetricBuilder::new(dim);
    for i in 0..dim {
        for (j, v) in ltilde.row(i) {
            if j >= i {
                b.add(i, j, mu * v).unwrap();
            }
        }
    }
    for &s in &samples.selected {
        for a in 0..coord_block {
            b.add(coord_block * s + a, coord_block * s + a, 1.0).unwrap();
        }
    }
    b.build()
}

/// Similarity transform `S 𝓛_B S⁻¹` with `S = diag(1/v_i)` for the first
/// eigenvector `v` of a balanced generalized Laplacian. All Gershgorin disc
/// left-ends of the result sit at `λ_min(𝓛_B)`; the diagonal is unchanged.
pub fn gdpa_transform(
    gen_l_b: &SparseSymmetric,
    v: &[f64],
) -> Result<SparseRows, SamplingError> {
    let n = gen_l_b.dim();
    if v.len() != n {
        return Err(SamplingError::DimMismatch {
            expected: n,
            got: v.len(),
        });
    }
    for (i, &vi) in v.iter().enumerate() {
        if math::abs(vi) <= 1e-12 {
            return Err(SamplingError::DegenerateEigenvector {
                index: i,
                value: vi,
            });
        }
    }
    Ok(SparseRows::similarity_from_symmetric(gen_l_b, v))
}

/// Result of one disc sweep toward a target.
#[derive(Debug, Clone)]
pub struct GdasOutcome {
    pub samples: SamplingSet,
    /// Per-node disc scalars; 1 for untouched nodes.
    pub scalars: Vec<f64>,
    /// The certified eigenvalue lower bound: the smallest final disc
    /// left-end of the scaled system (equals the target except in degenerate
    /// scale-floor cases).
    pub achieved_t: f64,
    /// The target the sweep was asked to reach.
    pub target_t: f64,
}

/// Outcome of [`gdas_for_target`]: a feasible sweep or an explicit
/// infeasibility (some disc cannot reach the target even when sampled).
#[derive(Debug, Clone)]
pub enum GdasResult {
    Feasible(GdasOutcome),
    Infeasible { node: usize },
}

fn bfs_order(l_p: &SparseRows, root: usize) -> Vec<usize> {
    let n = l_p.dim();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = Vec::with_capacity(n);
    let enqueue = |start: usize, seen: &mut Vec<bool>, queue: &mut Vec<usize>| {
        if !seen[start] {
            seen[start] = true;
            queue.push(start);
        }
    };
    enqueue(root, &mut seen, &mut queue);
    let mut head = 0;
    loop {
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            order.push(u);
            for (j, _) in l_p.row(u) {
                if j != u && !seen[j] {
                    seen[j] = true;
                    queue.push(j);
                }
            }
        }
        match (0..n).find(|&i| !seen[i]) {
            Some(next) => enqueue(next, &mut seen, &mut queue),
            None => break,
        }
    }
    order
}

/// One greedy Gershgorin sweep on the aligned matrix `μ·l_p` plus the block
/// sampling diagonal. Nodes are visited in BFS order from `bfs_root`; each
/// disc is scaled so its left-end lands exactly on `target` and, when
/// scaling cannot reach it, the node's block is sampled first (adding 1 to
/// the diagonal of each of its coordinates).
///
/// `coord_block` couples coordinates: with 3, sampling any coordinate of a
/// point samples the whole point.
pub fn gdas_for_target(
    l_p: &SparseRows,
    mu: f64,
    target: f64,
    bfs_root: usize,
    coord_block: usize,
) -> GdasResult {
    let n = l_p.dim();
    debug_assert_eq!(n % coord_block, 0);
    let order = bfs_order(l_p, bfs_root);
    let mut inv_scale = vec![1.0; n];
    let mut scalars = vec![1.0; n];
    let mut sampled_blocks: BTreeSet<usize> = BTreeSet::new();

    for &u in &order {
        let mut center = 0.0;
        let mut radius = 0.0;
        for (j, w) in l_p.row(u) {
            if j == u {
                center = mu * w;
            } else {
                radius += math::abs(mu * w) * inv_scale[j];
            }
        }
        if sampled_blocks.contains(&(u / coord_block)) {
            center += 1.0;
        }
        // Scale-only when the disc already clears the target.
        let clears = if radius > 0.0 {
            (center - target) / radius >= 1.0 - SCALE_SLACK
        } else {
            center >= target
        };
        if clears {
            if radius > 0.0 {
                scalars[u] = (center - target) / radius;
                inv_scale[u] = 1.0 / scalars[u];
            }
            continue;
        }
        // Disc shift: sample the node's block.
        center += 1.0;
        sampled_blocks.insert(u / coord_block);
        if center <= target {
            return GdasResult::Infeasible { node: u };
        }
        if radius > 0.0 {
            scalars[u] = math::max(SCALE_FLOOR, (center - target) / radius);
            inv_scale[u] = 1.0 / scalars[u];
        }
    }

    // Certify with the final scalars: later scalings may have re-inflated
    // earlier discs, so the sound bound is the smallest final left-end.
    let mut certified = f64::INFINITY;
    for u in 0..n {
        let mut center = 0.0;
        let mut radius = 0.0;
        for (j, w) in l_p.row(u) {
            if j == u {
                center = mu * w;
            } else {
                radius += math::abs(mu * w) * inv_scale[j];
            }
        }
        if sampled_blocks.contains(&(u / coord_block)) {
            center += 1.0;
        }
        certified = math::min(certified, center - scalars[u] * radius);
    }

    let samples = SamplingSet::new(sampled_blocks.into_iter().collect(), n / coord_block);
    GdasResult::Feasible(GdasOutcome {
        samples,
        scalars,
        achieved_t: certified,
        target_t: target,
    })
}

/// Smallest disc left-end of `μ·l_p`, the aligned baseline `μ λ₀`.
pub fn aligned_left_end(l_p: &SparseRows, mu: f64) -> f64 {
    let n = l_p.dim();
    let mut lo = f64::INFINITY;
    for i in 0..n {
        let mut c = 0.0;
        let mut r = 0.0;
        for (j, w) in l_p.row(i) {
            if j == i {
                c = mu * w;
            } else {
                r += math::abs(mu * w);
            }
        }
        lo = math::min(lo, c - r);
    }
    lo
}

/// BFS root: the node with the largest diagonal of `μ 𝓛_p`, ties to the
/// smaller index.
pub fn default_bfs_root(l_p: &SparseRows) -> usize {
    let mut best = 0;
    let mut best_diag = f64::NEG_INFINITY;
    for i in 0..l_p.dim() {
        let d = l_p.entry(i, i);
        if d > best_diag {
            best_diag = d;
            best = i;
        }
    }
    best
}

const BISECTION_ITERS: usize = 40;

/// Largest target reachable with at most `budget` sampled blocks, located by
/// bisection over `[μλ₀, 1 + max_i c_i]`. Returns the best feasible sweep;
/// `budget = 0` yields the aligned baseline with an empty sample set.
pub fn binary_search_budget(
    l_p: &SparseRows,
    mu: f64,
    budget: usize,
    coord_block: usize,
) -> Result<GdasOutcome, SamplingError> {
    let n = l_p.dim();
    let root = default_bfs_root(l_p);
    let t_lo = aligned_left_end(l_p, mu);
    let mut t_hi = f64::NEG_INFINITY;
    for i in 0..n {
        t_hi = math::max(t_hi, mu * l_p.entry(i, i));
    }
    t_hi += 1.0;

    let scale = math::max(math::abs(t_lo), math::abs(t_hi));
    let feasible = |t: f64| -> Option<GdasOutcome> {
        match gdas_for_target(l_p, mu, t, root, coord_block) {
            GdasResult::Feasible(out)
                if out.samples.len() <= budget && out.achieved_t >= t - 1e-9 * scale.max(1.0) =>
            {
                Some(out)
            }
            _ => None,
        }
    };

    // The aligned baseline needs no samples.
    let mut best = feasible(t_lo).unwrap_or_else(|| GdasOutcome {
        samples: SamplingSet::new(Vec::new(), n / coord_block),
        scalars: vec![1.0; n],
        achieved_t: t_lo,
        target_t: t_lo,
    });
    let mut lo = t_lo;
    let mut hi = t_hi;
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        match feasible(mid) {
            Some(out) => {
                best = out;
                lo = mid;
            }
            None => {
                hi = mid;
            }
        }
    }
    Ok(best)
}

/// Pipeline knobs for per-sub-cloud sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub graph: GraphParams,
    /// Residual tolerance for the first-eigenvector solve (relative to the
    /// diagonal scale).
    pub eig_tol: f64,
    /// Compute the DELTACON similarity of the balanced graph (quadratic
    /// cost; off for large runs).
    pub with_dcs: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            graph: GraphParams::default(),
            eig_tol: 1e-8,
            with_dcs: false,
        }
    }
}

/// Reconstruction system kept from the sampling pipeline: the prior
/// quadratic `𝓛 = Āᵀ L̄ Ā` and the linear coefficient `c` such that the
/// normal equations read `(HᵀH + μ𝓛) p = Hᵀq + μc`.
#[derive(Debug, Clone)]
pub struct SrSystem {
    pub ltilde: SparseSymmetric,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SampleDiagnostics {
    /// λ_min(𝓛_B) per connected component.
    pub lambda_min_balanced: Vec<f64>,
    /// Certified disc bound, worst case over components.
    pub achieved_t: f64,
    /// Frobenius relative error between the combinatorial Laplacians of the
    /// signed prior graph and its balanced approximation.
    pub relative_error: f64,
    /// DELTACON similarity of the same pair, when requested.
    pub dcs: Option<f64>,
    /// Samples chosen by the disc sweeps before budget padding.
    pub gdas_samples: usize,
}

#[derive(Debug, Clone)]
pub struct SubcloudSample {
    pub samples: SamplingSet,
    pub diagnostics: SampleDiagnostics,
    pub system: SrSystem,
}

/// Full sampling pipeline for one sub-cloud: graph construction, normal
/// linearization, graph balancing, disc alignment and budgeted disc
/// sampling. Disconnected neighborhood graphs are processed per component
/// with budgets proportional to component size, and the sample set is padded
/// to exactly `m` points in BFS order when the sweeps use fewer.
pub fn sample_subcloud(
    cloud: &PointCloud,
    cfg: &SampleConfig,
    mu: f64,
    m: usize,
    seed: u64,
) -> Result<SubcloudSample, SamplingError> {
    let n = cloud.len();
    if n < cfg.graph.k + 1 {
        return Err(SamplingError::SubcloudTooSmall { n, k: cfg.graph.k });
    }
    if m > n {
        return Err(SamplingError::BudgetTooLarge { m, n });
    }

    let build = build_fglr_operator(&cloud.points, &cfg.graph)?;
    let quad = &build.quadratic;

    // The quadratic prior reads pᵀ𝓛p + 2 linᵀp + const, so the stationarity
    // condition carries −lin on the right-hand side.
    let system = SrSystem {
        ltilde: quad.big.clone(),
        c: quad.lin.iter().map(|v| -v).collect(),
    };

    // Interpret 𝓛 as a signed graph and balance it per component.
    let signed = WeightedGraph::from_generalized_laplacian(&quad.big);
    let (l_comb, _) = strip_self_loops(&quad.big);
    let point_components = build.graph.components();

    let mut budgets = allocate_budgets(&point_components, m);
    let mut selected: Vec<usize> = Vec::new();
    let mut lambda_mins = Vec::new();
    let mut achieved = f64::INFINITY;
    let mut gdas_total = 0usize;
    let mut lb_builder = SymmetricBuilder::new(3 * n);

    for (comp_idx, comp_points) in point_components.iter().enumerate() {
        let coord_ids: Vec<usize> = comp_points
            .iter()
            .flat_map(|&p| 3 * p..3 * p + 3)
            .collect();
        let sub_signed = signed.subgraph(&coord_ids);
        let sub_gen = laplacian(&sub_signed, LaplacianKind::Generalized);
        let gmrf = GmrfModel::new(&sub_gen, cfg.graph.delta)?;
        let balanced = greedy_balance(&sub_signed, &gmrf, seed ^ (comp_idx as u64))?;

        // Accumulate the balanced combinatorial Laplacian in global
        // indexing for the RE/DCS diagnostics.
        for i in 0..coord_ids.len() {
            for (j, v) in balanced.l_b.row(i) {
                if j >= i {
                    lb_builder.add(coord_ids[i], coord_ids[j], v).unwrap();
                }
            }
        }

        // Edge removal may have disconnected the balanced graph; the
        // alignment eigenvector must be computed per connected piece and
        // stitched, otherwise its off-component entries are zero and the
        // similarity transform degenerates. Pieces are delimited by edges of
        // non-negligible magnitude: a node hanging on a ~1e-12 edge would
        // otherwise get an eigenvector entry of the same size. Alignment
        // leaks across the ignored edges by at most their weight, and the
        // Gershgorin bound stays sound for any nonzero scaling vector.
        let dim = coord_ids.len();
        let mut v = vec![0.0; dim];
        let weight_floor = 1e-9 * balanced.graph.max_abs_edge_weight();
        for piece in balanced.graph.components_with_min_weight(weight_floor) {
            if piece.len() == 1 {
                let i = piece[0];
                lambda_mins.push(balanced.gen_l_b.entry(i, i));
                v[i] = 1.0;
                continue;
            }
            let sub = balanced.graph.subgraph(&piece);
            let sub_gen_lb = laplacian(&sub, LaplacianKind::Generalized);
            let guess: Vec<f64> = piece
                .iter()
                .map(|&i| balanced.coloring.beta[i] as f64)
                .collect();
            let scale = sub_gen_lb
                .diagonal()
                .iter()
                .fold(1.0f64, |s, d| math::max(s, math::abs(*d)));
            let (lambda_min, mut v_piece) =
                smallest_eigpair_from(&sub_gen_lb, Some(&guess), cfg.eig_tol * scale, 800)?;
            lambda_mins.push(lambda_min);
            // Align the solver's global sign with the coloring, then floor
            // the tiny entries (they are genuine for nodes with dominant
            // diagonals, but 1/v must stay representable; the disc bound is
            // sound for any nonzero scaling and the alignment loss is of
            // the order of the floored mass).
            let agree: f64 = v_piece.iter().zip(&guess).map(|(a, b)| a * b).sum();
            if agree < 0.0 {
                for x in v_piece.iter_mut() {
                    *x = -*x;
                }
            }
            let vmax = v_piece.iter().fold(0.0f64, |m, x| math::max(m, math::abs(*x)));
            let floor = 1e-8 * vmax;
            for (local, &global) in piece.iter().enumerate() {
                v[global] = if math::abs(v_piece[local]) < floor {
                    (balanced.coloring.beta[global] as f64) * floor
                } else {
                    v_piece[local]
                };
            }
        }
        let aligned = gdpa_transform(&balanced.gen_l_b, &v)?;
        let outcome = binary_search_budget(&aligned, mu, budgets[comp_idx], 3)?;
        achieved = math::min(achieved, outcome.achieved_t);
        gdas_total += outcome.samples.len();
        // Pad to the component budget in BFS order over the aligned matrix.
        let mut chosen: BTreeSet<usize> = outcome.samples.selected.iter().copied().collect();
        if chosen.len() < budgets[comp_idx] {
            let order = bfs_order(&aligned, default_bfs_root(&aligned));
            for u in order {
                let block = u / 3;
                if chosen.len() >= budgets[comp_idx] {
                    break;
                }
                chosen.insert(block);
            }
        }
        budgets[comp_idx] = budgets[comp_idx].min(comp_points.len());
        for block in chosen {
            selected.push(comp_points[block]);
        }
    }

    let l_b_global = lb_builder.build();
    let relative_error = l_b_global.frobenius_distance(&l_comb) / l_comb.frobenius_norm();
    let dcs = if cfg.with_dcs {
        let ga = WeightedGraph::from_generalized_laplacian(&l_comb);
        let gb = WeightedGraph::from_generalized_laplacian(&l_b_global);
        metrics::deltacon_similarity(&ga, &gb, &metrics::MetricsConfig::default()).ok()
    } else {
        None
    };

    Ok(SubcloudSample {
        samples: SamplingSet::new(selected, n),
        diagnostics: SampleDiagnostics {
            lambda_min_balanced: lambda_mins,
            achieved_t: achieved,
            relative_error,
            dcs,
            gdas_samples: gdas_total,
        },
        system,
    })
}

/// Splits `m` across components proportionally to size (largest remainders
/// first, ties by component index), capped by component capacity.
fn allocate_budgets(components: &[Vec<usize>], m: usize) -> Vec<usize> {
    let total: usize = components.iter().map(|c| c.len()).sum();
    if total == 0 {
        return vec![0; components.len()];
    }
    let mut budgets: Vec<usize> = components
        .iter()
        .map(|c| m * c.len() / total)
        .collect();
    let mut assigned: usize = budgets.iter().sum();
    // Remainders: hand out by largest fractional part, then index.
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_by_key(|&i| {
        let rem = (m * components[i].len()) % total;
        (core::cmp::Reverse(rem), i)
    });
    let mut cursor = 0;
    while assigned < m {
        let i = order[cursor % order.len()];
        if budgets[i] < components[i].len() {
            budgets[i] += 1;
            assigned += 1;
        }
        cursor += 1;
        if cursor > 4 * order.len() * (m + 1) {
            break;
        }
    }
    for (b, c) in budgets.iter_mut().zip(components) {
        *b = (*b).min(c.len());
    }
    budgets
}

//! Point cloud data model: nearest-neighbor search, noise synthesis and
//! K-means partitioning into sub-clouds.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math;
use crate::vec3::{self, V3};

/// Normals are accepted as unit vectors within this tolerance.
pub const UNIT_NORMAL_TOL: f64 = 1e-9;

/// Below this size exhaustive search beats the k-d tree and doubles as its
/// test oracle.
const BRUTE_FORCE_LIMIT: usize = 256;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CloudError {
    #[error("coordinate of point {0} is not finite")]
    NonFinitePoint(usize),
    #[error("normal of point {0} is not finite")]
    NonFiniteNormal(usize),
    #[error("normal of point {index} has norm {norm}, expected 1")]
    NotUnitNormal { index: usize, norm: f64 },
    #[error("{normals} normals for {points} points")]
    NormalCountMismatch { normals: usize, points: usize },
    #[error("k = {k} must be smaller than the point count {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("operation needs normals but the cloud has none")]
    MissingNormals,
    #[error("negative noise sigma {0}")]
    NegativeSigma(f64),
    #[error("empty point cloud")]
    Empty,
}

/// 3D point set with optional per-point unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<V3>,
    pub normals: Option<Vec<V3>>,
}

impl PointCloud {
    pub fn new(points: Vec<V3>) -> Self {
        Self {
            points,
            normals: None,
        }
    }

    pub fn with_normals(points: Vec<V3>, normals: Vec<V3>) -> Self {
        Self {
            points,
            normals: Some(normals),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the type invariants: finite coordinates, and when normals are
    /// present, one unit vector per point.
    pub fn validate(&self) -> Result<(), CloudError> {
        for (i, p) in self.points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(CloudError::NonFinitePoint(i));
            }
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.points.len() {
                return Err(CloudError::NormalCountMismatch {
                    normals: normals.len(),
                    points: self.points.len(),
                });
            }
            for (i, n) in normals.iter().enumerate() {
                if !n.iter().all(|c| c.is_finite()) {
                    return Err(CloudError::NonFiniteNormal(i));
                }
                let norm = vec3::norm(*n);
                if math::abs(norm - 1.0) > UNIT_NORMAL_TOL {
                    return Err(CloudError::NotUnitNormal { index: i, norm });
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding box as `(min, max)` corners.
    pub fn bounding_box(&self) -> Option<(V3, V3)> {
        let first = *self.points.first()?;
        let mut lo = first;
        let mut hi = first;
        for p in &self.points {
            for a in 0..3 {
                lo[a] = math::min(lo[a], p[a]);
                hi[a] = math::max(hi[a], p[a]);
            }
        }
        Some((lo, hi))
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        match self.bounding_box() {
            Some((lo, hi)) => vec3::dist(lo, hi),
            None => 0.0,
        }
    }

    /// Uniformly rescales about the bounding box center so the box diagonal
    /// becomes `diagonal`. A degenerate cloud (single point, zero extent) is
    /// returned unchanged.
    pub fn rescaled_to_diagonal(&self, diagonal: f64) -> PointCloud {
        let Some((lo, hi)) = self.bounding_box() else {
            return self.clone();
        };
        let current = vec3::dist(lo, hi);
        if current <= 0.0 || diagonal <= 0.0 {
            return self.clone();
        }
        let s = diagonal / current;
        let center = vec3::scale(vec3::add(lo, hi), 0.5);
        let points = self
            .points
            .iter()
            .map(|&p| vec3::add(center, vec3::scale(vec3::sub(p, center), s)))
            .collect();
        PointCloud {
            points,
            normals: self.normals.clone(),
        }
    }
}

/// Additive iid Gaussian perturbation of point coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

/// Adds zero-mean Gaussian noise with `model.sigma` to every coordinate.
/// Deterministic under the seed; `sigma = 0` returns the input unchanged.
/// Normals, when present, are carried over untouched.
pub fn add_gaussian_noise(cloud: &PointCloud, model: NoiseModel) -> Result<PointCloud, CloudError> {
    if model.sigma < 0.0 {
        return Err(CloudError::NegativeSigma(model.sigma));
    }
    if model.sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let points = cloud
        .points
        .iter()
        .map(|p| {
            let mut q = *p;
            for c in q.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *c += model.sigma * e;
            }
            q
        })
        .collect();
    Ok(PointCloud {
        points,
        normals: cloud.normals.clone(),
    })
}

// ---------------------------------------------------------------------------
// k nearest neighbors

/// Max-heap entry ordered by (distance², index) so that ties always resolve
/// to the smaller index.
#[derive(PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then_with(|| self.1.cmp(&other.1))
    }
}

struct KdNode {
    /// Splitting axis; point index for leaves.
    axis: usize,
    point: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Static k-d tree over a borrowed point slice.
struct KdTree<'a> {
    points: &'a [V3],
    nodes: Vec<KdNode>,
    root: Option<usize>,
}

impl<'a> KdTree<'a> {
    fn build(points: &'a [V3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(points, &mut order[..], &mut nodes);
        KdTree {
            points,
            nodes,
            root,
        }
    }

    fn build_rec(points: &[V3], order: &mut [usize], nodes: &mut Vec<KdNode>) -> Option<usize> {
        if order.is_empty() {
            return None;
        }
        // Split along the axis of largest spread; deterministic ties by axis id.
        let mut lo = points[order[0]];
        let mut hi = lo;
        for &i in order.iter() {
            for a in 0..3 {
                lo[a] = math::min(lo[a], points[i][a]);
                hi[a] = math::max(hi[a], points[i][a]);
            }
        }
        let mut axis = 0;
        for a in 1..3 {
            if hi[a] - lo[a] > hi[axis] - lo[axis] {
                axis = a;
            }
        }
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis]
                .total_cmp(&points[b][axis])
                .then_with(|| a.cmp(&b))
        });
        let point = order[mid];
        let id = nodes.len();
        nodes.push(KdNode {
            axis,
            point,
            left: None,
            right: None,
        });
        let (left_slice, rest) = order.split_at_mut(mid);
        let right_slice = &mut rest[1..];
        let left = Self::build_rec(points, left_slice, nodes);
        let right = Self::build_rec(points, right_slice, nodes);
        nodes[id].left = left;
        nodes[id].right = right;
        Some(id)
    }

    /// k nearest neighbors of `query` excluding the point index `skip`.
    fn knn(&self, query: V3, k: usize, skip: usize) -> Vec<usize> {
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
        if let Some(root) = self.root {
            self.search(root, query, k, skip, &mut heap);
        }
        let mut out: Vec<(f64, usize)> = heap.into_iter().map(|e| (e.0, e.1)).collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        out.into_iter().map(|(_, i)| i).collect()
    }

    fn search(&self, id: usize, query: V3, k: usize, skip: usize, heap: &mut BinaryHeap<HeapEntry>) {
        let node = &self.nodes[id];
        if node.point != skip {
            let d = vec3::dist_sq(query, self.points[node.point]);
            let entry = HeapEntry(d, node.point);
            if heap.len() < k {
                heap.push(entry);
            } else if let Some(worst) = heap.peek() {
                if entry.cmp(worst) == Ordering::Less {
                    heap.pop();
                    heap.push(entry);
                }
            }
        }
        let split = self.points[node.point][node.axis];
        let delta = query[node.axis] - split;
        let (near, far) = if delta <= 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if let Some(child) = near {
            self.search(child, query, k, skip, heap);
        }
        // Descend the far side unless the splitting plane is strictly farther
        // than the current worst candidate (ties must still be visited so
        // equal-distance neighbors resolve to the smaller index).
        let plane_d = delta * delta;
        let must_visit = heap.len() < k || plane_d <= heap.peek().map(|w| w.0).unwrap_or(f64::MAX);
        if must_visit {
            if let Some(child) = far {
                self.search(child, query, k, skip, heap);
            }
        }
    }
}

/// Index of the nearest point in `targets` for every query point (ties to
/// the smaller index). Queries and targets may come from different clouds.
pub fn nearest_neighbors_between(queries: &[V3], targets: &[V3]) -> Vec<usize> {
    assert!(!targets.is_empty());
    if targets.len() <= BRUTE_FORCE_LIMIT {
        return queries
            .iter()
            .map(|&q| {
                let mut best = (f64::INFINITY, 0usize);
                for (j, &t) in targets.iter().enumerate() {
                    let d = vec3::dist_sq(q, t);
                    if d < best.0 {
                        best = (d, j);
                    }
                }
                best.1
            })
            .collect();
    }
    let tree = KdTree::build(targets);
    queries
        .iter()
        .map(|&q| tree.knn(q, 1, usize::MAX)[0])
        .collect()
}

fn knn_brute_force(points: &[V3], k: usize) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut result = Vec::with_capacity(n);
    for i in 0..n {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (vec3::dist_sq(points[i], points[j]), j))
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        cand.truncate(k);
        result.push(cand.into_iter().map(|(_, j)| j).collect());
    }
    result
}

/// Per-point indices of the `k` nearest Euclidean neighbors, self excluded,
/// nearest first. Distance ties break toward the smaller point index.
pub fn knn_search(cloud: &PointCloud, k: usize) -> Result<Vec<Vec<usize>>, CloudError> {
    let n = cloud.len();
    if k >= n {
        return Err(CloudError::KTooLarge { k, n });
    }
    if k == 0 {
        return Ok(vec![Vec::new(); n]);
    }
    if n <= BRUTE_FORCE_LIMIT {
        return Ok(knn_brute_force(&cloud.points, k));
    }
    let tree = KdTree::build(&cloud.points);
    Ok((0..n)
        .map(|i| tree.knn(cloud.points[i], k, i))
        .collect())
}

// ---------------------------------------------------------------------------
// K-means sub-cloud partitioning

/// Assignment of every point to one of `cluster_count` sub-clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct SubCloudPartition {
    pub cluster_of: Vec<usize>,
    pub cluster_count: usize,
    /// Target points per cluster the partition was sized for.
    pub target_points: usize,
}

impl SubCloudPartition {
    /// Point indices per cluster, ascending within each cluster.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count];
        for (i, &c) in self.cluster_of.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

/// Lloyd's K-means over 3D coordinates with k-means++ seeding.
///
/// The cluster count is `max(1, round(n / target_points))`. Iterations stop at
/// an assignment fixpoint or after 100 rounds; clusters are kept nonempty by
/// reseeding any empty cluster with the point currently farthest from its
/// centroid. Deterministic under `seed`.
pub fn kmeans_partition(
    cloud: &PointCloud,
    target_points: usize,
    seed: u64,
) -> Result<SubCloudPartition, CloudError> {
    let n = cloud.len();
    if n == 0 {
        return Err(CloudError::Empty);
    }
    let target = target_points.max(1);
    let c = (math::round(n as f64 / target as f64) as usize).clamp(1, n);
    let points = &cloud.points;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centroids: Vec<V3> = Vec::with_capacity(c);
    centroids.push(points[rng.random_range(0..n)]);
    let mut best_d: Vec<f64> = points
        .iter()
        .map(|&p| vec3::dist_sq(p, centroids[0]))
        .collect();
    while centroids.len() < c {
        let total: f64 = best_d.iter().sum();
        let next = if total <= 0.0 {
            // All remaining points coincide with a centroid; pick uniformly.
            rng.random_range(0..n)
        } else {
            let mut target_mass = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in best_d.iter().enumerate() {
                if target_mass < d {
                    pick = i;
                    break;
                }
                target_mass -= d;
            }
            pick
        };
        let p = points[next];
        centroids.push(p);
        for (i, d) in best_d.iter_mut().enumerate() {
            *d = math::min(*d, vec3::dist_sq(points[i], p));
        }
    }

    let mut assign = vec![0usize; n];
    for iter in 0..100 {
        // Assignment step; ties go to the smaller cluster index.
        let mut changed = false;
        for (i, &p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_dist = vec3::dist_sq(p, centroids[0]);
            for (j, &cen) in centroids.iter().enumerate().skip(1) {
                let d = vec3::dist_sq(p, cen);
                if d < best_dist {
                    best_dist = d;
                    best = j;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed && iter > 0 {
            break;
        }

        // Update step.
        let mut sums = vec![[0.0f64; 3]; c];
        let mut counts = vec![0usize; c];
        for (i, &p) in points.iter().enumerate() {
            let a = assign[i];
            sums[a] = vec3::add(sums[a], p);
            counts[a] += 1;
        }
        for j in 0..c {
            if counts[j] > 0 {
                centroids[j] = vec3::scale(sums[j], 1.0 / counts[j] as f64);
            }
        }
        // Reseed empty clusters with the farthest point of any multi-point
        // cluster so every cluster stays nonempty.
        for j in 0..c {
            if counts[j] > 0 {
                continue;
            }
            let mut far_i = None;
            let mut far_d = -1.0;
            for (i, &p) in points.iter().enumerate() {
                if counts[assign[i]] < 2 {
                    continue;
                }
                let d = vec3::dist_sq(p, centroids[assign[i]]);
                if d > far_d {
                    far_d = d;
                    far_i = Some(i);
                }
            }
            if let Some(i) = far_i {
                counts[assign[i]] -= 1;
                assign[i] = j;
                counts[j] = 1;
                centroids[j] = points[i];
            }
        }
    }

    Ok(SubCloudPartition {
        cluster_of: assign,
        cluster_count: c,
        target_points: target,
    })
}

/// Sum of squared distances from points to their assigned centroids, with
/// centroids recomputed from the assignment. Used as the K-means objective.
pub fn kmeans_objective(points: &[V3], assign: &[usize], cluster_count: usize) -> f64 {
    let mut sums = vec![[0.0f64; 3]; cluster_count];
    let mut counts = vec![0usize; cluster_count];
    for (i, &p) in points.iter().enumerate() {
        sums[assign[i]] = vec3::add(sums[assign[i]], p);
        counts[assign[i]] += 1;
    }
    let centroids: Vec<V3> = (0..cluster_count)
        .map(|j| {
            if counts[j] > 0 {
                vec3::scale(sums[j], 1.0 / counts[j] as f64)
            } else {
                [0.0; 3]
            }
        })
        .collect();
    points
        .iter()
        .enumerate()
        .map(|(i, &p)| vec3::dist_sq(p, centroids[assign[i]]))
        .sum()
}

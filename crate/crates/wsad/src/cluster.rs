//! Per-video 2-means over hidden representations: Lloyd's algorithm with
//! deterministic farthest-pair initialization and canonical center ordering.
//! The center distance feeds the cluster-distance loss.

use crate::error::{Error, Result};

/// Output of one per-video binary clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Cluster index per segment, in {0,1}.
    pub assignments: Vec<u8>,
    pub center0: Vec<f64>,
    pub center1: Vec<f64>,
    /// Euclidean distance between the two centers.
    pub d: f64,
    /// Within-cluster sum of squared distances.
    pub sse: f64,
}

impl ClusterResult {
    pub fn cluster_sizes(&self) -> (usize, usize) {
        let ones = self.assignments.iter().filter(|&&a| a == 1).count();
        (self.assignments.len() - ones, ones)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Deterministic initialization: the exact farthest pair for m <= 256
/// (lowest index pair on ties), else the farthest pair within a stride
/// sample of 256 points.
pub fn init_centers(points: &[f64], m: usize, dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m < 2 {
        return Err(Error::InsufficientSegments(m));
    }
    let candidates: Vec<usize> = if m <= 256 {
        (0..m).collect()
    } else {
        (0..256).map(|i| i * m / 256).collect()
    };
    let mut best = (0usize, 1usize);
    let mut best_d = f64::NEG_INFINITY;
    for (ci, &i) in candidates.iter().enumerate() {
        for &j in &candidates[ci + 1..] {
            let d = sq_dist(&points[i * dim..(i + 1) * dim], &points[j * dim..(j + 1) * dim]);
            if d > best_d {
                best_d = d;
                best = (i, j);
            }
        }
    }
    Ok((
        points[best.0 * dim..(best.0 + 1) * dim].to_vec(),
        points[best.1 * dim..(best.1 + 1) * dim].to_vec(),
    ))
}

/// Lloyd's algorithm with k=2 on an `m x dim` row-major point matrix.
///
/// Deterministic multi-start: Lloyd runs from the farthest-pair centers and
/// from the best contiguous split along two candidate directions (the
/// farthest-pair axis and the principal component), keeping the lowest-SSE
/// result. Each run terminates when assignments stabilize, SSE improvement
/// drops below `tol`, or `max_iters` is reached. An empty cluster is
/// repaired by moving in the point farthest from the surviving center,
/// unless all points are identical (then the partition stays degenerate and
/// d = 0). Cluster 0 is the lexicographically smaller center, so the
/// labeling is canonical.
pub fn two_means(points: &[f64], m: usize, dim: usize, max_iters: usize, tol: f64) -> Result<ClusterResult> {
    if m < 2 {
        return Err(Error::InsufficientSegments(m));
    }
    if points.len() != m * dim {
        return Err(Error::ShapeMismatch(format!(
            "points has {} values, expected {m}x{dim}",
            points.len()
        )));
    }
    for (idx, v) in points.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteFeature { segment: idx / dim, coord: idx % dim });
        }
    }

    let far = init_centers(points, m, dim)?;
    let far_axis: Vec<f64> = far.1.iter().zip(&far.0).map(|(a, b)| a - b).collect();
    let mut starts = vec![far];
    if let Some(s) = split_init(points, m, dim, &far_axis) {
        starts.push(s);
    }
    if let Some(s) = split_init(points, m, dim, &principal_direction(points, m, dim)) {
        starts.push(s);
    }

    let mut best: Option<(Vec<u8>, Vec<f64>, Vec<f64>, f64)> = None;
    for (c0, c1) in starts {
        let run = lloyd(points, m, dim, c0, c1, max_iters, tol);
        if best.as_ref().is_none_or(|b| run.3 < b.3) {
            best = Some(run);
        }
    }
    let (mut assignments, mut c0, mut c1, sse) = best.expect("at least one start");

    // canonical labeling by lexicographic center order
    if c1 < c0 {
        std::mem::swap(&mut c0, &mut c1);
        for a in &mut assignments {
            *a = 1 - *a;
        }
    }
    let d = sq_dist(&c0, &c1).sqrt();
    Ok(ClusterResult { assignments, center0: c0, center1: c1, d, sse })
}

fn lloyd(
    points: &[f64],
    m: usize,
    dim: usize,
    mut c0: Vec<f64>,
    mut c1: Vec<f64>,
    max_iters: usize,
    tol: f64,
) -> (Vec<u8>, Vec<f64>, Vec<f64>, f64) {
    let mut assignments = vec![0u8; m];
    let mut prev_assignments: Option<Vec<u8>> = None;
    let mut prev_sse = f64::INFINITY;
    let mut sse = f64::INFINITY;

    for _ in 0..max_iters.max(1) {
        // assignment step; ties go to cluster 0
        for j in 0..m {
            let p = &points[j * dim..(j + 1) * dim];
            assignments[j] = if sq_dist(p, &c0) <= sq_dist(p, &c1) { 0 } else { 1 };
        }
        repair_empty_cluster(points, m, dim, &mut assignments, &c0, &c1);

        // update step
        let (n0, n1) = recompute_centers(points, m, dim, &assignments, &mut c0, &mut c1);
        debug_assert!(n0 + n1 == m);

        sse = (0..m)
            .map(|j| {
                let p = &points[j * dim..(j + 1) * dim];
                sq_dist(p, if assignments[j] == 0 { &c0 } else { &c1 })
            })
            .sum();
        debug_assert!(sse <= prev_sse + 1e-9, "SSE increased: {prev_sse} -> {sse}");

        if prev_assignments.as_deref() == Some(&assignments[..]) {
            break;
        }
        let improved = prev_sse - sse;
        prev_assignments = Some(assignments.clone());
        if improved < tol {
            break;
        }
        prev_sse = sse;
    }
    (assignments, c0, c1, sse)
}

/// Initial centers from the best contiguous split of the points sorted by
/// projection onto `direction` (group SSE via prefix sums). None when the
/// direction or the projections are degenerate.
fn split_init(points: &[f64], m: usize, dim: usize, direction: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let norm: f64 = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return None;
    }
    let mut order: Vec<usize> = (0..m).collect();
    let proj: Vec<f64> = (0..m)
        .map(|j| {
            points[j * dim..(j + 1) * dim]
                .iter()
                .zip(direction)
                .map(|(p, d)| p * d)
                .sum::<f64>()
        })
        .collect();
    order.sort_by(|&a, &b| proj[a].partial_cmp(&proj[b]).unwrap().then(a.cmp(&b)));

    // prefix sums over the sorted order: per-coordinate sums and squared norms
    let mut sum = vec![0.0; dim];
    let mut sq = 0.0;
    let mut prefix_sum = Vec::with_capacity(m);
    let mut prefix_sq = Vec::with_capacity(m);
    for &j in &order {
        for (s, v) in sum.iter_mut().zip(&points[j * dim..(j + 1) * dim]) {
            *s += v;
        }
        sq += points[j * dim..(j + 1) * dim].iter().map(|v| v * v).sum::<f64>();
        prefix_sum.push(sum.clone());
        prefix_sq.push(sq);
    }

    let group_sse = |sum: &[f64], sq: f64, n: usize| sq - sum.iter().map(|s| s * s).sum::<f64>() / n as f64;
    let total_sum = prefix_sum[m - 1].clone();
    let total_sq = prefix_sq[m - 1];
    let mut best_k = 1;
    let mut best_sse = f64::INFINITY;
    for k in 1..m {
        let left = group_sse(&prefix_sum[k - 1], prefix_sq[k - 1], k);
        let right_sum: Vec<f64> = total_sum.iter().zip(&prefix_sum[k - 1]).map(|(t, l)| t - l).collect();
        let right = group_sse(&right_sum, total_sq - prefix_sq[k - 1], m - k);
        let sse = left + right;
        if sse < best_sse {
            best_sse = sse;
            best_k = k;
        }
    }
    let mean = |sum: &[f64], n: usize| sum.iter().map(|s| s / n as f64).collect::<Vec<f64>>();
    let left_mean = mean(&prefix_sum[best_k - 1], best_k);
    let right_sum: Vec<f64> = total_sum.iter().zip(&prefix_sum[best_k - 1]).map(|(t, l)| t - l).collect();
    let right_mean = mean(&right_sum, m - best_k);
    if left_mean == right_mean {
        return None;
    }
    Some((left_mean, right_mean))
}

/// Dominant covariance eigenvector by power iteration; deterministic.
fn principal_direction(points: &[f64], m: usize, dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for j in 0..m {
        for (s, v) in mean.iter_mut().zip(&points[j * dim..(j + 1) * dim]) {
            *s += v;
        }
    }
    for s in &mut mean {
        *s /= m as f64;
    }
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    for _ in 0..30 {
        let mut next = vec![0.0; dim];
        for j in 0..m {
            let centered: Vec<f64> = points[j * dim..(j + 1) * dim].iter().zip(&mean).map(|(p, mu)| p - mu).collect();
            let dot: f64 = centered.iter().zip(&v).map(|(c, vi)| c * vi).sum();
            for (n, c) in next.iter_mut().zip(&centered) {
                *n += dot * c;
            }
        }
        let norm: f64 = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 1e-12) {
            break;
        }
        for x in &mut next {
            *x /= norm;
        }
        v = next;
    }
    v
}

/// Rebuilds centers, distance, and SSE for fixed assignments over a fresh
/// point matrix. Used when cached assignments are reused after the
/// representations have moved.
pub fn from_assignments(points: &[f64], m: usize, dim: usize, assignments: &[u8]) -> Result<ClusterResult> {
    if assignments.len() != m || points.len() != m * dim {
        return Err(Error::ShapeMismatch("assignments do not match point matrix".into()));
    }
    let mut c0 = vec![0.0; dim];
    let mut c1 = vec![0.0; dim];
    recompute_centers(points, m, dim, assignments, &mut c0, &mut c1);
    let sse = (0..m)
        .map(|j| {
            let p = &points[j * dim..(j + 1) * dim];
            sq_dist(p, if assignments[j] == 0 { &c0 } else { &c1 })
        })
        .sum();
    let d = sq_dist(&c0, &c1).sqrt();
    Ok(ClusterResult { assignments: assignments.to_vec(), center0: c0, center1: c1, d, sse })
}

fn repair_empty_cluster(
    points: &[f64],
    m: usize,
    dim: usize,
    assignments: &mut [u8],
    c0: &[f64],
    c1: &[f64],
) {
    let ones = assignments.iter().filter(|&&a| a == 1).count();
    let (empty, center) = match (m - ones, ones) {
        (0, _) => (0u8, c1),
        (_, 0) => (1u8, c0),
        _ => return,
    };
    let mut far_idx = 0;
    let mut far_d = f64::NEG_INFINITY;
    for j in 0..m {
        let d = sq_dist(&points[j * dim..(j + 1) * dim], center);
        if d > far_d {
            far_d = d;
            far_idx = j;
        }
    }
    // all points identical: the partition is unrepairable, leave it
    if far_d > 0.0 {
        assignments[far_idx] = empty;
    }
}

/// Recomputes each center as the mean of its assigned points; an empty
/// cluster's center collapses onto the other center. Returns cluster sizes.
fn recompute_centers(
    points: &[f64],
    m: usize,
    dim: usize,
    assignments: &[u8],
    c0: &mut Vec<f64>,
    c1: &mut Vec<f64>,
) -> (usize, usize) {
    let mut sums = [vec![0.0; dim], vec![0.0; dim]];
    let mut counts = [0usize; 2];
    for j in 0..m {
        let side = assignments[j] as usize;
        counts[side] += 1;
        for (s, v) in sums[side].iter_mut().zip(&points[j * dim..(j + 1) * dim]) {
            *s += v;
        }
    }
    if counts[0] > 0 {
        for (c, s) in c0.iter_mut().zip(&sums[0]) {
            *c = s / counts[0] as f64;
        }
    }
    if counts[1] > 0 {
        for (c, s) in c1.iter_mut().zip(&sums[1]) {
            *c = s / counts[1] as f64;
        }
    }
    if counts[0] == 0 {
        c0.clone_from(c1);
    }
    if counts[1] == 0 {
        c1.clone_from(c0);
    }
    (counts[0], counts[1])
}

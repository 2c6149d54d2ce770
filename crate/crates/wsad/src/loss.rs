//! Composite training loss: per-segment MSE plus a weighted
//! cluster-distance term that pulls a normal video's cluster centers
//! together (capped) and pushes an anomalous video's centers apart.
//! Cluster assignments are treated as constants during differentiation;
//! gradients flow only through the two center means.

use crate::cluster::ClusterResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Trade-off weight on the cluster-distance term.
    pub lambda: f64,
    /// Cap on the normal-video distance loss.
    pub alpha: f64,
    /// Guard below which the distance is clamped and its gradient zeroed.
    pub epsilon_d: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda: 0.05, alpha: 1.0, epsilon_d: 1e-6 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig("lambda must be >= 0".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig("alpha must be > 0".into()));
        }
        if !(self.epsilon_d > 0.0) {
            return Err(Error::InvalidConfig("epsilon_d must be > 0".into()));
        }
        Ok(())
    }
}

/// Value and gradients of the full loss for one video.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: f64,
    pub regression: f64,
    pub cluster_distance: f64,
    /// d total / d scores, length m.
    pub dloss_dscores: Vec<f64>,
    /// d total / d hidden reps, `m x H` (already scaled by lambda).
    pub dloss_dhidden: Vec<f64>,
}

/// Mean squared error over the video's segments, with its gradient.
pub fn regression_loss(labels: &[u8], scores: &[f64]) -> Result<(f64, Vec<f64>)> {
    if labels.len() != scores.len() || labels.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "labels length {} vs scores length {}",
            labels.len(),
            scores.len()
        )));
    }
    let m = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(labels.len());
    for (&y, &s) in labels.iter().zip(scores) {
        let diff = s - y as f64;
        loss += diff * diff;
        grad.push(2.0 * diff / m);
    }
    Ok((loss / m, grad))
}

/// Cluster-distance loss and its gradient with respect to the hidden
/// representations the clustering was computed on.
///
/// With d clamped to at least epsilon_d: normal -> min(alpha, d),
/// anomalous -> 1/d. Inside the guard (d <= epsilon_d) and on the cap side
/// (normal, d >= alpha) the gradient is zero.
pub fn cluster_distance_loss(
    cluster: &ClusterResult,
    weak_label: u8,
    num_segments: usize,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    if cluster.assignments.len() != num_segments {
        return Err(Error::ShapeMismatch(format!(
            "cluster over {} segments, expected {num_segments}",
            cluster.assignments.len()
        )));
    }
    let dim = cluster.center0.len();
    let d_raw = cluster.d;
    let d = d_raw.max(cfg.epsilon_d);
    let (value, dloss_dd) = if weak_label == 0 {
        if d < cfg.alpha {
            (d, if d_raw <= cfg.epsilon_d { 0.0 } else { 1.0 })
        } else {
            (cfg.alpha, 0.0)
        }
    } else {
        (1.0 / d, if d_raw <= cfg.epsilon_d { 0.0 } else { -1.0 / (d * d) })
    };

    let mut grad = vec![0.0; num_segments * dim];
    if dloss_dd != 0.0 {
        let (n0, n1) = cluster.cluster_sizes();
        debug_assert!(n0 > 0 && n1 > 0, "d > epsilon implies both clusters non-empty");
        // d(d)/d(h_j) = +-(c0 - c1) / (d * cluster size), sign by membership
        for (j, &side) in cluster.assignments.iter().enumerate() {
            let (sign, count) = if side == 0 { (1.0, n0) } else { (-1.0, n1) };
            let scale = dloss_dd * sign / (d * count as f64);
            for k in 0..dim {
                grad[j * dim + k] = scale * (cluster.center0[k] - cluster.center1[k]);
            }
        }
    }
    Ok((value, grad))
}

pub fn total_loss(regression: f64, cluster_distance: f64, cfg: &LossConfig) -> f64 {
    regression + cfg.lambda * cluster_distance
}

/// Assembles the full per-video loss. `cluster` is None when the
/// cluster-distance term is disabled or the bag could not be clustered.
pub fn loss_breakdown(
    labels: &[u8],
    scores: &[f64],
    cluster: Option<&ClusterResult>,
    weak_label: u8,
    hidden_dim: usize,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let (regression, dloss_dscores) = regression_loss(labels, scores)?;
    let m = labels.len();
    let (cluster_distance, dloss_dhidden) = match cluster {
        Some(c) => {
            let (lc, grad) = cluster_distance_loss(c, weak_label, m, cfg)?;
            (lc, grad.into_iter().map(|g| cfg.lambda * g).collect())
        }
        None => (0.0, vec![0.0; m * hidden_dim]),
    };
    Ok(LossBreakdown {
        total: total_loss(regression, cluster_distance, cfg),
        regression,
        cluster_distance,
        dloss_dscores,
        dloss_dhidden,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> LossConfig {
        LossConfig::default()
    }

    #[test]
    fn mse_identity_is_zero() {
        let (l, g) = regression_loss(&[0, 1], &[0.0, 1.0]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mse_direct_arithmetic() {
        let (l, g) = regression_loss(&[0, 1], &[0.5, 0.5]).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
        assert!((g[0] - 0.5).abs() < 1e-15);
        assert!((g[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 9;
        let labels: Vec<u8> = (0..m).map(|_| rng.random_range(0..2u8)).collect();
        let scores: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..0.99)).collect();
        let (_, grad) = regression_loss(&labels, &scores).unwrap();
        let h = 1e-6;
        for i in 0..m {
            let mut plus = scores.clone();
            let mut minus = scores.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (regression_loss(&labels, &plus).unwrap().0
                - regression_loss(&labels, &minus).unwrap().0)
                / (2.0 * h);
            assert!((grad[i] - fd).abs() / fd.abs().max(1e-6) < 1e-6);
        }
    }

    /// Centers/d recomputed from points with frozen assignments: the
    /// differentiation model for the distance term.
    fn frozen_d(points: &[f64], assignments: &[u8], dim: usize) -> f64 {
        let m = assignments.len();
        let mut sums = [vec![0.0; dim], vec![0.0; dim]];
        let mut counts = [0usize; 2];
        for j in 0..m {
            let side = assignments[j] as usize;
            counts[side] += 1;
            for (s, v) in sums[side].iter_mut().zip(&points[j * dim..(j + 1) * dim]) {
                *s += v;
            }
        }
        let mut sq = 0.0;
        for k in 0..dim {
            let c0 = sums[0][k] / counts[0] as f64;
            let c1 = sums[1][k] / counts[1] as f64;
            sq += (c0 - c1) * (c0 - c1);
        }
        sq.sqrt()
    }

    fn frozen_lc(points: &[f64], assignments: &[u8], dim: usize, weak: u8, cfg: &LossConfig) -> f64 {
        let d = frozen_d(points, assignments, dim).max(cfg.epsilon_d);
        if weak == 0 {
            d.min(cfg.alpha)
        } else {
            1.0 / d
        }
    }

    #[test]
    fn normal_below_cap() {
        let pts = [0.0, 0.0, 0.3, 0.0];
        let c = cluster::two_means(&pts, 2, 2, 100, 1e-9).unwrap();
        let (lc, _) = cluster_distance_loss(&c, 0, 2, &cfg()).unwrap();
        assert!((lc - 0.3).abs() < 1e-12);
    }

    #[test]
    fn normal_cap_active_zeroes_gradient() {
        let pts = [0.0, 0.0, 5.0, 0.0];
        let c = cluster::two_means(&pts, 2, 2, 100, 1e-9).unwrap();
        let (lc, grad) = cluster_distance_loss(&c, 0, 2, &cfg()).unwrap();
        assert_eq!(lc, 1.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn anomalous_inverse_distance() {
        let pts = [0.0, 0.0, 0.5, 0.0];
        let c = cluster::two_means(&pts, 2, 2, 100, 1e-9).unwrap();
        let (lc, _) = cluster_distance_loss(&c, 1, 2, &cfg()).unwrap();
        assert!((lc - 2.0).abs() < 1e-12);
    }

    #[test]
    fn collapsed_clusters_use_guard_with_zero_gradient() {
        let pts = vec![1.0, 1.0].repeat(3);
        let c = cluster::two_means(&pts, 3, 2, 100, 1e-9).unwrap();
        let conf = cfg();
        let (lc_n, g_n) = cluster_distance_loss(&c, 0, 3, &conf).unwrap();
        assert!((lc_n - conf.epsilon_d).abs() < 1e-18);
        assert!(g_n.iter().all(|&g| g == 0.0));
        let (lc_a, g_a) = cluster_distance_loss(&c, 1, 3, &conf).unwrap();
        assert!((lc_a - 1.0 / conf.epsilon_d).abs() < 1e-6);
        assert!(g_a.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn hidden_gradient_matches_finite_differences_frozen_assignments() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let conf = cfg();
        for case in 0..20 {
            let (m, dim) = (6, 3);
            let pts: Vec<f64> = (0..m * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let c = cluster::two_means(&pts, m, dim, 100, 1e-9).unwrap();
            let (n0, n1) = c.cluster_sizes();
            if n0 == 0 || n1 == 0 || c.d < 1e-3 {
                continue;
            }
            for weak in [0u8, 1u8] {
                let (_, grad) = cluster_distance_loss(&c, weak, m, &conf).unwrap();
                if weak == 0 && c.d >= conf.alpha {
                    assert!(grad.iter().all(|&g| g == 0.0));
                    continue;
                }
                let h = 1e-5;
                for i in 0..m * dim {
                    let mut plus = pts.clone();
                    let mut minus = pts.clone();
                    plus[i] += h;
                    minus[i] -= h;
                    let fd = (frozen_lc(&plus, &c.assignments, dim, weak, &conf)
                        - frozen_lc(&minus, &c.assignments, dim, weak, &conf))
                        / (2.0 * h);
                    let denom = grad[i].abs().max(fd.abs()).max(1e-8);
                    assert!(
                        (grad[i] - fd).abs() / denom < 1e-4,
                        "case {case} weak {weak} coord {i}: analytic {} vs fd {fd}",
                        grad[i]
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_step_moves_distance_the_right_way() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let conf = cfg();
        let step = 1e-4;
        for _ in 0..20 {
            let (m, dim) = (6, 3);
            let pts: Vec<f64> = (0..m * dim).map(|_| rng.random_range(-0.4..0.4)).collect();
            let c = cluster::two_means(&pts, m, dim, 100, 1e-9).unwrap();
            let (n0, n1) = c.cluster_sizes();
            if n0 == 0 || n1 == 0 || c.d < 1e-3 || c.d >= conf.alpha {
                continue;
            }
            for weak in [0u8, 1u8] {
                let (_, grad) = cluster_distance_loss(&c, weak, m, &conf).unwrap();
                let moved: Vec<f64> = pts.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
                let new_d = frozen_d(&moved, &c.assignments, dim);
                if weak == 1 {
                    assert!(new_d > c.d, "anomalous step should increase d: {} -> {new_d}", c.d);
                } else {
                    assert!(new_d < c.d, "normal step should decrease d: {} -> {new_d}", c.d);
                }
            }
        }
    }

    #[test]
    fn monotonicity_in_d() {
        let conf = cfg();
        let lc_for = |d: f64, weak: u8| {
            let c = ClusterResult {
                assignments: vec![0, 1],
                center0: vec![0.0],
                center1: vec![d],
                d,
                sse: 0.0,
            };
            cluster_distance_loss(&c, weak, 2, &conf).unwrap().0
        };
        let grid: Vec<f64> = (1..=40).map(|i| i as f64 * 0.1).collect();
        for w in grid.windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!(lc_for(b, 0) >= lc_for(a, 0) - 1e-15);
            if a >= conf.alpha {
                assert_eq!(lc_for(a, 0), conf.alpha);
            }
            assert!(lc_for(b, 1) < lc_for(a, 1));
        }
    }

    #[test]
    fn total_loss_arithmetic() {
        let conf = cfg();
        assert!((total_loss(0.2, 2.0, &conf) - 0.3).abs() < 1e-15);
        let no_lc = LossConfig { lambda: 0.0, ..conf };
        assert_eq!(total_loss(0.42, 7.0, &no_lc), 0.42);
    }
}

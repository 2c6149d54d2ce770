//! Turns video-level weak labels into segment-level training labels.
//!
//! Anomalous videos get pseudo-labels from their binary clustering: cosine
//! alignment between the prediction-score vector and each cluster indicator
//! decides which cluster is the anomalous one.

use std::path::Path;

use crate::cluster::ClusterResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// Raw 2-means cluster index.
    Cluster,
    /// Cluster index after anomalous-side disambiguation.
    Pseudo,
    /// Final per-segment training target.
    Training,
}

/// Segment-level binary annotations for one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    pub kind: LabelKind,
    pub values: Vec<u8>,
}

/// Cosine similarities between the score vector and the two cluster
/// indicator vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentScores {
    pub s1: f64,
    pub s2: f64,
}

/// s1 = cos(scores, y_c), s2 = cos(scores, 1 - y_c).
///
/// Requires both clusters non-empty; an all-0 or all-1 `cluster_labels`
/// signals an upstream clustering bug.
pub fn cosine_alignment(scores: &[f64], cluster_labels: &[u8]) -> Result<AlignmentScores> {
    if scores.len() != cluster_labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "scores length {} vs cluster labels length {}",
            scores.len(),
            cluster_labels.len()
        )));
    }
    let m = scores.len();
    let ones = cluster_labels.iter().filter(|&&c| c == 1).count();
    if ones == 0 || ones == m {
        return Err(Error::DegenerateClustering(cluster_labels[0]));
    }
    let score_norm = scores.iter().map(|s| s * s).sum::<f64>().sqrt();
    let dot1: f64 = scores
        .iter()
        .zip(cluster_labels)
        .filter(|(_, &c)| c == 1)
        .map(|(s, _)| s)
        .sum();
    let dot2: f64 = scores
        .iter()
        .zip(cluster_labels)
        .filter(|(_, &c)| c == 0)
        .map(|(s, _)| s)
        .sum();
    Ok(AlignmentScores {
        s1: dot1 / (score_norm * (ones as f64).sqrt()),
        s2: dot2 / (score_norm * ((m - ones) as f64).sqrt()),
    })
}

/// Pseudo-labels for an anomalous video: keep the cluster labels when
/// s1 >= s2, otherwise flip them.
pub fn pseudo_labels(scores: &[f64], cluster_labels: &[u8]) -> Result<LabelVector> {
    let align = cosine_alignment(scores, cluster_labels)?;
    let values = if align.s1 >= align.s2 {
        cluster_labels.to_vec()
    } else {
        cluster_labels.iter().map(|c| 1 - c).collect()
    };
    Ok(LabelVector { kind: LabelKind::Pseudo, values })
}

/// Per-video min-max normalization of the score vector, into [eps, 1].
///
/// Sigmoid scores move slowly at small learning rates and stay bunched
/// near 0.5; on a near-constant vector the cosine comparison degenerates
/// to a cluster-size contest. Stretching the scores to full range turns
/// the learned per-video ranking into the magnitude contrast the
/// alignment needs. Constant vectors are returned unchanged.
pub fn normalize_for_alignment(scores: &[f64]) -> Vec<f64> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range > 1e-12) {
        return scores.to_vec();
    }
    const EPS: f64 = 1e-3;
    scores.iter().map(|s| EPS + (1.0 - EPS) * (s - min) / range).collect()
}

/// Pseudo-labels straight from a clustering result, with the degenerate
/// fallback: an unrepairable partition (single cluster) yields all-ones.
/// The bool reports whether the fallback fired.
pub fn pseudo_labels_from_cluster(scores: &[f64], cluster: &ClusterResult) -> Result<(LabelVector, bool)> {
    let (n0, n1) = cluster.cluster_sizes();
    if n0 == 0 || n1 == 0 {
        return Ok((
            LabelVector { kind: LabelKind::Pseudo, values: vec![1; scores.len()] },
            true,
        ));
    }
    Ok((pseudo_labels(scores, &cluster.assignments)?, false))
}

/// Final training labels: all-zeros for a normal video, the pseudo-labels
/// for an anomalous one. An anomalous bag with no pseudo-labels (too few
/// segments to cluster) falls back to all-ones; the bool flags that case.
pub fn training_labels(weak_label: u8, pseudo: Option<&LabelVector>, num_segments: usize) -> (LabelVector, bool) {
    if weak_label == 0 {
        return (
            LabelVector { kind: LabelKind::Training, values: vec![0; num_segments] },
            false,
        );
    }
    match pseudo {
        Some(p) => (
            LabelVector { kind: LabelKind::Training, values: p.values.clone() },
            false,
        ),
        None => (
            LabelVector { kind: LabelKind::Training, values: vec![1; num_segments] },
            true,
        ),
    }
}

/// Debug dump: `segment_index,score,cluster,pseudo` per segment.
pub fn write_label_dump(
    path: &Path,
    scores: &[f64],
    cluster_labels: &[u8],
    pseudo: &LabelVector,
) -> Result<()> {
    let mut out = String::from("segment_index,score,cluster,pseudo\n");
    for j in 0..scores.len() {
        out.push_str(&format!("{},{},{},{}\n", j, scores[j], cluster_labels[j], pseudo.values[j]));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

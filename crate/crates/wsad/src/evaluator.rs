//! Frame-level evaluation: segment scores replicated to frames, pooled
//! ROC-AUC with Mann-Whitney tie handling, and score-timeline export.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feature_store::{FrameTruth, VideoBag};
use crate::mlp::{self, ForwardMode, ModelParams};

/// One test video's per-frame scores next to its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScoreSeries {
    pub video_id: String,
    pub scores: Vec<f64>,
    pub truth: Vec<u8>,
}

/// Replicates each segment score to its f frames; trailing frames beyond
/// the last full segment reuse the last segment's score.
pub fn expand_scores(segment_scores: &[f64], frames_per_segment: usize, num_frames: usize) -> Result<Vec<f64>> {
    let m = segment_scores.len();
    let f = frames_per_segment;
    if m == 0 || f == 0 {
        return Err(Error::ShapeMismatch("need at least one segment and f >= 1".into()));
    }
    // num_frames must land within f-1 frames of m*f on either side
    if m * f >= num_frames + f || num_frames >= m * f + f {
        return Err(Error::SegmentationMismatch { segments: m, frames_per_segment: f, num_frames });
    }
    Ok((0..num_frames).map(|i| segment_scores[(i / f).min(m - 1)]).collect())
}

/// Dataset-pooled frame-level ROC-AUC, computed as the Mann-Whitney
/// statistic with 0.5 credit for ties.
pub fn roc_auc(series: &[FrameScoreSeries]) -> Result<f64> {
    let mut pool: Vec<(f64, u8)> = Vec::new();
    for s in series {
        if s.scores.len() != s.truth.len() {
            return Err(Error::ShapeMismatch(format!(
                "video {}: {} scores vs {} truth frames",
                s.video_id,
                s.scores.len(),
                s.truth.len()
            )));
        }
        pool.extend(s.scores.iter().copied().zip(s.truth.iter().copied()));
    }
    let positives = pool.iter().filter(|(_, t)| *t == 1).count();
    let negatives = pool.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::AucUndefined);
    }
    pool.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores are finite"));

    // rank-sum over the positives, average ranks within tie groups
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < pool.len() {
        let mut j = i;
        let mut tied_positives = 0usize;
        while j < pool.len() && pool[j].0 == pool[i].0 {
            tied_positives += pool[j].1 as usize;
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1..=j
        rank_sum += avg_rank * tied_positives as f64;
        i = j;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// CSV `frame,score,truth`, one data row per frame.
pub fn export_timeline(series: &FrameScoreSeries, path: &Path) -> Result<()> {
    let mut out = String::from("frame,score,truth\n");
    for (i, (s, t)) in series.scores.iter().zip(&series.truth).enumerate() {
        out.push_str(&format!("{i},{s},{t}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
pub struct Metrics {
    pub frame_auc: f64,
    pub num_frames: usize,
}

pub fn write_metrics(metrics: &Metrics, path: &Path) -> Result<()> {
    let json = serde_json::to_string(metrics).expect("metrics serialize");
    std::fs::write(path, format!("{json}\n")).map_err(|e| Error::io(path, e))
}

/// Scores one bag (eval-mode forward) and expands to frame level.
pub fn score_video(params: &ModelParams, bag: &VideoBag, num_frames: usize) -> Result<Vec<f64>> {
    let cache = mlp::forward(params, &bag.features_f64(), bag.num_segments, ForwardMode::Eval)?;
    expand_scores(&cache.scores, bag.frames_per_segment as usize, num_frames)
}

/// Evaluates a model over a labeled test split: per-video frame series and
/// the pooled frame-level AUC.
pub fn evaluate(
    params: &ModelParams,
    bags: &[VideoBag],
    truths: &[FrameTruth],
) -> Result<(f64, Vec<FrameScoreSeries>)> {
    if bags.len() != truths.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} bags vs {} truth files",
            bags.len(),
            truths.len()
        )));
    }
    let mut series = Vec::with_capacity(bags.len());
    for (bag, truth) in bags.iter().zip(truths) {
        series.push(FrameScoreSeries {
            video_id: bag.video_id.clone(),
            scores: score_video(params, bag, truth.num_frames)?,
            truth: truth.frame_labels(),
        });
    }
    let auc = roc_auc(&series)?;
    Ok((auc, series))
}

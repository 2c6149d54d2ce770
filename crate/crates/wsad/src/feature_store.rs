//! On-disk dataset model: per-video feature files, manifests, frame-level
//! ground truth, and the seeded synthetic corpus generator.
//!
//! Feature files are binary and bit-exact; everything else is plain UTF-8
//! text. Ground truth lives in separate per-video files so the training
//! path never touches it.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"WSAD";
pub const FEATURE_VERSION: u32 = 1;

/// One video's ordered segment feature vectors plus its video-level weak label.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoBag {
    pub video_id: String,
    /// 0 = normal, 1 = anomalous.
    pub weak_label: u8,
    /// Frames per segment (f). Identical across a dataset.
    pub frames_per_segment: u32,
    pub num_segments: usize,
    pub dim: usize,
    /// Row-major, `num_segments x dim`.
    pub features: Vec<f32>,
}

impl VideoBag {
    pub fn new(
        video_id: impl Into<String>,
        weak_label: u8,
        frames_per_segment: u32,
        num_segments: usize,
        dim: usize,
        features: Vec<f32>,
    ) -> Result<Self> {
        if num_segments == 0 {
            return Err(Error::EmptyBag);
        }
        if dim == 0 {
            return Err(Error::InvalidConfig("feature dim must be >= 1".into()));
        }
        if weak_label > 1 {
            return Err(Error::InvalidLabel {
                video_id: video_id.into(),
                found: weak_label.to_string(),
            });
        }
        if features.len() != num_segments * dim {
            return Err(Error::ShapeMismatch(format!(
                "features has {} values, expected {}x{}",
                features.len(),
                num_segments,
                dim
            )));
        }
        for (idx, v) in features.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature { segment: idx / dim, coord: idx % dim });
            }
        }
        Ok(Self {
            video_id: video_id.into(),
            weak_label,
            frames_per_segment,
            num_segments,
            dim,
            features,
        })
    }

    pub fn segment(&self, j: usize) -> &[f32] {
        &self.features[j * self.dim..(j + 1) * self.dim]
    }

    /// Features widened to f64 for the numeric core.
    pub fn features_f64(&self) -> Vec<f64> {
        self.features.iter().map(|&v| v as f64).collect()
    }
}

/// Ordered list of videos making up one dataset split.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub video_id: String,
    pub relative_path: PathBuf,
    pub weak_label: u8,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Frame-level ground truth for one test video. Never read during training.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub video_id: String,
    pub num_frames: usize,
    /// Inclusive 0-based intervals, sorted, non-overlapping. Empty for normal videos.
    pub anomalous_intervals: Vec<(usize, usize)>,
}

impl FrameTruth {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames == 0 {
            return Err(Error::InvalidFrameTruth {
                video_id: self.video_id.clone(),
                reason: "num_frames must be positive".into(),
            });
        }
        let mut prev_end: Option<usize> = None;
        for &(start, end) in &self.anomalous_intervals {
            if start > end || end >= self.num_frames {
                return Err(Error::InvalidFrameTruth {
                    video_id: self.video_id.clone(),
                    reason: format!("interval ({start},{end}) out of range"),
                });
            }
            if let Some(pe) = prev_end {
                if start <= pe {
                    return Err(Error::InvalidFrameTruth {
                        video_id: self.video_id.clone(),
                        reason: "intervals overlap or are unsorted".into(),
                    });
                }
            }
            prev_end = Some(end);
        }
        Ok(())
    }

    /// Per-frame binary labels (1 inside an anomalous interval).
    pub fn frame_labels(&self) -> Vec<u8> {
        let mut labels = vec![0u8; self.num_frames];
        for &(start, end) in &self.anomalous_intervals {
            for l in &mut labels[start..=end] {
                *l = 1;
            }
        }
        labels
    }
}

/// Parameters for the synthetic corpus generator.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_normal_videos: usize,
    pub num_anomalous_videos: usize,
    pub feature_dim: usize,
    pub segment_count_range: (usize, usize),
    pub anomaly_burst_range: (usize, usize),
    /// Distance between the normal and anomalous feature means.
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub frames_per_segment: u32,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.num_normal_videos == 0 || self.num_anomalous_videos == 0 {
            return err("need at least one video of each class");
        }
        if self.feature_dim == 0 {
            return err("feature_dim must be >= 1");
        }
        if self.segment_count_range.0 == 0 || self.segment_count_range.0 > self.segment_count_range.1 {
            return err("segment_count_range must satisfy 1 <= min <= max");
        }
        if self.anomaly_burst_range.0 == 0 || self.anomaly_burst_range.0 > self.anomaly_burst_range.1 {
            return err("anomaly_burst_range must satisfy 1 <= min <= max");
        }
        if self.anomaly_burst_range.1 > self.segment_count_range.0 {
            return err("anomaly burst max must not exceed segment count min");
        }
        if !(self.class_separation > 0.0) {
            return err("class_separation must be > 0");
        }
        if !(self.noise_sigma > 0.0) {
            return err("noise_sigma must be > 0");
        }
        if self.frames_per_segment == 0 {
            return err("frames_per_segment must be >= 1");
        }
        Ok(())
    }
}

/// Writes a bag in the binary feature format. Two writes of the same bag
/// produce byte-identical files.
pub fn write_video_features(bag: &VideoBag, path: &Path) -> Result<()> {
    // Re-validate so a hand-built bag with NaN cannot reach disk.
    let checked = VideoBag::new(
        bag.video_id.clone(),
        bag.weak_label,
        bag.frames_per_segment,
        bag.num_segments,
        bag.dim,
        bag.features.clone(),
    )?;
    let mut buf = Vec::with_capacity(24 + checked.features.len() * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.push(checked.weak_label);
    buf.extend_from_slice(&[0u8; 3]);
    buf.extend_from_slice(&(checked.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(checked.num_segments as u32).to_le_bytes());
    buf.extend_from_slice(&checked.frames_per_segment.to_le_bytes());
    for v in &checked.features {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &buf)
}

/// Reads a feature file, validating magic, version, and declared dimensions.
/// The video_id is taken from the file stem.
pub fn read_video_features(path: &Path) -> Result<VideoBag> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 24 || &bytes[0..4] != FEATURE_MAGIC {
        if bytes.len() >= 4 && &bytes[0..4] != FEATURE_MAGIC {
            return Err(Error::BadMagic { path: path.into(), expected: "WSAD" });
        }
        return Err(Error::Truncated { path: path.into(), expected: 24, found: bytes.len() });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(Error::WrongVersion { path: path.into(), found: version, expected: FEATURE_VERSION });
    }
    let weak_label = bytes[8];
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let num_segments = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let frames_per_segment = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
    if num_segments == 0 {
        return Err(Error::EmptyBag);
    }
    let expected = num_segments * dim * 4;
    let payload = &bytes[24..];
    if payload.len() != expected {
        return Err(Error::Truncated { path: path.into(), expected, found: payload.len() });
    }
    let features: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let video_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    VideoBag::new(video_id, weak_label, frames_per_segment, num_segments, dim, features)
}

/// Loads a manifest: one `video_id<TAB>relative_path<TAB>label` line per video.
pub fn load_manifest(path: &Path) -> Result<DatasetIndex> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::MalformedLine { line_no: line_no + 1 });
        }
        let video_id = fields[0].to_string();
        if !seen.insert(video_id.clone()) {
            return Err(Error::DuplicateVideoId(video_id));
        }
        let weak_label = match fields[2] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::InvalidLabel { video_id, found: other.to_string() });
            }
        };
        entries.push(ManifestEntry {
            video_id,
            relative_path: PathBuf::from(fields[1]),
            weak_label,
        });
    }
    if entries.is_empty() {
        return Err(Error::InvalidConfig(format!("manifest {} has no entries", path.display())));
    }
    Ok(DatasetIndex { entries })
}

pub fn save_manifest(index: &DatasetIndex, path: &Path) -> Result<()> {
    let mut buf = String::new();
    for e in &index.entries {
        buf.push_str(&format!(
            "{}\t{}\t{}\n",
            e.video_id,
            e.relative_path.display(),
            e.weak_label
        ));
    }
    atomic_write(path, buf.as_bytes())
}

/// Loads a frame-truth file: line 1 is `num_frames`, then one
/// `start<TAB>end` interval per line.
pub fn load_frame_truth(path: &Path, video_id: &str) -> Result<FrameTruth> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let bad = |reason: String| Error::InvalidFrameTruth { video_id: video_id.to_string(), reason };
    let num_frames: usize = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .trim()
        .parse()
        .map_err(|_| bad("first line must be num_frames".into()))?;
    let mut intervals = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(bad(format!("malformed interval line {line:?}")));
        }
        let start: usize = fields[0].trim().parse().map_err(|_| bad("bad interval start".into()))?;
        let end: usize = fields[1].trim().parse().map_err(|_| bad("bad interval end".into()))?;
        intervals.push((start, end));
    }
    let truth = FrameTruth {
        video_id: video_id.to_string(),
        num_frames,
        anomalous_intervals: intervals,
    };
    truth.validate()?;
    Ok(truth)
}

pub fn save_frame_truth(truth: &FrameTruth, path: &Path) -> Result<()> {
    truth.validate()?;
    let mut buf = format!("{}\n", truth.num_frames);
    for &(start, end) in &truth.anomalous_intervals {
        buf.push_str(&format!("{start}\t{end}\n"));
    }
    atomic_write(path, buf.as_bytes())
}

/// Generates a seeded synthetic corpus under `out_dir`:
/// `manifest.tsv`, `features/<id>.bin`, `truth/<id>.txt`.
///
/// Normal videos draw every segment from N(mu_n, sigma^2 I). Anomalous
/// videos contain one contiguous burst drawn from N(mu_a, sigma^2 I) with
/// `||mu_a - mu_n|| = class_separation`. Each video uses its own RNG
/// stream keyed by video index, so content is independent of generation
/// order and fully determined by (cfg, seed).
pub fn generate_synthetic(cfg: &SynthConfig, out_dir: &Path) -> Result<DatasetIndex> {
    cfg.validate()?;
    let features_dir = out_dir.join("features");
    let truth_dir = out_dir.join("truth");
    fs::create_dir_all(&features_dir).map_err(|e| Error::io(&features_dir, e))?;
    fs::create_dir_all(&truth_dir).map_err(|e| Error::io(&truth_dir, e))?;

    let total = cfg.num_normal_videos + cfg.num_anomalous_videos;
    let mut entries = Vec::with_capacity(total);
    for video_index in 0..total {
        let anomalous = video_index >= cfg.num_normal_videos;
        let video_id = if anomalous {
            format!("anom_{:03}", video_index - cfg.num_normal_videos)
        } else {
            format!("normal_{:03}", video_index)
        };
        let (bag, truth) = synth_video(cfg, video_index as u64, &video_id, anomalous)?;
        let rel = PathBuf::from("features").join(format!("{video_id}.bin"));
        write_video_features(&bag, &out_dir.join(&rel))?;
        save_frame_truth(&truth, &truth_dir.join(format!("{video_id}.txt")))?;
        entries.push(ManifestEntry {
            video_id,
            relative_path: rel,
            weak_label: anomalous as u8,
        });
    }
    let index = DatasetIndex { entries };
    save_manifest(&index, &out_dir.join("manifest.tsv"))?;
    Ok(index)
}

fn synth_video(
    cfg: &SynthConfig,
    video_index: u64,
    video_id: &str,
    anomalous: bool,
) -> Result<(VideoBag, FrameTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(video_index + 1);
    let noise = Normal::new(0.0f64, cfg.noise_sigma).expect("sigma validated");

    let m = rng.random_range(cfg.segment_count_range.0..=cfg.segment_count_range.1);
    let burst = if anomalous {
        let len = rng.random_range(cfg.anomaly_burst_range.0..=cfg.anomaly_burst_range.1);
        let start = rng.random_range(0..=m - len);
        Some((start, len))
    } else {
        None
    };

    // mu_n = 0; mu_a offset along the first coordinate by class_separation.
    let dim = cfg.feature_dim;
    let mut features = Vec::with_capacity(m * dim);
    for seg in 0..m {
        let in_burst = burst.is_some_and(|(start, len)| seg >= start && seg < start + len);
        for coord in 0..dim {
            let mean = if in_burst && coord == 0 { cfg.class_separation } else { 0.0 };
            features.push((mean + noise.sample(&mut rng)) as f32);
        }
    }
    let bag = VideoBag::new(
        video_id,
        anomalous as u8,
        cfg.frames_per_segment,
        m,
        dim,
        features,
    )?;
    let f = cfg.frames_per_segment as usize;
    let truth = FrameTruth {
        video_id: video_id.to_string(),
        num_frames: m * f,
        anomalous_intervals: burst
            .map(|(start, len)| vec![(start * f, (start + len) * f - 1)])
            .unwrap_or_default(),
    };
    Ok((bag, truth))
}

/// Loads every bag named by the index, checking that feature dim and
/// frames_per_segment agree across the dataset.
pub fn load_dataset(index: &DatasetIndex, root: &Path) -> Result<Vec<VideoBag>> {
    let mut bags = Vec::with_capacity(index.len());
    for entry in &index.entries {
        let mut bag = read_video_features(&root.join(&entry.relative_path))?;
        bag.video_id = entry.video_id.clone();
        bag.weak_label = entry.weak_label;
        if let Some(first) = bags.first() {
            let first: &VideoBag = first;
            if bag.dim != first.dim {
                return Err(Error::ShapeMismatch(format!(
                    "video {} has dim {}, dataset dim is {}",
                    bag.video_id, bag.dim, first.dim
                )));
            }
            if bag.frames_per_segment != first.frames_per_segment {
                return Err(Error::ShapeMismatch(format!(
                    "video {} has frames_per_segment {}, dataset value is {}",
                    bag.video_id, bag.frames_per_segment, first.frames_per_segment
                )));
            }
        }
        bags.push(bag);
    }
    Ok(bags)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

use std::path::PathBuf;

/// Errors surfaced by the dataset, model, and training layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("unsupported version {found} in {path} (expected {expected})")]
    WrongVersion { path: PathBuf, found: u32, expected: u32 },

    #[error("truncated file {path}: expected {expected} bytes of payload, found {found}")]
    Truncated { path: PathBuf, expected: usize, found: usize },

    #[error("non-finite feature value at segment {segment}, coordinate {coord}")]
    NonFiniteFeature { segment: usize, coord: usize },

    #[error("empty bag: m_i must be >= 1")]
    EmptyBag,

    #[error("duplicate video_id {0:?} in manifest")]
    DuplicateVideoId(String),

    #[error("invalid label {found:?} for video {video_id:?} (must be 0 or 1)")]
    InvalidLabel { video_id: String, found: String },

    #[error("malformed manifest line {line_no}: expected 3 tab-separated fields")]
    MalformedLine { line_no: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("insufficient segments: clustering needs m >= 2, got {0}")]
    InsufficientSegments(usize),

    #[error("degenerate clustering: cluster labels are all {0}")]
    DegenerateClustering(u8),

    #[error("AUC undefined: pooled frames contain only one class")]
    AucUndefined,

    #[error("frame truth for {video_id}: {reason}")]
    InvalidFrameTruth { video_id: String, reason: String },

    #[error("inconsistent segmentation: {segments} segments x {frames_per_segment} frames vs {num_frames} frames")]
    SegmentationMismatch { segments: usize, frames_per_segment: usize, num_frames: usize },

    #[error("non-finite value during {0} (training halted)")]
    NumericFailure(&'static str),

    #[error("missing frame truth file for video {0:?}")]
    MissingTruth(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

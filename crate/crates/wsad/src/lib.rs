//! Weakly supervised video anomaly detection over precomputed segment
//! features: a two-layer scoring network trained from video-level labels,
//! with per-video binary clustering that cleans those labels into
//! segment-level pseudo-labels and a cluster-distance loss term.

pub mod cluster;
pub mod error;
pub mod evaluator;
pub mod feature_store;
pub mod labels;
pub mod loss;
pub mod mlp;
pub mod trainer;

pub use error::{Error, Result};

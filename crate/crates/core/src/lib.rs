//! Partial video copy detection: learned frame-pair similarity (mask map),
//! learned alignment directions (step map), path extraction and
//! segment-level evaluation.
//!
//! The typical flow is [`datagen::Dataset::generate`] →
//! [`train::train`] → [`pipeline::detect`] → [`eval::precision_recall_sweep`].

// `!(x >= 0.0)` style checks reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod datagen;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod features;
pub mod gradcheck;
pub mod io;
pub mod model;
pub mod network;
pub mod pipeline;
pub mod train;

pub use align::{AlignConfig, AlignerRegistry, AlignmentPath, Weighting};
pub use error::{Error, Result};
pub use eval::{Detection, EvalReport, GroundTruthPair, Segment};
pub use features::{FeatureSequence, SimilarityMatrix};
pub use network::{Network, NetworkConfig, Prediction};
pub use pipeline::{detect, DetectOptions};
pub use train::{train, TrainConfig};

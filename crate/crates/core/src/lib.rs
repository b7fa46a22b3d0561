//! Foreground segmentation for image sequences via overlapping-block
//! analysis.
//!
//! Each frame is split into overlapping blocks; every block yields a compact
//! 12-dimensional DCT descriptor which runs through a three-stage classifier
//! cascade (Gaussian likelihood against an adaptive per-location model,
//! cosine-distance illumination check, temporal-correlation check). Block
//! verdicts are then integrated per pixel — a pixel is foreground only when
//! at least 90% of the blocks covering it say so — which yields smooth
//! contours without any morphological post-processing. A scene-change
//! detector rebuilds the model means when most of the frame stays foreground
//! for half a second.
//!
//! The crate also ships the evaluation side: F-measure mask scoring,
//! CLEAR-MOT tracking metrics (MOTP/MOTA) with optimal assignment, a blob
//! extractor for hypothesis tracks, and a deterministic synthetic-scene
//! generator that provides exact ground truth.

pub mod cascade;
pub mod config;
pub mod descriptor;
pub mod engine;
pub mod imaging;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod reinit;
pub mod synth;

pub use cascade::{classify_block, cosdist, BlockLabel, CascadeStats, DecidedBy, LabelValue};
pub use config::{Config, ConfigError};
pub use descriptor::{
    dct_block, describe_frame, make_grid, BlockGrid, DctBasis, Descriptor, DESCRIPTOR_DIM,
};
pub use engine::{EngineError, FrameOutput, Segmenter};
pub use imaging::{
    load_frame, load_mask, load_sequence, sequence_paths, write_frame, write_mask, FrameRgb,
    ImageError, MaskGray,
};
pub use mask::{accumulate_votes, integrate, precompute_totals, threshold_votes, VoteGrid};
pub use metrics::{
    assign, blobs_from_mask, score_mask, score_tracking, tracks_from_masks, MaskScore,
    MetricsError, MotScore, TrackSet,
};
pub use model::{BackgroundModel, BlockModel, ModelError, PrevLabel, TrainStats};
pub use reinit::{rebuild, Observation, ReinitState};
pub use synth::{render, Background, GainEvent, ObjectEvent, SceneScript, SwitchEvent, SynthError};

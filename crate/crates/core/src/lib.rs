//! Evaluation, curation and enrichment engine for visual-object detection
//! datasets built from lecture-video frames.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`dataset`]: frame/box data model, manifest and annotation I/O, statistics.
//! - [`geometry`] and [`matching`]: IoU and confidence-ordered greedy matching.
//! - [`eval`]: single-class COCO-style AP/AP50/AP75 and precision/recall/F1.
//! - [`ops`]: seeded splits, k-fold plans, merging, filtering and near-duplicate removal.
//! - [`enrich`]: detector backend protocol, auto-labeling and fine-tuning strategies.
//! - [`heuristic`]: a neural-free segmentation + clustering baseline detector.
//! - [`experiment`]: config-driven experiment grids and report emission.
//!
//! Neural detectors never run in-process. They are reached through the
//! file/subprocess protocol described in [`enrich::backend`].

pub mod dataset;
pub mod enrich;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod heuristic;
pub mod matching;
pub mod ops;
pub mod predictions;
pub mod rng;
pub mod synth;

pub use dataset::{
    Dataset, DatasetStats, FrameRecord, GroundTruthObject, LabelSource,
};
pub use error::{Error, Result};
pub use geometry::{iou, BBox};
pub use matching::{match_detections, Detection, MatchResult, PredictionSet};

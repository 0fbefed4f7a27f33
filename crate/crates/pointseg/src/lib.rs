//! Point-cloud instance and semantic segmentation trained from single-click
//! annotations.
//!
//! The crate implements the full loop on synthetic desk-scale scenes:
//! scene generation with ground truth, click simulation, graph-based
//! supervoxel partition and label expansion, a small per-point network with
//! hand-derived gradients, discriminative/cross-entropy/offset losses,
//! composite similarity metrics, pseudo-label generation (seed-constrained
//! k-means, nearest-neighbor assignment, mean-shift), training loops for the
//! weak-only / baseline / click variants, inference with semantic fusion,
//! and mIoU / mAP@50 evaluation.

pub mod clustering;
pub mod config;
pub mod eval;
pub mod fsutil;
pub mod losses;
pub mod model;
pub mod pipeline;
pub mod pointcloud;
pub mod similarity;
pub mod suites;
pub mod supervoxel;

mod error;

pub use error::{Error, Result};

/// Per-point label. Instance ids and semantic class ids are small
/// nonnegative integers; [`SENTINEL_NONE`] marks "no label".
pub type Label = i32;

/// Marks points without an instance or semantic label. Serialized as `-1`.
pub const SENTINEL_NONE: Label = -1;

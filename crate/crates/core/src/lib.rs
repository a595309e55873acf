//! Corner-case proposal generation (COPG) and evaluation.
//!
//! The pipeline takes a lidar sweep plus a calibrated camera and produces 2D
//! boxes around objects that are neither background nor a known common class:
//!
//! 1. [`ground`] removes the ground plane with RANSAC.
//! 2. [`range`] builds a range image and clusters it with the merge-angle
//!    breadth-first search.
//! 3. [`proposal`] projects clusters to boxes, drops boxes dominated by
//!    background segmentation, and suppresses boxes overlapping common-class
//!    detections.
//!
//! [`eval`] scores proposals with COCO-style recall and precision, and
//! [`synth`] generates ray-cast scenes with exact ground truth.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eval;
pub mod ground;
pub mod model;
pub mod proposal;
pub mod range;
pub mod synth;

pub use model::{
    box_from_pixels, iou, project_point, Box2D, CameraModel, Detection, ModelError, PipelineConfig, Point3, PointCloud,
    SegMap,
};

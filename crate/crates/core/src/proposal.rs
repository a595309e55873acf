//! The proposal pipeline: clusters become boxes, boxes dominated by
//! background are dropped, and boxes overlapping common-class detections are
//! suppressed.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ground::{fit_ground_plane, split_ground, GroundError, RansacParams};
use crate::model::{
    box_from_pixels, iou, project_point, Box2D, CameraModel, Detection, ModelError, PipelineConfig, PointCloud, SegMap,
};
use crate::range::{
    build_range_image_subset, cluster_range_image, extract_clusters, Cluster, RangeImageError, RangeImageSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Initial,
    Intermediate,
    Final,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Initial => "initial",
            Stage::Intermediate => "intermediate",
            Stage::Final => "final",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub bbox: Box2D,
    pub source_cluster_id: u32,
    /// Number of points in the source cluster.
    pub score: f64,
    pub stage: Stage,
}

/// Everything the pipeline consumes for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub scene_id: String,
    pub cloud: PointCloud,
    pub cam: CameraModel,
    pub seg: Option<SegMap>,
    /// Common-class detections.
    pub detections: Option<Vec<Detection>>,
}

impl SceneBundle {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.cloud.validate()?;
        if let Some(seg) = &self.seg {
            seg.check_matches(&self.cam)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    pub scene_id: String,
    pub proposals: Vec<Proposal>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProposalError {
    #[error("box {0:?} covers no pixel centers")]
    EmptyRaster(Box2D),
}

/// Projects each cluster into the image and boxes the projected points.
/// Clusters with fewer than two distinct visible pixels yield nothing.
pub fn initial_proposals(clusters: &[Cluster], cloud: &PointCloud, cam: &CameraModel) -> Vec<Proposal> {
    let mut pixels = Vec::new();
    clusters
        .iter()
        .filter_map(|cluster| {
            pixels.clear();
            pixels.extend(
                cluster
                    .point_indices
                    .iter()
                    .filter_map(|&i| project_point(&cloud.points[i], cam)),
            );
            box_from_pixels(&pixels, cam).map(|bbox| Proposal {
                bbox,
                source_cluster_id: cluster.id,
                score: cluster.len() as f64,
                stage: Stage::Initial,
            })
        })
        .collect()
}

/// Half-open range of integer pixels whose centers fall in `[lo, lo + len)`,
/// clamped to `[0, limit)`.
fn center_span(lo: f64, len: f64, limit: u32) -> (u32, u32) {
    let clamp = |v: f64| v.max(0.0).min(limit as f64) as u32;
    (clamp((lo - 0.5).ceil()), clamp((lo + len - 0.5).ceil()))
}

/// Fraction of the pixels inside `bbox` (by pixel-center containment) whose
/// label is a background class.
pub fn background_ratio(bbox: &Box2D, seg: &SegMap, background_ids: &BTreeSet<u8>) -> Result<f64, ProposalError> {
    let (c0, c1) = center_span(bbox.x, bbox.w, seg.width);
    let (r0, r1) = center_span(bbox.y, bbox.h, seg.height);
    if c0 >= c1 || r0 >= r1 {
        return Err(ProposalError::EmptyRaster(*bbox));
    }
    let mut is_bg = [false; 256];
    for &id in background_ids {
        is_bg[id as usize] = true;
    }
    let width = seg.width as usize;
    let mut bg = 0usize;
    for r in r0..r1 {
        let row = &seg.labels[r as usize * width..][..width];
        bg += row[c0 as usize..c1 as usize]
            .iter()
            .filter(|&&l| is_bg[l as usize])
            .count();
    }
    let total = (c1 - c0) as usize * (r1 - r0) as usize;
    Ok(bg as f64 / total as f64)
}

/// Keeps proposals whose background ratio is at most `bg_ratio_max` and
/// promotes them to [`Stage::Intermediate`]. A box covering no pixel center
/// carries no background evidence and is kept.
pub fn remove_background(
    proposals: Vec<Proposal>,
    seg: &SegMap,
    background_ids: &BTreeSet<u8>,
    bg_ratio_max: f64,
) -> Vec<Proposal> {
    proposals
        .into_iter()
        .filter(|p| match background_ratio(&p.bbox, seg, background_ids) {
            Ok(ratio) => ratio <= bg_ratio_max,
            Err(ProposalError::EmptyRaster(_)) => true,
        })
        .map(|p| Proposal {
            stage: Stage::Intermediate,
            ..p
        })
        .collect()
}

/// Keeps proposals whose IoU with every detection is at most
/// `suppression_iou_max` and promotes them to [`Stage::Final`].
pub fn suppress_common(proposals: Vec<Proposal>, detections: &[Detection], suppression_iou_max: f64) -> Vec<Proposal> {
    proposals
        .into_iter()
        .filter(|p| detections.iter().all(|d| iou(&p.bbox, &d.bbox) <= suppression_iou_max))
        .map(|p| Proposal {
            stage: Stage::Final,
            ..p
        })
        .collect()
}

fn promote(proposals: Vec<Proposal>, stage: Stage) -> Vec<Proposal> {
    proposals.into_iter().map(|p| Proposal { stage, ..p }).collect()
}

/// Pipeline steps, reported to the observer as each one completes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStep {
    GroundRemoval,
    Clustering,
    Projection,
    BackgroundRemoval,
    CommonSuppression,
}

impl PipelineStep {
    pub const ALL: [PipelineStep; 5] = [
        PipelineStep::GroundRemoval,
        PipelineStep::Clustering,
        PipelineStep::Projection,
        PipelineStep::BackgroundRemoval,
        PipelineStep::CommonSuppression,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PipelineStep::GroundRemoval => "ground_removal",
            PipelineStep::Clustering => "clustering",
            PipelineStep::Projection => "projection",
            PipelineStep::BackgroundRemoval => "background_removal",
            PipelineStep::CommonSuppression => "common_suppression",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("ground removal: {0}")]
    Ground(#[from] GroundError),
    #[error("range image: {0}")]
    RangeImage(#[from] RangeImageError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("scene {scene_id}: {source}")]
pub struct PipelineError {
    pub scene_id: String,
    #[source]
    pub source: StageError,
}

/// Result of one pipeline run with every intermediate stage retained.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// Final proposals.
    pub proposals: ProposalSet,
    pub initial: Vec<Proposal>,
    pub intermediate: Vec<Proposal>,
    /// Steps that ran as identity passes because their input was missing.
    pub skipped: Vec<PipelineStep>,
    pub ground_points: usize,
    pub num_clusters: usize,
    /// Clusters surviving the size and distance filters.
    pub clusters: Vec<Cluster>,
}

impl PipelineOutput {
    pub fn stage_counts(&self) -> [usize; 3] {
        [
            self.initial.len(),
            self.intermediate.len(),
            self.proposals.proposals.len(),
        ]
    }

    /// All proposals of every stage in stage order.
    pub fn all_stages(&self) -> impl Iterator<Item = &Proposal> {
        self.initial
            .iter()
            .chain(&self.intermediate)
            .chain(&self.proposals.proposals)
    }
}

pub fn range_spec(cfg: &PipelineConfig) -> RangeImageSpec {
    RangeImageSpec {
        rows: cfg.range_rows,
        cols: cfg.range_cols,
        elevation_min: cfg.elevation_min,
        elevation_max: cfg.elevation_max,
    }
}

pub fn ransac_params(cfg: &PipelineConfig) -> RansacParams {
    RansacParams {
        iterations: cfg.ransac_iterations,
        inlier_dist: cfg.ransac_inlier_dist,
        seed: cfg.seed,
        max_tilt: cfg.ransac_max_tilt,
    }
}

/// Runs ground removal, clustering, projection, background removal and
/// common-class suppression on one scene.
pub fn run_pipeline(scene: &SceneBundle, cfg: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    run_pipeline_observed(scene, cfg, &mut |_| {})
}

/// [`run_pipeline`] that calls `on_step` after each step finishes, in order.
/// Skipped steps are reported too.
pub fn run_pipeline_observed(
    scene: &SceneBundle,
    cfg: &PipelineConfig,
    on_step: &mut dyn FnMut(PipelineStep),
) -> Result<PipelineOutput, PipelineError> {
    let annotate = |source: StageError| PipelineError {
        scene_id: scene.scene_id.clone(),
        source,
    };
    cfg.validate().map_err(|e| annotate(e.into()))?;
    scene.validate().map_err(|e| annotate(e.into()))?;

    // An empty sweep has nothing to fit a plane to.
    let (ground_points, nonground) = if scene.cloud.is_empty() {
        (0, Vec::new())
    } else {
        let plane = fit_ground_plane(&scene.cloud, &ransac_params(cfg)).map_err(|e| annotate(e.into()))?;
        let split = split_ground(&scene.cloud, &plane, cfg.ransac_inlier_dist);
        (split.ground_indices.len(), split.nonground_indices)
    };
    on_step(PipelineStep::GroundRemoval);

    let img = build_range_image_subset(&scene.cloud, nonground, &range_spec(cfg)).map_err(|e| annotate(e.into()))?;
    let labels = cluster_range_image(&img, cfg.theta_min);
    let clusters = extract_clusters(&labels, &img, cfg.min_cluster_points, cfg.max_cluster_distance);
    on_step(PipelineStep::Clustering);

    let initial = initial_proposals(&clusters, &scene.cloud, &scene.cam);
    on_step(PipelineStep::Projection);

    let mut skipped = Vec::new();
    let intermediate = match &scene.seg {
        Some(seg) => remove_background(initial.clone(), seg, &cfg.background_class_ids, cfg.bg_ratio_max),
        None => {
            skipped.push(PipelineStep::BackgroundRemoval);
            promote(initial.clone(), Stage::Intermediate)
        }
    };
    on_step(PipelineStep::BackgroundRemoval);

    let finals = match &scene.detections {
        Some(dets) => suppress_common(intermediate.clone(), dets, cfg.suppression_iou_max),
        None => {
            skipped.push(PipelineStep::CommonSuppression);
            promote(intermediate.clone(), Stage::Final)
        }
    };
    on_step(PipelineStep::CommonSuppression);

    Ok(PipelineOutput {
        proposals: ProposalSet {
            scene_id: scene.scene_id.clone(),
            proposals: finals,
        },
        initial,
        intermediate,
        skipped,
        ground_points,
        num_clusters: labels.num_clusters as usize,
        clusters,
    })
}

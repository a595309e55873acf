//! Shared geometry and annotation types, camera projection, and the pipeline
//! configuration.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite point coordinate at index {0}")]
    NonFinitePoint(usize),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid box: x={x} y={y} w={w} h={h}")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },
    #[error("segmentation map is {got_w}x{got_h}, camera expects {want_w}x{want_h}")]
    SegMapSize {
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// A lidar return in the sensor frame (x forward, y left, z up), meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            intensity: 0.0,
        }
    }

    pub fn with_intensity(mut self, intensity: f64) -> Self {
        self.intensity = intensity;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Euclidean distance to the sensor origin.
    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn xyz(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Ordered point set. Indices into `points` identify points for the whole
/// pipeline run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks that every coordinate is finite.
    pub fn validate(&self) -> Result<(), ModelError> {
        match self.points.iter().position(|p| !p.is_finite()) {
            Some(i) => Err(ModelError::NonFinitePoint(i)),
            None => Ok(()),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }
}

/// Pinhole camera described by a single 3x4 matrix mapping homogeneous
/// lidar-frame points to homogeneous pixels (intrinsics times extrinsics).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    p: [[f64; 4]; 3],
    width: u32,
    height: u32,
}

impl CameraModel {
    pub fn new(p: [[f64; 4]; 3], width: u32, height: u32) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::InvalidCamera(format!(
                "image size {width}x{height} must be positive"
            )));
        }
        if p.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidCamera("non-finite matrix entry".into()));
        }
        if !has_full_row_rank(&p) {
            return Err(ModelError::InvalidCamera("projection matrix is rank deficient".into()));
        }
        Ok(Self { p, width, height })
    }

    /// Builds `K [R | -R c]` from focal lengths, principal point, a
    /// lidar-to-camera rotation and the camera center in the lidar frame.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: [[f64; 3]; 3],
        center: [f64; 3],
        width: u32,
        height: u32,
    ) -> Result<Self, ModelError> {
        let k = [[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]];
        let mut rt = [[0.0; 4]; 3];
        for r in 0..3 {
            rt[r][..3].copy_from_slice(&rotation[r]);
            rt[r][3] = -(0..3).map(|c| rotation[r][c] * center[c]).sum::<f64>();
        }
        let mut p = [[0.0; 4]; 3];
        for r in 0..3 {
            for c in 0..4 {
                p[r][c] = (0..3).map(|i| k[r][i] * rt[i][c]).sum();
            }
        }
        Self::new(p, width, height)
    }

    pub fn matrix(&self) -> &[[f64; 4]; 3] {
        &self.p
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Homogeneous image coordinates `P * [x y z 1]^T`.
    pub fn homogeneous(&self, p: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (r, row) in self.p.iter().enumerate() {
            out[r] = row[0] * p[0] + row[1] * p[1] + row[2] * p[2] + row[3];
        }
        out
    }

    /// True when (u, v) lies in the half-open image rectangle.
    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn has_full_row_rank(p: &[[f64; 4]; 3]) -> bool {
    let scale = p.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return false;
    }
    // Rank 3 iff at least one 3x3 minor is non-singular.
    (0..4).any(|skip| {
        let cols: Vec<usize> = (0..4).filter(|&c| c != skip).collect();
        let mut m = [[0.0; 3]; 3];
        for r in 0..3 {
            for (j, &c) in cols.iter().enumerate() {
                m[r][j] = p[r][c] / scale;
            }
        }
        det3(m).abs() > 1e-12
    })
}

/// Projects a lidar-frame point to a continuous pixel. Absent when the point
/// is at or behind the camera plane or lands outside `[0, w) x [0, h)`.
pub fn project_point(p: &Point3, cam: &CameraModel) -> Option<(f64, f64)> {
    let h = cam.homogeneous(p.xyz());
    if !(h[2] > 0.0) {
        return None;
    }
    let u = h[0] / h[2];
    let v = h[1] / h[2];
    cam.contains_pixel(u, v).then_some((u, v))
}

/// Axis-aligned pixel rectangle in COCO `(x, y, w, h)` convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Box2D {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, ModelError> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) || w <= 0.0 || h <= 0.0 {
            return Err(ModelError::InvalidBox { x, y, w, h });
        }
        Ok(Self { x, y, w, h })
    }

    /// Box spanning `[x0, x1] x [y0, y1]`. The extent is rounded down where
    /// needed so that `x + w <= x1` and `y + h <= y1` hold exactly in floating
    /// point.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, ModelError> {
        Self::new(x0, y0, span(x0, x1), span(y0, y1))
    }

    pub fn x2(&self) -> f64 {
        self.x + self.w
    }

    pub fn y2(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    /// Intersection with the rectangle `[0, width] x [0, height]`.
    pub fn clip(&self, width: f64, height: f64) -> Option<Box2D> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.x2().min(width);
        let y1 = self.y2().min(height);
        Box2D::from_corners(x0, y0, x1, y1).ok()
    }

    /// Whether the box lies inside `[0, width] x [0, height]`.
    pub fn inside(&self, width: f64, height: f64) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x2() <= width && self.y2() <= height
    }
}

fn span(lo: f64, hi: f64) -> f64 {
    let mut d = hi - lo;
    while d > 0.0 && lo + d > hi {
        d = d.next_down();
    }
    d
}

/// Intersection over union of two boxes; 0 when they do not overlap.
pub fn iou(a: &Box2D, b: &Box2D) -> f64 {
    let iw = a.x2().min(b.x2()) - a.x.max(b.x);
    let ih = a.y2().min(b.y2()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Envelope of a pixel set clipped to the image. Absent for fewer than two
/// distinct pixels or when nothing of positive area remains.
pub fn box_from_pixels(pixels: &[(f64, f64)], cam: &CameraModel) -> Option<Box2D> {
    let first = *pixels.first()?;
    if pixels.iter().all(|&p| p == first) {
        return None;
    }
    let (mut x0, mut y0, mut x1, mut y1) = (first.0, first.1, first.0, first.1);
    for &(u, v) in &pixels[1..] {
        x0 = x0.min(u);
        y0 = y0.min(v);
        x1 = x1.max(u);
        y1 = y1.max(v);
    }
    let w = cam.width() as f64;
    let h = cam.height() as f64;
    let (x0, y0) = (x0.max(0.0), y0.max(0.0));
    let (x1, y1) = (x1.min(w), y1.min(h));
    Box2D::from_corners(x0, y0, x1, y1).ok()
}

/// A 2D detection from an external detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: Box2D,
    pub category: String,
    pub score: f64,
}

/// Per-pixel semantic class ids, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMap {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u8>,
}

impl SegMap {
    pub fn new(width: u32, height: u32, labels: Vec<u8>) -> Result<Self, ModelError> {
        if labels.len() != width as usize * height as usize {
            return Err(ModelError::InvalidConfig(format!(
                "segmentation map has {} labels for {width}x{height}",
                labels.len()
            )));
        }
        Ok(Self { width, height, labels })
    }

    pub fn filled(width: u32, height: u32, label: u8) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width as usize * height as usize],
        }
    }

    pub fn get(&self, col: u32, row: u32) -> u8 {
        self.labels[row as usize * self.width as usize + col as usize]
    }

    pub fn set(&mut self, col: u32, row: u32, label: u8) {
        self.labels[row as usize * self.width as usize + col as usize] = label;
    }

    pub fn check_matches(&self, cam: &CameraModel) -> Result<(), ModelError> {
        if self.width != cam.width() || self.height != cam.height() {
            return Err(ModelError::SegMapSize {
                got_w: self.width,
                got_h: self.height,
                want_w: cam.width(),
                want_h: cam.height(),
            });
        }
        Ok(())
    }
}

/// Cityscapes train ids for road, sidewalk, building, wall, fence, pole,
/// vegetation, terrain and sky.
pub const DEFAULT_BACKGROUND_IDS: [u8; 9] = [0, 1, 2, 3, 4, 5, 8, 9, 10];

/// Every tunable of the proposal pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Merge-angle threshold in degrees; neighbors merge when the angle is
    /// strictly greater.
    pub theta_min: f64,
    pub min_cluster_points: usize,
    /// Clusters whose nearest point is farther than this (meters) are dropped.
    pub max_cluster_distance: f64,
    pub bg_ratio_max: f64,
    pub suppression_iou_max: f64,
    pub ransac_iterations: usize,
    pub ransac_inlier_dist: f64,
    /// Maximum angle between the ground normal and +z, degrees. `None`
    /// accepts any orientation.
    pub ransac_max_tilt: Option<f64>,
    pub range_rows: usize,
    pub range_cols: usize,
    pub elevation_min: f64,
    pub elevation_max: f64,
    pub background_class_ids: BTreeSet<u8>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            theta_min: 8.0,
            min_cluster_points: 10,
            max_cluster_distance: 50.0,
            bg_ratio_max: 0.45,
            suppression_iou_max: 0.25,
            ransac_iterations: 200,
            ransac_inlier_dist: 0.2,
            ransac_max_tilt: Some(30.0),
            range_rows: 64,
            range_cols: 2048,
            elevation_min: -24.8,
            elevation_max: 2.0,
            background_class_ids: DEFAULT_BACKGROUND_IDS.into_iter().collect(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if !(self.theta_min > 0.0 && self.theta_min < 180.0) {
            return bad(format!("theta_min {} outside (0, 180)", self.theta_min));
        }
        if !(0.0..=1.0).contains(&self.bg_ratio_max) {
            return bad(format!("bg_ratio_max {} outside [0, 1]", self.bg_ratio_max));
        }
        if !(0.0..=1.0).contains(&self.suppression_iou_max) {
            return bad(format!(
                "suppression_iou_max {} outside [0, 1]",
                self.suppression_iou_max
            ));
        }
        if self.range_rows == 0 || self.range_cols == 0 {
            return bad("range image needs at least one row and column".into());
        }
        if !(self.elevation_min < self.elevation_max) {
            return bad(format!(
                "elevation_min {} must be below elevation_max {}",
                self.elevation_min, self.elevation_max
            ));
        }
        if !(self.max_cluster_distance >= 0.0) {
            return bad("max_cluster_distance must be non-negative".into());
        }
        if !(self.ransac_inlier_dist >= 0.0) {
            return bad("ransac_inlier_dist must be non-negative".into());
        }
        if let Some(t) = self.ransac_max_tilt {
            if !(0.0..=90.0).contains(&t) {
                return bad(format!("ransac_max_tilt {t} outside [0, 90]"));
            }
        }
        Ok(())
    }
}

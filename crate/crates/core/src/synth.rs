//! Deterministic ray-cast scenes with exact labels.
//!
//! A scene is a flat ground plane plus boxes (with yaw) and vertical
//! cylinders. Lidar beams are cast on the exact bin-center angles of the
//! range image, so every emitted point lands in its own pixel. The camera
//! view is ray-cast per pixel center to paint the segmentation map, and each
//! object's ground-truth box is the projected envelope of its hull.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{project_point, Box2D, CameraModel, Detection, Point3, PointCloud, SegMap};
use crate::proposal::SceneBundle;
use crate::range::RangeImageSpec;

/// Segmentation ids painted by the renderer (Cityscapes train ids, with 255
/// for an unlabeled foreground object).
pub mod seg_ids {
    pub const ROAD: u8 = 0;
    pub const BUILDING: u8 = 2;
    pub const SKY: u8 = 10;
    pub const CAR: u8 = 13;
    pub const UNKNOWN_OBJECT: u8 = 255;
}

/// Sides of the polygon circumscribing a cylinder when bounding its
/// projection.
const CYLINDER_HULL_SIDES: usize = 32;

const HIT_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Box,
    /// Vertical cylinder; `extents[0]` is the diameter.
    Cylinder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    /// A traffic participant the detector knows about.
    Common,
    /// A planted corner case.
    Corner,
    /// Buildings, walls and other static scenery.
    BackgroundStructure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    /// Center of the footprint at the object's base, lidar frame.
    pub position: [f64; 3],
    /// Rotation about +z, degrees. Ignored for cylinders.
    pub yaw: f64,
    /// Length (local x), width (local y) and height, meters.
    pub extents: [f64; 3],
    pub kind: ObjectKind,
    pub category: String,
}

impl ObjectSpec {
    /// Radius of the smallest vertical cylinder around the footprint.
    pub fn footprint_radius(&self) -> f64 {
        match self.shape {
            Shape::Box => 0.5 * self.extents[0].hypot(self.extents[1]),
            Shape::Cylinder => 0.5 * self.extents[0],
        }
    }

    /// Ray intersection distance along `dir` from `origin`, if any.
    pub fn intersect(&self, origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
        let rel = [
            origin[0] - self.position[0],
            origin[1] - self.position[1],
            origin[2] - self.position[2],
        ];
        let h = self.extents[2];
        match self.shape {
            Shape::Box => {
                let (s, c) = self.yaw.to_radians().sin_cos();
                // Rotate into the object frame by -yaw.
                let o = [c * rel[0] + s * rel[1], -s * rel[0] + c * rel[1], rel[2]];
                let d = [c * dir[0] + s * dir[1], -s * dir[0] + c * dir[1], dir[2]];
                let lo = [-0.5 * self.extents[0], -0.5 * self.extents[1], 0.0];
                let hi = [0.5 * self.extents[0], 0.5 * self.extents[1], h];
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    if d[k] == 0.0 {
                        if o[k] < lo[k] || o[k] > hi[k] {
                            return None;
                        }
                    } else {
                        let a = (lo[k] - o[k]) / d[k];
                        let b = (hi[k] - o[k]) / d[k];
                        t0 = t0.max(a.min(b));
                        t1 = t1.min(a.max(b));
                    }
                }
                (t1 >= t0 && t0 > HIT_EPS).then_some(t0)
            }
            Shape::Cylinder => {
                let r = 0.5 * self.extents[0];
                let mut best: Option<f64> = None;
                let mut consider = |t: f64| {
                    if t > HIT_EPS && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                let a = dir[0] * dir[0] + dir[1] * dir[1];
                if a > 0.0 {
                    let b = 2.0 * (rel[0] * dir[0] + rel[1] * dir[1]);
                    let cc = rel[0] * rel[0] + rel[1] * rel[1] - r * r;
                    let disc = b * b - 4.0 * a * cc;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                            let z = rel[2] + t * dir[2];
                            if (0.0..=h).contains(&z) {
                                consider(t);
                            }
                        }
                    }
                }
                if dir[2] != 0.0 {
                    for cap in [0.0, h] {
                        let t = (cap - rel[2]) / dir[2];
                        let x = rel[0] + t * dir[0];
                        let y = rel[1] + t * dir[1];
                        if x * x + y * y <= r * r {
                            consider(t);
                        }
                    }
                }
                best
            }
        }
    }

    /// Vertices whose convex hull contains the object.
    pub fn hull_vertices(&self) -> Vec<[f64; 3]> {
        let [px, py, pz] = self.position;
        let h = self.extents[2];
        let footprint: Vec<[f64; 2]> = match self.shape {
            Shape::Box => {
                let (s, c) = self.yaw.to_radians().sin_cos();
                let (hl, hw) = (0.5 * self.extents[0], 0.5 * self.extents[1]);
                [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)]
                    .iter()
                    .map(|&(x, y)| [px + c * x - s * y, py + s * x + c * y])
                    .collect()
            }
            Shape::Cylinder => {
                let n = CYLINDER_HULL_SIDES;
                let r = 0.5 * self.extents[0] / (std::f64::consts::PI / n as f64).cos();
                (0..n)
                    .map(|i| {
                        let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                        [px + r * a.cos(), py + r * a.sin()]
                    })
                    .collect()
            }
        };
        footprint
            .iter()
            .flat_map(|&[x, y]| [[x, y, pz], [x, y, pz + h]])
            .collect()
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        let rel = [
            p[0] - self.position[0],
            p[1] - self.position[1],
            p[2] - self.position[2],
        ];
        if rel[2] < 0.0 || rel[2] > self.extents[2] {
            return false;
        }
        match self.shape {
            Shape::Box => {
                let (s, c) = self.yaw.to_radians().sin_cos();
                let x = c * rel[0] + s * rel[1];
                let y = -s * rel[0] + c * rel[1];
                x.abs() <= 0.5 * self.extents[0] && y.abs() <= 0.5 * self.extents[1]
            }
            Shape::Cylinder => rel[0].hypot(rel[1]) <= 0.5 * self.extents[0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarSpec {
    pub rows: usize,
    pub cols: usize,
    pub elevation_min: f64,
    pub elevation_max: f64,
    /// Returns beyond this range (meters) are dropped.
    pub max_range: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 2048,
            elevation_min: -24.8,
            elevation_max: 2.0,
            max_range: 120.0,
        }
    }
}

impl LidarSpec {
    pub fn range_image_spec(&self) -> RangeImageSpec {
        RangeImageSpec {
            rows: self.rows,
            cols: self.cols,
            elevation_min: self.elevation_min,
            elevation_max: self.elevation_max,
        }
    }

    /// Unit direction of the beam at `(row, col)`.
    pub fn beam(&self, row: usize, col: usize) -> [f64; 3] {
        let spec = self.range_image_spec();
        let (se, ce) = spec.row_angle(row).to_radians().sin_cos();
        let (sa, ca) = spec.col_angle(col).to_radians().sin_cos();
        [ce * ca, ce * sa, se]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    /// Height of the ground plane in the lidar frame (negative: below the
    /// sensor).
    pub ground_height: f64,
    pub lidar: LidarSpec,
    pub objects: Vec<ObjectSpec>,
    pub camera: CameraModel,
    /// Uniform range noise half-width, meters.
    #[serde(default)]
    pub range_jitter: f64,
    /// Uniform corner noise half-width for synthetic detections, pixels.
    #[serde(default)]
    pub detection_jitter: f64,
}

/// KITTI-like forward camera: 1242x375, focal 721.5 px, mounted 0.27 m ahead
/// of and 0.08 m below the lidar.
pub fn default_camera() -> CameraModel {
    CameraModel::from_parts(
        721.5377,
        721.5377,
        609.5593,
        172.854,
        [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]],
        [0.27, 0.0, -0.08],
        1242,
        375,
    )
    .expect("default camera is valid")
}

/// What a ray hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointLabel {
    Ground,
    /// Index into the scene's object list.
    Object(usize),
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(self.ground_height < 0.0) {
            return bad(format!("ground height {} must be below the sensor", self.ground_height));
        }
        if self.lidar.rows == 0 || self.lidar.cols == 0 {
            return bad("lidar needs at least one row and column".into());
        }
        if !(self.lidar.elevation_min < self.lidar.elevation_max) {
            return bad("lidar elevation span is empty".into());
        }
        if !(self.lidar.max_range > 0.0) {
            return bad("lidar max range must be positive".into());
        }
        if !(self.range_jitter >= 0.0 && self.detection_jitter >= 0.0) {
            return bad("jitter must be non-negative".into());
        }
        let cam_center = camera_center(&self.camera);
        for (i, o) in self.objects.iter().enumerate() {
            if o.extents.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                return bad(format!("object {i} has non-positive extents"));
            }
            if o.position.iter().any(|v| !v.is_finite()) || !o.yaw.is_finite() {
                return bad(format!("object {i} has a non-finite pose"));
            }
            if o.contains([0.0; 3]) {
                return bad(format!("object {i} contains the lidar origin"));
            }
            if o.contains(cam_center) {
                return bad(format!("object {i} contains the camera center"));
            }
        }
        Ok(())
    }

    /// Nearest hit along a ray within `max_t`.
    pub fn ray_cast(&self, origin: [f64; 3], dir: [f64; 3], max_t: f64) -> Option<(f64, PointLabel)> {
        let mut best: Option<(f64, PointLabel)> = None;
        if dir[2] != 0.0 {
            let t = (self.ground_height - origin[2]) / dir[2];
            if t > HIT_EPS {
                best = Some((t, PointLabel::Ground));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if let Some(t) = o.intersect(origin, dir) {
                if best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, PointLabel::Object(i)));
                }
            }
        }
        best.filter(|&(t, _)| t <= max_t)
    }
}

/// Camera center in the lidar frame: the null vector of P.
pub fn camera_center(cam: &CameraModel) -> [f64; 3] {
    let p = cam.matrix();
    let inv = invert3(camera_m(cam));
    let p4 = [p[0][3], p[1][3], p[2][3]];
    let c = mat_vec(&inv, p4);
    [-c[0], -c[1], -c[2]]
}

fn camera_m(cam: &CameraModel) -> [[f64; 3]; 3] {
    let p = cam.matrix();
    [
        [p[0][0], p[0][1], p[0][2]],
        [p[1][0], p[1][1], p[1][2]],
        [p[2][0], p[2][1], p[2][2]],
    ]
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let inv_det = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            // Cofactor transpose.
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            *v = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) * inv_det;
        }
    }
    out
}

/// A planted object with its derived ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedObject {
    pub id: usize,
    pub kind: ObjectKind,
    pub category: String,
    /// Projected hull envelope clipped to the image; absent when part of the
    /// hull is behind the camera or nothing remains inside the image.
    pub gt_box: Option<Box2D>,
    /// Lidar returns on this object.
    pub hits: usize,
}

/// A generated scene with its oracle labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub bundle: SceneBundle,
    /// One label per cloud point.
    pub point_labels: Vec<PointLabel>,
    /// Range-image pixel `(row, col)` of each cloud point's beam.
    pub beams: Vec<(usize, usize)>,
    pub objects: Vec<PlantedObject>,
}

impl SyntheticScene {
    pub fn ground_truth_boxes(&self, kind: ObjectKind) -> impl Iterator<Item = (&PlantedObject, Box2D)> {
        self.objects
            .iter()
            .filter(move |o| o.kind == kind)
            .filter_map(|o| o.gt_box.map(|b| (o, b)))
    }
}

/// Envelope of the projected hull, or `None` if any hull vertex is at or
/// behind the camera plane.
pub fn analytic_box(object: &ObjectSpec, cam: &CameraModel) -> Option<Box2D> {
    let mut x0 = f64::INFINITY;
    let mut y0 = f64::INFINITY;
    let mut x1 = f64::NEG_INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for v in object.hull_vertices() {
        let h = cam.homogeneous(v);
        if !(h[2] > 0.0) {
            return None;
        }
        let (u, w) = (h[0] / h[2], h[1] / h[2]);
        x0 = x0.min(u);
        y0 = y0.min(w);
        x1 = x1.max(u);
        y1 = y1.max(w);
    }
    Box2D::from_corners(x0, y0, x1, y1)
        .ok()?
        .clip(f64::from(cam.width()), f64::from(cam.height()))
}

fn label_intensity(label: PointLabel, objects: &[ObjectSpec]) -> f64 {
    match label {
        PointLabel::Ground => 0.1,
        PointLabel::Object(i) => match objects[i].kind {
            ObjectKind::Common => 0.6,
            ObjectKind::Corner => 0.8,
            ObjectKind::BackgroundStructure => 0.3,
        },
    }
}

fn seg_id(label: Option<PointLabel>, objects: &[ObjectSpec]) -> u8 {
    match label {
        None => seg_ids::SKY,
        Some(PointLabel::Ground) => seg_ids::ROAD,
        Some(PointLabel::Object(i)) => match objects[i].kind {
            ObjectKind::Common => seg_ids::CAR,
            ObjectKind::Corner => seg_ids::UNKNOWN_OBJECT,
            ObjectKind::BackgroundStructure => seg_ids::BUILDING,
        },
    }
}

/// Renders the segmentation map by casting a ray through every pixel center.
pub fn render_segmentation(spec: &SceneSpec) -> SegMap {
    let cam = &spec.camera;
    let inv = invert3(camera_m(cam));
    let origin = camera_center(cam);
    let mut seg = SegMap::filled(cam.width(), cam.height(), seg_ids::SKY);
    for v in 0..cam.height() {
        for u in 0..cam.width() {
            let d = mat_vec(&inv, [u as f64 + 0.5, v as f64 + 0.5, 1.0]);
            let hit = spec.ray_cast(origin, d, f64::INFINITY).map(|(_, l)| l);
            seg.set(u, v, seg_id(hit, &spec.objects));
        }
    }
    seg
}

/// Generates the point cloud, segmentation, detections and labels of a scene.
pub fn generate_scene(spec: &SceneSpec, scene_id: &str) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lidar = &spec.lidar;

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut beams = Vec::new();
    let mut hits = vec![0usize; spec.objects.len()];
    for row in 0..lidar.rows {
        for col in 0..lidar.cols {
            let dir = lidar.beam(row, col);
            let Some((t, label)) = spec.ray_cast([0.0; 3], dir, lidar.max_range) else {
                continue;
            };
            let t = if spec.range_jitter > 0.0 {
                (t + rng.gen_range(-spec.range_jitter..=spec.range_jitter)).max(1e-3)
            } else {
                t
            };
            if let PointLabel::Object(i) = label {
                hits[i] += 1;
            }
            points.push(
                Point3::new(t * dir[0], t * dir[1], t * dir[2]).with_intensity(label_intensity(label, &spec.objects)),
            );
            labels.push(label);
            beams.push((row, col));
        }
    }

    let cam = &spec.camera;
    let objects: Vec<PlantedObject> = spec
        .objects
        .iter()
        .enumerate()
        .map(|(id, o)| PlantedObject {
            id,
            kind: o.kind,
            category: o.category.clone(),
            gt_box: analytic_box(o, cam),
            hits: hits[id],
        })
        .collect();

    let (w, h) = (f64::from(cam.width()), f64::from(cam.height()));
    let detections: Vec<Detection> = objects
        .iter()
        .filter(|o| o.kind == ObjectKind::Common)
        .filter_map(|o| {
            let b = o.gt_box?;
            let bbox = if spec.detection_jitter > 0.0 {
                let j = spec.detection_jitter;
                let mut n = || rng.gen_range(-j..=j);
                let (x0, y0, x1, y1) = (b.x + n(), b.y + n(), b.x2() + n(), b.y2() + n());
                Box2D::from_corners(x0, y0, x1, y1).ok()?.clip(w, h)?
            } else {
                b
            };
            Some(Detection {
                bbox,
                category: o.category.clone(),
                score: 1.0,
            })
        })
        .collect();

    Ok(SyntheticScene {
        bundle: SceneBundle {
            scene_id: scene_id.to_string(),
            cloud: PointCloud::new(points),
            cam: cam.clone(),
            seg: Some(render_segmentation(spec)),
            detections: Some(detections),
        },
        point_labels: labels,
        beams,
        objects,
    })
}

/// Inclusive `[min, max]` count range.
pub type CountRange = [usize; 2];

/// Controls for [`generate_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusKnobs {
    pub corner_per_scene: CountRange,
    pub common_per_scene: CountRange,
    pub background_per_scene: CountRange,
    pub ground_height: f64,
    pub lidar: LidarSpec,
    pub range_jitter: f64,
    pub detection_jitter: f64,
    /// Corner and common objects are placed at distances in this range.
    pub object_distance: [f64; 2],
    /// Half-width of the azimuth window for corner and common objects,
    /// degrees. Keep it inside the camera's field of view.
    pub azimuth_half_width: f64,
}

impl Default for CorpusKnobs {
    fn default() -> Self {
        Self {
            corner_per_scene: [1, 3],
            common_per_scene: [1, 2],
            background_per_scene: [0, 2],
            ground_height: -1.73,
            lidar: LidarSpec::default(),
            range_jitter: 0.0,
            detection_jitter: 0.0,
            object_distance: [8.0, 22.0],
            azimuth_half_width: 30.0,
        }
    }
}

/// Placement attempts per object before it is dropped.
const MAX_PLACEMENT_ATTEMPTS: usize = 200;
/// Lateral bound for foreground objects, meters; structures start beyond
/// `STRUCTURE_MIN_LATERAL`, so they never sit between the sensor and a
/// foreground object.
const FOREGROUND_MAX_LATERAL: f64 = 11.0;
const STRUCTURE_MIN_LATERAL: f64 = 16.0;
/// Angular gap kept between foreground objects, degrees.
const AZIMUTH_MARGIN: f64 = 1.5;

fn sample_count(rng: &mut ChaCha8Rng, range: CountRange) -> usize {
    let (lo, hi) = (range[0].min(range[1]), range[0].max(range[1]));
    rng.gen_range(lo..=hi)
}

fn sample_corner(rng: &mut ChaCha8Rng) -> (Shape, [f64; 3], f64, &'static str) {
    if rng.gen_bool(0.5) {
        let d = rng.gen_range(0.7..1.3);
        (Shape::Cylinder, [d, d, rng.gen_range(1.2..2.0)], 0.0, "barrel")
    } else {
        (
            Shape::Box,
            [
                rng.gen_range(0.8..1.8),
                rng.gen_range(0.8..1.8),
                rng.gen_range(1.2..2.0),
            ],
            rng.gen_range(-90.0..90.0),
            "obstacle",
        )
    }
}

fn sample_common(rng: &mut ChaCha8Rng) -> ([f64; 3], f64) {
    (
        [
            rng.gen_range(3.8..4.6),
            rng.gen_range(1.6..1.9),
            rng.gen_range(1.4..1.6),
        ],
        rng.gen_range(-15.0..15.0),
    )
}

/// Reproducible random scene specs. Foreground objects (corner and common)
/// sit in disjoint azimuth sectors inside the camera view with their full
/// box in the image; structures line the sides of the road.
pub fn generate_corpus(n: usize, seed: u64, knobs: &CorpusKnobs) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let camera = default_camera();
    let (w, h) = (f64::from(camera.width()), f64::from(camera.height()));
    (0..n)
        .map(|_| {
            let scene_seed: u64 = rng.gen();
            let n_corner = sample_count(&mut rng, knobs.corner_per_scene);
            let n_common = sample_count(&mut rng, knobs.common_per_scene);
            let n_bg = sample_count(&mut rng, knobs.background_per_scene);

            let mut objects: Vec<ObjectSpec> = Vec::new();
            let mut sectors: Vec<(f64, f64)> = Vec::new();
            let kinds = std::iter::repeat_n(ObjectKind::Corner, n_corner)
                .chain(std::iter::repeat_n(ObjectKind::Common, n_common));
            for kind in kinds {
                for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                    let (shape, extents, yaw, category) = match kind {
                        ObjectKind::Corner => sample_corner(&mut rng),
                        _ => {
                            let (e, y) = sample_common(&mut rng);
                            (Shape::Box, e, y, "car")
                        }
                    };
                    let dist = rng.gen_range(knobs.object_distance[0]..=knobs.object_distance[1]);
                    let az = rng.gen_range(-knobs.azimuth_half_width..=knobs.azimuth_half_width);
                    let (sa, ca) = az.to_radians().sin_cos();
                    let obj = ObjectSpec {
                        shape,
                        position: [dist * ca, dist * sa, knobs.ground_height],
                        yaw,
                        extents,
                        kind,
                        category: category.to_string(),
                    };
                    let radius = obj.footprint_radius();
                    if obj.position[1].abs() + radius > FOREGROUND_MAX_LATERAL || radius >= dist - 1.0 {
                        continue;
                    }
                    let half = (radius / dist).asin().to_degrees() + AZIMUTH_MARGIN;
                    let sector = (az - half, az + half);
                    if sectors.iter().any(|s| sector.0 < s.1 && s.0 < sector.1) {
                        continue;
                    }
                    let Some(b) = analytic_box(&obj, &camera) else {
                        continue;
                    };
                    // Fully visible: the clipped envelope must equal the raw one.
                    let raw = obj.hull_vertices().iter().all(|&v| {
                        let p = Point3::new(v[0], v[1], v[2]);
                        project_point(&p, &camera).is_some()
                    });
                    if !raw || !b.inside(w, h) {
                        continue;
                    }
                    sectors.push(sector);
                    objects.push(obj);
                    break;
                }
            }
            for _ in 0..n_bg {
                let length = rng.gen_range(8.0..20.0);
                let width = rng.gen_range(3.0..6.0);
                let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let lateral = STRUCTURE_MIN_LATERAL + 0.5 * width + rng.gen_range(0.0..6.0);
                objects.push(ObjectSpec {
                    shape: Shape::Box,
                    position: [rng.gen_range(5.0..45.0), side * lateral, knobs.ground_height],
                    yaw: 0.0,
                    extents: [length, width, rng.gen_range(4.0..10.0)],
                    kind: ObjectKind::BackgroundStructure,
                    category: "building".to_string(),
                });
            }
            SceneSpec {
                seed: scene_seed,
                ground_height: knobs.ground_height,
                lidar: knobs.lidar,
                objects,
                camera: camera.clone(),
                range_jitter: knobs.range_jitter,
                detection_jitter: knobs.detection_jitter,
            }
        })
        .collect()
}

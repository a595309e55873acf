//! RANSAC ground-plane removal.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Point3, PointCloud};

/// Triples whose cross-product norm falls below this are treated as collinear.
const COLLINEAR_EPS: f64 = 1e-9;

/// Upper bound on skipped (collinear) draws per requested iteration before
/// the fit gives up.
const MAX_SKIPS_PER_ITERATION: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroundError {
    #[error("need at least 3 points to fit a plane, got {0}")]
    TooFewPoints(usize),
    #[error("every sampled point triple was collinear")]
    DegenerateGeometry,
    #[error("no sampled plane was within {max_tilt} degrees of horizontal")]
    NoAdmissiblePlane { max_tilt: f64 },
}

/// Plane `{p : normal . p + offset = 0}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl Plane {
    /// Plane through three points, normal oriented towards +z. `None` when the
    /// points are (numerically) collinear.
    pub fn through(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Option<Plane> {
        let u = sub(b, a);
        let v = sub(c, a);
        let n = cross(u, v);
        let len = norm(n);
        if !(len >= COLLINEAR_EPS) {
            return None;
        }
        let mut normal = [n[0] / len, n[1] / len, n[2] / len];
        let flip = if normal[2] != 0.0 {
            normal[2] < 0.0
        } else if normal[1] != 0.0 {
            normal[1] < 0.0
        } else {
            normal[0] < 0.0
        };
        if flip {
            normal = [-normal[0], -normal[1], -normal[2]];
        }
        let offset = -dot(normal, a);
        Some(Plane { normal, offset })
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal[0] * p.x + self.normal[1] * p.y + self.normal[2] * p.z + self.offset
    }

    pub fn flipped(&self) -> Plane {
        Plane {
            normal: [-self.normal[0], -self.normal[1], -self.normal[2]],
            offset: -self.offset,
        }
    }

    /// Angle between the plane normal and the z axis in degrees, ignoring
    /// orientation.
    pub fn tilt_degrees(&self) -> f64 {
        self.normal[2].abs().min(1.0).acos().to_degrees()
    }

    pub fn is_inlier(&self, p: &Point3, inlier_dist: f64) -> bool {
        self.signed_distance(p).abs() <= inlier_dist
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub iterations: usize,
    pub inlier_dist: f64,
    pub seed: u64,
    /// Hypotheses tilted more than this many degrees from horizontal are
    /// rejected. `None` disables the guard.
    pub max_tilt: Option<f64>,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_dist: 0.2,
            seed: 0,
            max_tilt: Some(30.0),
        }
    }
}

/// One evaluated plane hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub plane: Plane,
    pub inliers: usize,
    /// False when the tilt guard rejected the plane.
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome {
    pub plane: Plane,
    pub inliers: usize,
    /// Every non-degenerate hypothesis in sampling order.
    pub hypotheses: Vec<Hypothesis>,
}

/// Fits the dominant plane by RANSAC over random point triples.
///
/// Each iteration draws three distinct points uniformly. Collinear triples
/// are redrawn without consuming an iteration. The admissible hypothesis with
/// the largest inlier count wins; ties keep the earliest one.
pub fn fit_ground_plane(cloud: &PointCloud, params: &RansacParams) -> Result<Plane, GroundError> {
    fit_ground_plane_logged(cloud, params).map(|o| o.plane)
}

/// [`fit_ground_plane`] that also returns the hypothesis log.
pub fn fit_ground_plane_logged(cloud: &PointCloud, params: &RansacParams) -> Result<RansacOutcome, GroundError> {
    let n = cloud.len();
    if n < 3 {
        return Err(GroundError::TooFewPoints(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let max_skips = params.iterations.max(1) * MAX_SKIPS_PER_ITERATION;
    let mut skips = 0usize;
    let mut done = 0usize;
    let mut hypotheses = Vec::with_capacity(params.iterations);
    let mut best: Option<(Plane, usize)> = None;

    while done < params.iterations {
        let idx = index::sample(&mut rng, n, 3);
        let [a, b, c] = [idx.index(0), idx.index(1), idx.index(2)].map(|i| cloud.points[i].xyz());
        let Some(plane) = Plane::through(a, b, c) else {
            skips += 1;
            if skips >= max_skips {
                break;
            }
            continue;
        };
        done += 1;
        let admissible = params.max_tilt.is_none_or(|max| plane.tilt_degrees() <= max);
        let inliers = count_inliers(cloud, &plane, params.inlier_dist);
        if admissible && best.is_none_or(|(_, count)| inliers > count) {
            best = Some((plane, inliers));
        }
        hypotheses.push(Hypothesis {
            plane,
            inliers,
            admissible,
        });
    }

    match best {
        Some((plane, inliers)) => Ok(RansacOutcome {
            plane,
            inliers,
            hypotheses,
        }),
        None if hypotheses.is_empty() => Err(GroundError::DegenerateGeometry),
        None => Err(GroundError::NoAdmissiblePlane {
            max_tilt: params.max_tilt.unwrap_or(90.0),
        }),
    }
}

pub fn count_inliers(cloud: &PointCloud, plane: &Plane, inlier_dist: f64) -> usize {
    cloud.points.iter().filter(|p| plane.is_inlier(p, inlier_dist)).count()
}

/// Partition of cloud indices into ground and non-ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundSplit {
    pub ground_indices: Vec<usize>,
    pub nonground_indices: Vec<usize>,
    pub plane: Plane,
}

/// Labels every point within `inlier_dist` of the plane as ground.
pub fn split_ground(cloud: &PointCloud, plane: &Plane, inlier_dist: f64) -> GroundSplit {
    let (ground_indices, nonground_indices): (Vec<usize>, Vec<usize>) =
        (0..cloud.len()).partition(|&i| plane.is_inlier(&cloud.points[i], inlier_dist));
    GroundSplit {
        ground_indices,
        nonground_indices,
        plane: *plane,
    }
}

//! Range-image construction and merge-angle clustering.
//!
//! Every non-empty pixel of the range image is compared with its four
//! neighbors. For two returns at ranges `d1 >= d2` separated by the angular
//! step `alpha` between their beams, the merge angle is the angle at the
//! farther point between its beam and the segment to the nearer point:
//!
//! ```text
//! beta = atan2(d2 * sin(alpha), d1 - d2 * cos(alpha))
//! ```
//!
//! Points on one surface give a large `beta`; a depth discontinuity gives a
//! small one. Neighbors merge when `beta > theta_min`, and a breadth-first
//! search floods each connected component with one label.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::PointCloud;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RangeImageError {
    #[error("range image needs rows, cols >= 1 (got {rows}x{cols})")]
    EmptyGrid { rows: usize, cols: usize },
    #[error("grid has {got} cells, expected {expected}")]
    SizeMismatch { got: usize, expected: usize },
    #[error("elevation span [{min}, {max}] is empty")]
    ElevationSpan { min: f64, max: f64 },
    #[error("{0} angles are not strictly monotone")]
    NonMonotoneAngles(&'static str),
    #[error("pixel {0} has a positive range but no source point, or the reverse")]
    Occupancy(usize),
}

/// Polar grid of ranges. Row 0 is the highest elevation; columns run from
/// -180 to +180 degrees of azimuth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeImage {
    rows: usize,
    cols: usize,
    range: Vec<f64>,
    point_index: Vec<Option<usize>>,
    row_angles: Vec<f64>,
    col_angles: Vec<f64>,
}

impl RangeImage {
    /// Assembles an image from raw parts, checking its invariants.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        range: Vec<f64>,
        point_index: Vec<Option<usize>>,
        row_angles: Vec<f64>,
        col_angles: Vec<f64>,
    ) -> Result<Self, RangeImageError> {
        if rows == 0 || cols == 0 {
            return Err(RangeImageError::EmptyGrid { rows, cols });
        }
        let cells = rows * cols;
        for len in [range.len(), point_index.len()] {
            if len != cells {
                return Err(RangeImageError::SizeMismatch {
                    got: len,
                    expected: cells,
                });
            }
        }
        if row_angles.len() != rows {
            return Err(RangeImageError::SizeMismatch {
                got: row_angles.len(),
                expected: rows,
            });
        }
        if col_angles.len() != cols {
            return Err(RangeImageError::SizeMismatch {
                got: col_angles.len(),
                expected: cols,
            });
        }
        if !strictly_monotone(&row_angles) {
            return Err(RangeImageError::NonMonotoneAngles("row"));
        }
        let turn_ok = col_angles.windows(2).all(|w| w[1] > w[0]) && col_angles[cols - 1] - col_angles[0] < 360.0;
        if !turn_ok {
            return Err(RangeImageError::NonMonotoneAngles("column"));
        }
        for (i, (&r, idx)) in range.iter().zip(&point_index).enumerate() {
            let occupied = r > 0.0;
            if occupied != idx.is_some() || !(r >= 0.0) {
                return Err(RangeImageError::Occupancy(i));
            }
        }
        Ok(Self {
            rows,
            cols,
            range,
            point_index,
            row_angles,
            col_angles,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn range(&self, row: usize, col: usize) -> f64 {
        self.range[row * self.cols + col]
    }

    pub fn point_index(&self, row: usize, col: usize) -> Option<usize> {
        self.point_index[row * self.cols + col]
    }

    pub fn is_occupied(&self, row: usize, col: usize) -> bool {
        self.point_index[row * self.cols + col].is_some()
    }

    pub fn ranges(&self) -> &[f64] {
        &self.range
    }

    pub fn row_angles(&self) -> &[f64] {
        &self.row_angles
    }

    pub fn col_angles(&self) -> &[f64] {
        &self.col_angles
    }

    pub fn occupied_count(&self) -> usize {
        self.point_index.iter().filter(|i| i.is_some()).count()
    }

    /// Elevation step between row `r` and row `r + 1`, degrees.
    pub fn row_step(&self, r: usize) -> f64 {
        (self.row_angles[r] - self.row_angles[r + 1]).abs()
    }

    /// Azimuth step between column `c` and the next column, wrapping across
    /// the seam, degrees.
    pub fn col_step(&self, c: usize) -> f64 {
        if c + 1 < self.cols {
            self.col_angles[c + 1] - self.col_angles[c]
        } else {
            self.col_angles[0] + 360.0 - self.col_angles[c]
        }
    }

    /// The 4-neighborhood of a pixel with the angular step to each neighbor.
    /// Columns wrap around; rows do not.
    pub fn neighbors(&self, row: usize, col: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let up = (row > 0).then(|| (row - 1, col, self.row_step(row - 1)));
        let down = (row + 1 < self.rows).then(|| (row + 1, col, self.row_step(row)));
        let horizontal = self.cols > 1;
        let left_col = if col == 0 { self.cols - 1 } else { col - 1 };
        let right_col = if col + 1 == self.cols { 0 } else { col + 1 };
        let left = horizontal.then(|| (row, left_col, self.col_step(left_col)));
        let right = horizontal.then(|| (row, right_col, self.col_step(col)));
        [up, down, left, right].into_iter().flatten()
    }
}

fn strictly_monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0])
}

/// Angular binning of a spinning lidar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeImageSpec {
    pub rows: usize,
    pub cols: usize,
    pub elevation_min: f64,
    pub elevation_max: f64,
}

impl RangeImageSpec {
    pub fn validate(&self) -> Result<(), RangeImageError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(RangeImageError::EmptyGrid {
                rows: self.rows,
                cols: self.cols,
            });
        }
        if !(self.elevation_min < self.elevation_max) {
            return Err(RangeImageError::ElevationSpan {
                min: self.elevation_min,
                max: self.elevation_max,
            });
        }
        Ok(())
    }

    pub fn row_step(&self) -> f64 {
        (self.elevation_max - self.elevation_min) / self.rows as f64
    }

    pub fn col_step(&self) -> f64 {
        360.0 / self.cols as f64
    }

    /// Elevation at the center of row `r`.
    pub fn row_angle(&self, r: usize) -> f64 {
        self.elevation_max - (r as f64 + 0.5) * self.row_step()
    }

    /// Azimuth at the center of column `c`.
    pub fn col_angle(&self, c: usize) -> f64 {
        -180.0 + (c as f64 + 0.5) * self.col_step()
    }

    /// Row for an elevation in degrees; `None` outside the span. The lower
    /// bound belongs to the last row.
    pub fn row_of(&self, elevation: f64) -> Option<usize> {
        if !(elevation >= self.elevation_min && elevation <= self.elevation_max) {
            return None;
        }
        let r = ((self.elevation_max - elevation) / self.row_step()).floor() as usize;
        Some(r.min(self.rows - 1))
    }

    /// Column for an azimuth in degrees within [-180, 180].
    pub fn col_of(&self, azimuth: f64) -> usize {
        let c = ((azimuth + 180.0) / self.col_step()).floor() as isize;
        c.rem_euclid(self.cols as isize) as usize
    }
}

/// Bins every point of the cloud into a range image.
pub fn build_range_image(cloud: &PointCloud, spec: &RangeImageSpec) -> Result<RangeImage, RangeImageError> {
    build_range_image_subset(cloud, 0..cloud.len(), spec)
}

/// Bins the selected points. Pixel back-pointers refer to indices of the
/// full cloud. When two points share a pixel the nearer one is kept; points
/// outside the elevation span or at the sensor origin are dropped.
pub fn build_range_image_subset(
    cloud: &PointCloud,
    indices: impl IntoIterator<Item = usize>,
    spec: &RangeImageSpec,
) -> Result<RangeImage, RangeImageError> {
    spec.validate()?;
    let cells = spec.rows * spec.cols;
    let mut range = vec![0.0; cells];
    let mut point_index = vec![None; cells];
    for i in indices {
        let p = &cloud.points[i];
        let r = p.range();
        if !(r > 0.0) || !r.is_finite() {
            continue;
        }
        let elevation = p.z.atan2(p.x.hypot(p.y)).to_degrees();
        let Some(row) = spec.row_of(elevation) else {
            continue;
        };
        let col = spec.col_of(p.y.atan2(p.x).to_degrees());
        let cell = row * spec.cols + col;
        if point_index[cell].is_none() || r < range[cell] {
            range[cell] = r;
            point_index[cell] = Some(i);
        }
    }
    Ok(RangeImage {
        rows: spec.rows,
        cols: spec.cols,
        range,
        point_index,
        row_angles: (0..spec.rows).map(|r| spec.row_angle(r)).collect(),
        col_angles: (0..spec.cols).map(|c| spec.col_angle(c)).collect(),
    })
}

/// Merge angle in degrees for two returns at ranges `d1`, `d2` whose beams
/// are `alpha` degrees apart. Symmetric in the two ranges.
pub fn merge_angle(d1: f64, d2: f64, alpha: f64) -> f64 {
    let (far, near) = if d1 >= d2 { (d1, d2) } else { (d2, d1) };
    let a = alpha.to_radians();
    (near * a.sin()).atan2(far - near * a.cos()).to_degrees()
}

/// Per-pixel cluster ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabels {
    pub rows: usize,
    pub cols: usize,
    pub label: Vec<Option<u32>>,
    pub num_clusters: u32,
}

impl ClusterLabels {
    pub fn get(&self, row: usize, col: usize) -> Option<u32> {
        self.label[row * self.cols + col]
    }
}

/// Labels connected components of occupied pixels, where two 4-neighbors
/// connect when their merge angle strictly exceeds `theta_min`. Ids follow
/// the row-major order in which components are first reached.
pub fn cluster_range_image(img: &RangeImage, theta_min: f64) -> ClusterLabels {
    let (rows, cols) = (img.rows(), img.cols());
    let mut label: Vec<Option<u32>> = vec![None; rows * cols];
    let mut next = 0u32;
    let mut queue = VecDeque::new();

    for start in 0..rows * cols {
        if label[start].is_some() || img.point_index[start].is_none() {
            continue;
        }
        let id = next;
        next += 1;
        label[start] = Some(id);
        queue.push_back((start / cols, start % cols));
        while let Some((r, c)) = queue.pop_front() {
            let d = img.range(r, c);
            for (nr, nc, alpha) in img.neighbors(r, c) {
                let cell = nr * cols + nc;
                if label[cell].is_some() || img.point_index[cell].is_none() {
                    continue;
                }
                if merge_angle(d, img.range[cell], alpha) > theta_min {
                    label[cell] = Some(id);
                    queue.push_back((nr, nc));
                }
            }
        }
    }

    ClusterLabels {
        rows,
        cols,
        label,
        num_clusters: next,
    }
}

/// A labeled group of range-image pixels and their source points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: u32,
    pub pixel_coords: Vec<(usize, usize)>,
    pub point_indices: Vec<usize>,
    /// Smallest member range, meters.
    pub min_sensor_distance: f64,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }
}

/// Collects clusters with at least `min_points` points whose nearest point
/// lies within `max_distance` meters, in id order.
pub fn extract_clusters(
    labels: &ClusterLabels,
    img: &RangeImage,
    min_points: usize,
    max_distance: f64,
) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = (0..labels.num_clusters)
        .map(|id| Cluster {
            id,
            pixel_coords: Vec::new(),
            point_indices: Vec::new(),
            min_sensor_distance: f64::INFINITY,
        })
        .collect();
    for (cell, l) in labels.label.iter().enumerate() {
        let (Some(id), Some(pi)) = (*l, img.point_index[cell]) else {
            continue;
        };
        let c = &mut clusters[id as usize];
        c.pixel_coords.push((cell / img.cols, cell % img.cols));
        c.point_indices.push(pi);
        c.min_sensor_distance = c.min_sensor_distance.min(img.range[cell]);
    }
    clusters.retain(|c| !c.is_empty() && c.len() >= min_points && c.min_sensor_distance <= max_distance);
    clusters
}

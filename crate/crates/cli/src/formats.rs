//! On-disk formats: KITTI-layout point clouds, JSON calibration, binary PGM
//! segmentation maps and COCO-style box files.

use std::collections::BTreeMap;

use copg_core::eval::{LabeledGt, LabeledPrediction};
use copg_core::proposal::{Proposal, Stage};
use copg_core::{Box2D, CameraModel, Detection, ModelError, Point3, PointCloud, SegMap};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("point file length {0} is not a multiple of 16 bytes")]
    TruncatedPoints(usize),
    #[error("bad PGM: {0}")]
    Pgm(String),
    #[error("unknown image '{0}' referenced by annotation {1}")]
    UnknownImage(u64, u64),
    #[error("unknown category id {0} in annotation {1}")]
    UnknownCategory(u64, u64),
    #[error("duplicate image file name '{0}'")]
    DuplicateImage(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

const POINT_STRIDE: usize = 16;

/// Little-endian `f32` quadruples `(x, y, z, intensity)`.
pub fn encode_points(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_STRIDE);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_points(bytes: &[u8]) -> Result<PointCloud, FormatError> {
    if !bytes.len().is_multiple_of(POINT_STRIDE) {
        return Err(FormatError::TruncatedPoints(bytes.len()));
    }
    let points = bytes
        .chunks_exact(POINT_STRIDE)
        .map(|c| {
            let f = |k: usize| f64::from(f32::from_le_bytes([c[4 * k], c[4 * k + 1], c[4 * k + 2], c[4 * k + 3]]));
            Point3::new(f(0), f(1), f(2)).with_intensity(f(3))
        })
        .collect();
    Ok(PointCloud::new(points))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    #[serde(rename = "P")]
    pub p: [[f64; 4]; 3],
    pub width: u32,
    pub height: u32,
}

impl Calibration {
    pub fn from_camera(cam: &CameraModel) -> Self {
        Self {
            p: *cam.matrix(),
            width: cam.width(),
            height: cam.height(),
        }
    }

    pub fn camera(&self) -> Result<CameraModel, ModelError> {
        CameraModel::new(self.p, self.width, self.height)
    }
}

pub fn encode_pgm(seg: &SegMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", seg.width, seg.height).into_bytes();
    out.extend_from_slice(&seg.labels);
    out
}

/// Parses an 8-bit binary PGM, including `#` comments in the header.
pub fn decode_pgm(bytes: &[u8]) -> Result<SegMap, FormatError> {
    let bad = |m: &str| FormatError::Pgm(m.to_string());
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("magic is not P5"));
    }
    let num = |s: &str| s.parse::<u32>().map_err(|_| bad("non-numeric header field"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit maps are supported"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width as usize * height as usize;
    if bytes.len() < pos + n {
        return Err(bad("raster shorter than width x height"));
    }
    Ok(SegMap::new(width, height, bytes[pos..pos + n].to_vec())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    /// Scene id; the join key across files.
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// `[x, y, w, h]` in pixels.
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CocoFile {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

/// Category assigned to every pipeline proposal.
pub const PROPOSAL_CATEGORY: &str = "corner_case";

/// One scene's worth of category-named boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBoxes {
    pub scene_id: String,
    pub width: u32,
    pub height: u32,
    pub boxes: Vec<NamedBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedBox {
    pub bbox: Box2D,
    pub category: String,
    pub score: Option<f64>,
    pub area: Option<f64>,
    pub cluster_id: Option<u32>,
    pub stage: Option<Stage>,
}

impl NamedBox {
    pub fn plain(bbox: Box2D, category: &str) -> Self {
        Self {
            bbox,
            category: category.to_string(),
            score: None,
            area: None,
            cluster_id: None,
            stage: None,
        }
    }
}

impl From<&Proposal> for NamedBox {
    fn from(p: &Proposal) -> Self {
        Self {
            bbox: p.bbox,
            category: PROPOSAL_CATEGORY.to_string(),
            score: Some(p.score),
            area: None,
            cluster_id: Some(p.source_cluster_id),
            stage: Some(p.stage),
        }
    }
}

impl CocoFile {
    /// Builds a file with image ids in scene order and category ids in name
    /// order, both starting at 1.
    pub fn from_scenes(scenes: &[SceneBoxes], with_area: bool) -> CocoFile {
        let names: BTreeMap<&str, u64> = scenes
            .iter()
            .flat_map(|s| s.boxes.iter().map(|b| b.category.as_str()))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .zip(1..)
            .collect();
        let mut file = CocoFile {
            categories: names
                .iter()
                .map(|(n, &id)| CocoCategory {
                    id,
                    name: n.to_string(),
                })
                .collect(),
            ..CocoFile::default()
        };
        for (image_id, scene) in (1..).zip(scenes) {
            file.images.push(CocoImage {
                id: image_id,
                file_name: scene.scene_id.clone(),
                width: scene.width,
                height: scene.height,
            });
            for b in &scene.boxes {
                let id = file.annotations.len() as u64 + 1;
                file.annotations.push(CocoAnnotation {
                    id,
                    image_id,
                    category_id: names[b.category.as_str()],
                    bbox: b.bbox.to_array(),
                    score: b.score,
                    area: b.area.or_else(|| with_area.then(|| b.bbox.area())),
                    cluster_id: b.cluster_id,
                    stage: b.stage,
                });
            }
        }
        file
    }

    /// Groups annotations by image, in image order. Images without
    /// annotations are kept.
    pub fn scenes(&self) -> Result<Vec<SceneBoxes>, FormatError> {
        let categories: BTreeMap<u64, &str> = self.categories.iter().map(|c| (c.id, c.name.as_str())).collect();
        let mut index = BTreeMap::new();
        let mut out: Vec<SceneBoxes> = Vec::with_capacity(self.images.len());
        for img in &self.images {
            if out.iter().any(|s| s.scene_id == img.file_name) {
                return Err(FormatError::DuplicateImage(img.file_name.clone()));
            }
            index.insert(img.id, out.len());
            out.push(SceneBoxes {
                scene_id: img.file_name.clone(),
                width: img.width,
                height: img.height,
                boxes: Vec::new(),
            });
        }
        for a in &self.annotations {
            let &slot = index
                .get(&a.image_id)
                .ok_or(FormatError::UnknownImage(a.image_id, a.id))?;
            let &category = categories
                .get(&a.category_id)
                .ok_or(FormatError::UnknownCategory(a.category_id, a.id))?;
            let [x, y, w, h] = a.bbox;
            out[slot].boxes.push(NamedBox {
                bbox: Box2D::new(x, y, w, h)?,
                category: category.to_string(),
                score: a.score,
                area: a.area,
                cluster_id: a.cluster_id,
                stage: a.stage,
            });
        }
        Ok(out)
    }
}

/// Detections file for one scene.
pub fn detections_file(scene_id: &str, cam: &CameraModel, dets: &[Detection]) -> CocoFile {
    let boxes = dets
        .iter()
        .map(|d| NamedBox {
            score: Some(d.score),
            ..NamedBox::plain(d.bbox, &d.category)
        })
        .collect();
    CocoFile::from_scenes(
        &[SceneBoxes {
            scene_id: scene_id.to_string(),
            width: cam.width(),
            height: cam.height(),
            boxes,
        }],
        false,
    )
}

/// All detections in a file, ignoring image association. Missing scores
/// count as 1.0.
pub fn read_detections(file: &CocoFile) -> Result<Vec<Detection>, FormatError> {
    Ok(file
        .scenes()?
        .into_iter()
        .flat_map(|s| s.boxes)
        .map(|b| Detection {
            bbox: b.bbox,
            category: b.category,
            score: b.score.unwrap_or(1.0),
        })
        .collect())
}

/// Predictions for evaluation. Annotations tagged with an earlier stage are
/// skipped; untagged ones count as final. Missing scores count as 1.0.
pub fn labeled_predictions(file: &CocoFile) -> Result<Vec<LabeledPrediction>, FormatError> {
    let mut out = Vec::new();
    for scene in file.scenes()? {
        for b in scene.boxes {
            if matches!(b.stage, None | Some(Stage::Final)) {
                out.push(LabeledPrediction {
                    scene_id: scene.scene_id.clone(),
                    bbox: b.bbox,
                    category: b.category,
                    score: b.score.unwrap_or(1.0),
                });
            }
        }
    }
    Ok(out)
}

/// Ground truth for evaluation; `area` falls back to the box area.
pub fn labeled_ground_truth(file: &CocoFile) -> Result<Vec<LabeledGt>, FormatError> {
    Ok(file
        .scenes()?
        .into_iter()
        .flat_map(|scene| {
            let id = scene.scene_id;
            scene.boxes.into_iter().map(move |b| LabeledGt {
                scene_id: id.clone(),
                area: b.area.unwrap_or_else(|| b.bbox.area()),
                bbox: b.bbox,
                category: b.category,
            })
        })
        .collect())
}

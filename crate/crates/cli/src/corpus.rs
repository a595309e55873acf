//! Corpus directory layout.
//!
//! ```text
//! <corpus>/
//!   ground_truth.json        all scenes' corner-case boxes (COCO)
//!   class_map.json           category name -> class group
//!   <scene_id>/
//!     points.bin             required
//!     calib.json             required
//!     seg.pgm                optional; background removal is skipped without it
//!     detections.json        optional; suppression is skipped without it
//!     gt.json                optional; this scene's ground truth
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use copg_core::eval::ClassMap;
use copg_core::proposal::SceneBundle;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::formats::{decode_pgm, decode_points, read_detections, Calibration, CocoFile};

pub const POINTS_FILE: &str = "points.bin";
pub const CALIB_FILE: &str = "calib.json";
pub const SEG_FILE: &str = "seg.pgm";
pub const DETECTIONS_FILE: &str = "detections.json";
pub const SCENE_GT_FILE: &str = "gt.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const CLASS_MAP_FILE: &str = "class_map.json";

/// Scene ids (subdirectories holding a point file), sorted.
pub fn list_scenes(corpus: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(corpus).with_context(|| format!("reading corpus {}", corpus.display()))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry?;
        if entry.path().join(POINTS_FILE).is_file() {
            match entry.file_name().into_string() {
                Ok(name) => ids.push(name),
                Err(name) => bail!("scene directory name {name:?} is not UTF-8"),
            }
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn scene_dir(corpus: &Path, scene_id: &str) -> PathBuf {
    corpus.join(scene_id)
}

pub fn load_scene(corpus: &Path, scene_id: &str) -> Result<SceneBundle> {
    let dir = scene_dir(corpus, scene_id);
    let points_path = dir.join(POINTS_FILE);
    let bytes = fs::read(&points_path).with_context(|| format!("reading {}", points_path.display()))?;
    let cloud = decode_points(&bytes).with_context(|| format!("decoding {}", points_path.display()))?;
    let calib: Calibration = read_json(&dir.join(CALIB_FILE))?;
    let cam = calib
        .camera()
        .with_context(|| format!("calibration {}", dir.join(CALIB_FILE).display()))?;

    let seg_path = dir.join(SEG_FILE);
    let seg = if seg_path.is_file() {
        let bytes = fs::read(&seg_path).with_context(|| format!("reading {}", seg_path.display()))?;
        Some(decode_pgm(&bytes).with_context(|| format!("decoding {}", seg_path.display()))?)
    } else {
        None
    };
    let det_path = dir.join(DETECTIONS_FILE);
    let detections = if det_path.is_file() {
        let file: CocoFile = read_json(&det_path)?;
        Some(read_detections(&file).with_context(|| format!("decoding {}", det_path.display()))?)
    } else {
        None
    };
    Ok(SceneBundle {
        scene_id: scene_id.to_string(),
        cloud,
        cam,
        seg,
        detections,
    })
}

pub fn load_class_map(path: &Path) -> Result<ClassMap> {
    read_json(path)
}

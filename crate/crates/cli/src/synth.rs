//! Writes synthetic scenes in the standard corpus layout.
//!
//! ```toml
//! n = 50
//! seed = 7
//!
//! [knobs]                  # optional; see CorpusKnobs
//! corner_per_scene = [1, 3]
//! detection_jitter = 0.0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use clap::Args;
use copg_core::eval::{ClassGroup, ClassMap};
use copg_core::synth::{generate_corpus, generate_scene, CorpusKnobs, ObjectKind, SceneSpec, SyntheticScene};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    scene_dir, write_json, CALIB_FILE, CLASS_MAP_FILE, DETECTIONS_FILE, GROUND_TRUTH_FILE, POINTS_FILE, SCENE_GT_FILE,
    SEG_FILE,
};
use crate::formats::{
    detections_file, encode_pgm, encode_points, Calibration, CocoFile, NamedBox, SceneBoxes, PROPOSAL_CATEGORY,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub knobs: CorpusKnobs,
}

/// The default corpus: 50 scenes, seed 7, default knobs.
impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n: 50,
            seed: 7,
            knobs: CorpusKnobs::default(),
        }
    }
}

impl CorpusSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: CorpusSpec = toml::from_str(text)?;
        ensure!(spec.n >= 1, "corpus needs at least one scene");
        Ok(spec)
    }

    pub fn scene_specs(&self) -> Vec<SceneSpec> {
        generate_corpus(self.n, self.seed, &self.knobs)
    }
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:04}")
}

/// Class map matching the categories written by [`write_corpus`].
pub fn synthetic_class_map() -> ClassMap {
    let map = |pairs: &[(&str, ClassGroup)]| pairs.iter().map(|&(k, g)| (k.to_string(), g)).collect();
    ClassMap {
        predictions: map(&[(PROPOSAL_CATEGORY, ClassGroup::Novel), ("car", ClassGroup::Vehicle)]),
        ground_truth: map(&[
            ("barrel", ClassGroup::Novel),
            ("obstacle", ClassGroup::Novel),
            ("car", ClassGroup::Vehicle),
            ("building", ClassGroup::Ignore),
        ]),
    }
}

/// Corner-case boxes of one scene; these are the evaluation ground truth.
pub fn corner_boxes(scene_id: &str, scene: &SyntheticScene) -> SceneBoxes {
    SceneBoxes {
        scene_id: scene_id.to_string(),
        width: scene.bundle.cam.width(),
        height: scene.bundle.cam.height(),
        boxes: scene
            .ground_truth_boxes(ObjectKind::Corner)
            .map(|(o, b)| NamedBox::plain(b, &o.category))
            .collect(),
    }
}

fn write_scene(dir: &Path, scene: &SyntheticScene, gt: &SceneBoxes) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let b = &scene.bundle;
    let write = |name: &str, bytes: Vec<u8>| {
        let p = dir.join(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))
    };
    write(POINTS_FILE, encode_points(&b.cloud))?;
    write_json(&dir.join(CALIB_FILE), &Calibration::from_camera(&b.cam))?;
    if let Some(seg) = &b.seg {
        write(SEG_FILE, encode_pgm(seg))?;
    }
    let dets = b.detections.as_deref().unwrap_or_default();
    write_json(&dir.join(DETECTIONS_FILE), &detections_file(&b.scene_id, &b.cam, dets))?;
    write_json(
        &dir.join(SCENE_GT_FILE),
        &CocoFile::from_scenes(std::slice::from_ref(gt), true),
    )
}

/// Generates every scene in parallel and writes them in order, plus the
/// corpus-level ground truth and class map.
pub fn write_corpus(specs: &[SceneSpec], out: &Path) -> Result<Vec<SyntheticScene>> {
    let scenes = specs
        .par_iter()
        .enumerate()
        .map(|(i, s)| generate_scene(s, &scene_id(i)).with_context(|| format!("scene {}", scene_id(i))))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut all_gt = Vec::with_capacity(scenes.len());
    for scene in &scenes {
        let id = &scene.bundle.scene_id;
        let gt = corner_boxes(id, scene);
        write_scene(&scene_dir(out, id), scene, &gt)?;
        all_gt.push(gt);
    }
    write_json(&out.join(GROUND_TRUTH_FILE), &CocoFile::from_scenes(&all_gt, true))?;
    write_json(&out.join(CLASS_MAP_FILE), &synthetic_class_map())?;
    Ok(scenes)
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// TOML corpus spec.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth(args: &SynthArgs) -> Result<Vec<SyntheticScene>> {
    let text = fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let spec = CorpusSpec::parse(&text).with_context(|| format!("parsing {}", args.spec.display()))?;
    write_corpus(&spec.scene_specs(), &args.out)
}

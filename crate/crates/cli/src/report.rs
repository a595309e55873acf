//! Proposal overlays as binary PPM images and a per-scene metrics CSV.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use copg_core::proposal::Stage;
use copg_core::{Box2D, SegMap};

use crate::corpus::SEG_FILE;
use crate::evaluate::load_proposal_files;
use crate::formats::{decode_pgm, SceneBoxes};

pub const METRICS_FILE: &str = "metrics.csv";

/// Outline color per stage. Untagged proposals are drawn as final.
pub fn stage_color(stage: Option<Stage>) -> [u8; 3] {
    match stage {
        Some(Stage::Initial) => [255, 64, 64],
        Some(Stage::Intermediate) => [255, 200, 0],
        Some(Stage::Final) | None => [0, 220, 80],
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pixmap {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
}

impl Pixmap {
    pub fn blank(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            rgb: vec![0; width as usize * height as usize * 3],
        }
    }

    /// Segmentation ids as gray levels, so stage colors stay distinct.
    pub fn from_seg(seg: &SegMap) -> Self {
        let rgb = seg
            .labels
            .iter()
            .flat_map(|&l| {
                let g = 20 + (u32::from(l.reverse_bits()) * 180 / 255) as u8;
                [g, g, g]
            })
            .collect();
        Self {
            width: seg.width,
            height: seg.height,
            rgb,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    fn put(&mut self, x: u32, y: u32, c: [u8; 3]) {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    /// One-pixel outline over the pixels the box touches, clipped.
    pub fn draw_rect(&mut self, b: &Box2D, color: [u8; 3]) {
        if self.width == 0 || self.height == 0 {
            return;
        }
        let clampx = |v: f64| (v.max(0.0) as u32).min(self.width - 1);
        let clampy = |v: f64| (v.max(0.0) as u32).min(self.height - 1);
        if b.x >= self.width as f64 || b.y >= self.height as f64 || b.x2() <= 0.0 || b.y2() <= 0.0 {
            return;
        }
        let (x0, y0) = (clampx(b.x.floor()), clampy(b.y.floor()));
        let (x1, y1) = (clampx(b.x2().ceil() - 1.0), clampy(b.y2().ceil() - 1.0));
        let (x1, y1) = (x1.max(x0), y1.max(y0));
        for x in x0..=x1 {
            self.put(x, y0, color);
            self.put(x, y1, color);
        }
        for y in y0..=y1 {
            self.put(x0, y, color);
            self.put(x1, y, color);
        }
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }
}

/// Earlier stages are drawn first so final outlines stay on top.
pub fn render_overlay(scene: &SceneBoxes, seg: Option<&SegMap>) -> Pixmap {
    let mut img = match seg {
        Some(s) if s.width == scene.width && s.height == scene.height => Pixmap::from_seg(s),
        _ => Pixmap::blank(scene.width, scene.height),
    };
    let mut boxes: Vec<_> = scene.boxes.iter().collect();
    boxes.sort_by_key(|b| b.stage.unwrap_or(Stage::Final));
    for b in boxes {
        img.draw_rect(&b.bbox, stage_color(b.stage));
    }
    img
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Proposals file or directory.
    #[arg(long)]
    pub proposals: PathBuf,
    /// Corpus directory; its seg maps become the overlay background.
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn metrics_csv(scenes: &[SceneBoxes]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scene_id", "initial", "intermediate", "final", "mean_final_score"])?;
    for s in scenes {
        let count = |st: Stage| s.boxes.iter().filter(|b| b.stage.unwrap_or(Stage::Final) == st).count();
        let finals: Vec<f64> = s
            .boxes
            .iter()
            .filter(|b| b.stage.unwrap_or(Stage::Final) == Stage::Final)
            .filter_map(|b| b.score)
            .collect();
        let mean = if finals.is_empty() {
            String::new()
        } else {
            (finals.iter().sum::<f64>() / finals.len() as f64).to_string()
        };
        w.write_record([
            s.scene_id.clone(),
            count(Stage::Initial).to_string(),
            count(Stage::Intermediate).to_string(),
            count(Stage::Final).to_string(),
            mean,
        ])?;
    }
    Ok(w.into_inner()?)
}

fn load_seg(corpus: &Path, scene_id: &str) -> Result<Option<SegMap>> {
    let p = corpus.join(scene_id).join(SEG_FILE);
    if !p.is_file() {
        return Ok(None);
    }
    let bytes = fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
    Ok(Some(
        decode_pgm(&bytes).with_context(|| format!("decoding {}", p.display()))?,
    ))
}

/// Writes `<scene>.ppm` per scene and `metrics.csv`; returns the scene count.
pub fn report(args: &ReportArgs) -> Result<usize> {
    let scenes = load_proposal_files(&args.proposals)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for s in &scenes {
        let seg = match &args.scenes {
            Some(c) => load_seg(c, &s.scene_id)?,
            None => None,
        };
        let path = args.out.join(format!("{}.ppm", s.scene_id));
        fs::write(&path, render_overlay(s, seg.as_ref()).encode_ppm())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    fs::write(args.out.join(METRICS_FILE), metrics_csv(&scenes)?)?;
    Ok(scenes.len())
}

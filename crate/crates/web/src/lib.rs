//! Browser bindings over the proposal pipeline.
//!
//! A [`Demo`] holds one synthetic scene and the latest pipeline run. The
//! page renders its range image and camera overlay as RGBA buffers, plots
//! [`merge_angle_curve`] and charts [`Demo::sweep`].

use copg_core::ground::{fit_ground_plane, split_ground};
use copg_core::proposal::{ransac_params, run_pipeline, PipelineOutput, Stage};
use copg_core::range::merge_angle;
use copg_core::synth::{generate_corpus, generate_scene, CorpusKnobs, SyntheticScene};
use copg_core::{Box2D, PipelineConfig};
use wasm_bindgen::prelude::*;

const EMPTY: [u8; 4] = [12, 12, 16, 255];
const GROUND: [u8; 4] = [70, 60, 50, 255];

fn stage_color(stage: Stage) -> [u8; 4] {
    match stage {
        Stage::Initial => [255, 64, 64, 255],
        Stage::Intermediate => [255, 200, 0, 255],
        Stage::Final => [0, 220, 80, 255],
    }
}

/// Distinct hue per cluster id.
fn cluster_color(id: u32) -> [u8; 4] {
    let h = (id as f64 * 0.618_033_988_75).fract() * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let c = |v: f64| (60.0 + 195.0 * v) as u8;
    [c(r), c(g), c(b), 255]
}

/// Gray by range, near is bright.
fn range_gray(d: f64, max: f64) -> [u8; 4] {
    let g = (40.0 + 120.0 * (1.0 - (d / max).clamp(0.0, 1.0))) as u8;
    [g, g, g, 255]
}

struct Rgba {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Rgba {
    fn filled(width: u32, height: u32, c: [u8; 4]) -> Self {
        Self {
            width,
            height,
            data: c.repeat(width as usize * height as usize),
        }
    }

    fn put(&mut self, x: u32, y: u32, c: [u8; 4]) {
        if x < self.width && y < self.height {
            let i = 4 * (y as usize * self.width as usize + x as usize);
            self.data[i..i + 4].copy_from_slice(&c);
        }
    }

    fn outline(&mut self, b: &Box2D, c: [u8; 4]) {
        let Some(b) = b.clip(f64::from(self.width), f64::from(self.height)) else {
            return;
        };
        let (x0, y0) = (b.x.floor() as u32, b.y.floor() as u32);
        let x1 = ((b.x2().ceil() as u32).max(x0 + 1) - 1).min(self.width - 1);
        let y1 = ((b.y2().ceil() as u32).max(y0 + 1) - 1).min(self.height - 1);
        for x in x0..=x1 {
            self.put(x, y0, c);
            self.put(x, y1, c);
        }
        for y in y0..=y1 {
            self.put(x0, y, c);
            self.put(x1, y, c);
        }
    }
}

/// β over `steps` evenly spaced angular gaps in `(0, alpha_max]` degrees.
#[wasm_bindgen]
pub fn merge_angle_curve(d1: f64, d2: f64, alpha_max: f64, steps: u32) -> Vec<f64> {
    (1..=steps)
        .map(|i| merge_angle(d1, d2, alpha_max * f64::from(i) / f64::from(steps)))
        .collect()
}

#[wasm_bindgen]
pub struct Demo {
    scene: SyntheticScene,
    cfg: PipelineConfig,
    output: PipelineOutput,
    ground: Vec<usize>,
}

#[wasm_bindgen]
impl Demo {
    /// One default-knob scene drawn from `seed`.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Demo {
        let spec = generate_corpus(1, u64::from(seed), &CorpusKnobs::default()).remove(0);
        let scene = generate_scene(&spec, &format!("seed_{seed}")).expect("generated specs are valid");
        let cfg = PipelineConfig::default();
        let ground = fit_ground_plane(&scene.bundle.cloud, &ransac_params(&cfg))
            .map(|p| split_ground(&scene.bundle.cloud, &p, cfg.ransac_inlier_dist).ground_indices)
            .unwrap_or_default();
        let output = run_pipeline(&scene.bundle, &cfg).expect("default config is valid");
        Demo {
            scene,
            cfg,
            output,
            ground,
        }
    }

    /// Reruns the pipeline; returns false and keeps the last run if the
    /// values are invalid.
    pub fn configure(
        &mut self,
        theta_min: f64,
        min_cluster_points: u32,
        bg_ratio_max: f64,
        suppression_iou_max: f64,
    ) -> bool {
        let cfg = PipelineConfig {
            theta_min,
            min_cluster_points: min_cluster_points as usize,
            bg_ratio_max,
            suppression_iou_max,
            ..self.cfg.clone()
        };
        match run_pipeline(&self.scene.bundle, &cfg) {
            Ok(out) => {
                self.cfg = cfg;
                self.output = out;
                true
            }
            Err(_) => false,
        }
    }

    /// Proposal counts: initial, intermediate, final.
    pub fn stage_counts(&self) -> Vec<u32> {
        self.output.stage_counts().iter().map(|&n| n as u32).collect()
    }

    pub fn num_points(&self) -> u32 {
        self.scene.bundle.cloud.len() as u32
    }

    pub fn num_clusters(&self) -> u32 {
        self.output.num_clusters as u32
    }

    pub fn range_width(&self) -> u32 {
        self.cfg.range_cols as u32
    }

    pub fn range_height(&self) -> u32 {
        self.cfg.range_rows as u32
    }

    /// Range image, row 0 on top: kept clusters in color, ground brown,
    /// other returns gray.
    pub fn range_rgba(&self) -> Vec<u8> {
        let (w, h) = (self.range_width(), self.range_height());
        let mut img = Rgba::filled(w, h, EMPTY);
        let cloud = &self.scene.bundle.cloud;
        for (i, &(r, c)) in self.scene.beams.iter().enumerate() {
            let p = &cloud.points[i];
            let d = (p.x * p.x + p.y * p.y + p.z * p.z).sqrt();
            img.put(c as u32, (h as usize - 1 - r) as u32, range_gray(d, 60.0));
        }
        for &i in &self.ground {
            let (r, c) = self.scene.beams[i];
            img.put(c as u32, (h as usize - 1 - r) as u32, GROUND);
        }
        for cl in &self.output.clusters {
            for &(r, c) in &cl.pixel_coords {
                img.put(c as u32, (h as usize - 1 - r) as u32, cluster_color(cl.id));
            }
        }
        img.data
    }

    pub fn camera_width(&self) -> u32 {
        self.scene.bundle.cam.width()
    }

    pub fn camera_height(&self) -> u32 {
        self.scene.bundle.cam.height()
    }

    /// Segmentation map in gray with proposal outlines per stage, final on top.
    pub fn camera_rgba(&self) -> Vec<u8> {
        let (w, h) = (self.camera_width(), self.camera_height());
        let mut img = Rgba::filled(w, h, EMPTY);
        if let Some(seg) = &self.scene.bundle.seg {
            for (i, &l) in seg.labels.iter().enumerate() {
                let g = 20 + (u32::from(l.reverse_bits()) * 180 / 255) as u8;
                img.data[4 * i..4 * i + 4].copy_from_slice(&[g, g, g, 255]);
            }
        }
        for p in self.output.all_stages() {
            img.outline(&p.bbox, stage_color(p.stage));
        }
        img.data
    }

    /// Final proposal count per value of `parameter` (`theta_min`,
    /// `min_cluster_points`, `max_cluster_distance`, `bg_ratio_max` or
    /// `suppression_iou_max`), other settings as currently configured.
    /// Unknown parameters and invalid values give an empty result.
    pub fn sweep(&self, parameter: &str, values: Vec<f64>) -> Vec<u32> {
        let mut counts = Vec::with_capacity(values.len());
        for v in values {
            let mut cfg = self.cfg.clone();
            match parameter {
                "theta_min" => cfg.theta_min = v,
                "min_cluster_points" if v >= 0.0 && v.fract() == 0.0 => cfg.min_cluster_points = v as usize,
                "max_cluster_distance" => cfg.max_cluster_distance = v,
                "bg_ratio_max" => cfg.bg_ratio_max = v,
                "suppression_iou_max" => cfg.suppression_iou_max = v,
                _ => return Vec::new(),
            }
            match run_pipeline(&self.scene.bundle, &cfg) {
                Ok(out) => counts.push(out.proposals.proposals.len() as u32),
                Err(_) => return Vec::new(),
            }
        }
        counts
    }
}

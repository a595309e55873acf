//! TOML pipeline configuration and command-line overrides.
//!
//! ```toml
//! seed = 0
//!
//! [ground]
//! ransac_iterations = 200
//! inlier_dist = 0.2
//! max_tilt = 30.0        # degrees; 90 accepts any plane
//!
//! [range_image]
//! rows = 64
//! cols = 2048
//! elevation_min = -24.8
//! elevation_max = 2.0
//!
//! [clustering]
//! theta_min = 8.0
//! min_cluster_points = 10
//! max_cluster_distance = 50.0
//!
//! [filters]
//! bg_ratio_max = 0.45
//! suppression_iou_max = 0.25
//! background_class_ids = [0, 1, 2, 3, 4, 5, 8, 9, 10]
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use copg_core::PipelineConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundSection {
    pub ransac_iterations: usize,
    pub inlier_dist: f64,
    pub max_tilt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangeImageSection {
    pub rows: usize,
    pub cols: usize,
    pub elevation_min: f64,
    pub elevation_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSection {
    pub theta_min: f64,
    pub min_cluster_points: usize,
    pub max_cluster_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiltersSection {
    pub bg_ratio_max: f64,
    pub suppression_iou_max: f64,
    pub background_class_ids: BTreeSet<u8>,
}

/// File form of [`PipelineConfig`]. Missing keys take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: u64,
    pub ground: GroundSection,
    pub range_image: RangeImageSection,
    pub clustering: ClusteringSection,
    pub filters: FiltersSection,
}

impl From<&PipelineConfig> for ConfigFile {
    fn from(c: &PipelineConfig) -> Self {
        ConfigFile {
            seed: c.seed,
            ground: GroundSection {
                ransac_iterations: c.ransac_iterations,
                inlier_dist: c.ransac_inlier_dist,
                max_tilt: c.ransac_max_tilt.unwrap_or(90.0),
            },
            range_image: RangeImageSection {
                rows: c.range_rows,
                cols: c.range_cols,
                elevation_min: c.elevation_min,
                elevation_max: c.elevation_max,
            },
            clustering: ClusteringSection {
                theta_min: c.theta_min,
                min_cluster_points: c.min_cluster_points,
                max_cluster_distance: c.max_cluster_distance,
            },
            filters: FiltersSection {
                bg_ratio_max: c.bg_ratio_max,
                suppression_iou_max: c.suppression_iou_max,
                background_class_ids: c.background_class_ids.clone(),
            },
        }
    }
}

impl From<ConfigFile> for PipelineConfig {
    fn from(f: ConfigFile) -> Self {
        PipelineConfig {
            theta_min: f.clustering.theta_min,
            min_cluster_points: f.clustering.min_cluster_points,
            max_cluster_distance: f.clustering.max_cluster_distance,
            bg_ratio_max: f.filters.bg_ratio_max,
            suppression_iou_max: f.filters.suppression_iou_max,
            ransac_iterations: f.ground.ransac_iterations,
            ransac_inlier_dist: f.ground.inlier_dist,
            ransac_max_tilt: (f.ground.max_tilt < 90.0).then_some(f.ground.max_tilt),
            range_rows: f.range_image.rows,
            range_cols: f.range_image.cols,
            elevation_min: f.range_image.elevation_min,
            elevation_max: f.range_image.elevation_max,
            background_class_ids: f.filters.background_class_ids,
            seed: f.seed,
        }
    }
}

macro_rules! section_defaults {
    ($($ty:ident => $field:ident),*) => {$(
        impl Default for $ty {
            fn default() -> Self {
                ConfigFile::from(&PipelineConfig::default()).$field
            }
        }
    )*};
}
section_defaults!(GroundSection => ground, RangeImageSection => range_image, ClusteringSection => clustering, FiltersSection => filters);

impl Default for ConfigFile {
    fn default() -> Self {
        let d = PipelineConfig::default();
        ConfigFile {
            seed: d.seed,
            ground: GroundSection::default(),
            range_image: RangeImageSection::default(),
            clustering: ClusteringSection::default(),
            filters: FiltersSection::default(),
        }
    }
}

pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let file: ConfigFile = toml::from_str(text)?;
    let cfg = PipelineConfig::from(file);
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub fn to_toml(cfg: &PipelineConfig) -> String {
    toml::to_string(&ConfigFile::from(cfg)).expect("config serializes")
}

/// Command-line flags that override config file values.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigOverrides {
    /// Merge-angle threshold, degrees.
    #[arg(long)]
    pub theta_min: Option<f64>,
    #[arg(long)]
    pub min_cluster_points: Option<usize>,
    /// Meters.
    #[arg(long)]
    pub max_cluster_distance: Option<f64>,
    #[arg(long)]
    pub bg_ratio_max: Option<f64>,
    #[arg(long)]
    pub suppression_iou_max: Option<f64>,
    #[arg(long)]
    pub ransac_iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f.clone() { cfg.$f = v; } )*};
        }
        set!(
            theta_min,
            min_cluster_points,
            max_cluster_distance,
            bg_ratio_max,
            suppression_iou_max,
            ransac_iterations,
            seed
        );
    }
}

/// Config file (or defaults) with overrides applied, validated.
pub fn effective_config(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => PipelineConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

use std::collections::BTreeMap;

use copg_core::PipelineConfig;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Soft per-scene budget for ground removal, clustering and projection.
pub const CORE_TARGET_MS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub ground_points: usize,
    pub clusters: usize,
    pub initial: usize,
    pub intermediate: usize,
    #[serde(rename = "final")]
    pub final_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub scene_id: String,
    pub status: SceneStatus,
    /// Steps run as identity passes for lack of input.
    pub skipped: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<StageCounts>,
    /// Milliseconds per step; empty when timing is omitted.
    #[serde(default)]
    pub timing_ms: BTreeMap<String, f64>,
}

impl SceneEntry {
    /// Ground removal + clustering + projection time.
    pub fn core_ms(&self) -> Option<f64> {
        let keys = ["ground_removal", "clustering", "projection"];
        keys.iter()
            .map(|k| self.timing_ms.get(*k).copied())
            .sum::<Option<f64>>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub target_ms: f64,
    pub mean_core_ms: f64,
    pub max_core_ms: f64,
    pub scenes_over_target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub corpus: String,
    pub config: PipelineConfig,
    pub scenes: Vec<SceneEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput: Option<Throughput>,
}

impl RunManifest {
    pub fn new(corpus: String, config: PipelineConfig, scenes: Vec<SceneEntry>) -> Self {
        let core: Vec<f64> = scenes.iter().filter_map(SceneEntry::core_ms).collect();
        let throughput = (!core.is_empty()).then(|| Throughput {
            target_ms: CORE_TARGET_MS,
            mean_core_ms: core.iter().sum::<f64>() / core.len() as f64,
            max_core_ms: core.iter().copied().fold(0.0, f64::max),
            scenes_over_target: core.iter().filter(|&&t| t > CORE_TARGET_MS).count(),
        });
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            corpus,
            config,
            scenes,
            throughput,
        }
    }

    pub fn num_errors(&self) -> usize {
        self.scenes.iter().filter(|s| s.status == SceneStatus::Error).count()
    }
}

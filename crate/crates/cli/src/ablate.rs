//! One-parameter-at-a-time sweeps.
//!
//! ```toml
//! parameter = "bg_ratio_max"
//! values = [0.15, 0.30, 0.45, 0.60, 0.75]
//! view = "CORNER"                  # optional
//! gt = "ground_truth.json"         # optional, relative to the corpus
//! class_map = "class_map.json"     # optional, relative to the corpus
//!
//! [base]                           # same layout as the pipeline config
//! seed = 0
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use copg_core::eval::{ClassMap, LabeledGt, LabeledPrediction, View};
use copg_core::proposal::{run_pipeline, SceneBundle};
use copg_core::PipelineConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ConfigFile;
use crate::corpus::{list_scenes, load_class_map, load_scene, write_json, CLASS_MAP_FILE, GROUND_TRUTH_FILE};
use crate::evaluate::{evaluate_views, format_table, load_ground_truth};
use crate::formats::PROPOSAL_CATEGORY;
use crate::propose::thread_pool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationParameter {
    ThetaMin,
    MinClusterPoints,
    MaxClusterDistance,
    BgRatioMax,
    SuppressionIouMax,
}

impl fmt::Display for AblationParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationParameter::ThetaMin => "theta_min",
            AblationParameter::MinClusterPoints => "min_cluster_points",
            AblationParameter::MaxClusterDistance => "max_cluster_distance",
            AblationParameter::BgRatioMax => "bg_ratio_max",
            AblationParameter::SuppressionIouMax => "suppression_iou_max",
        })
    }
}

impl AblationParameter {
    pub fn apply(self, cfg: &mut PipelineConfig, value: f64) -> Result<()> {
        match self {
            AblationParameter::ThetaMin => cfg.theta_min = value,
            AblationParameter::MaxClusterDistance => cfg.max_cluster_distance = value,
            AblationParameter::BgRatioMax => cfg.bg_ratio_max = value,
            AblationParameter::SuppressionIouMax => cfg.suppression_iou_max = value,
            AblationParameter::MinClusterPoints => {
                ensure!(
                    value >= 0.0 && value.fract() == 0.0,
                    "min_cluster_points value {value} is not a count"
                );
                cfg.min_cluster_points = value as usize;
            }
        }
        cfg.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSpec {
    pub parameter: AblationParameter,
    pub values: Vec<f64>,
    #[serde(default)]
    pub base: ConfigFile,
    #[serde(default = "default_view")]
    pub view: View,
    #[serde(default)]
    pub gt: Option<PathBuf>,
    #[serde(default)]
    pub class_map: Option<PathBuf>,
}

fn default_view() -> View {
    View::Corner
}

impl AblationSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: AblationSpec = toml::from_str(text)?;
        ensure!(!spec.values.is_empty(), "ablation needs at least one value");
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: f64,
    #[serde(rename = "AP")]
    pub ap: Option<f64>,
    #[serde(rename = "AR")]
    pub ar: Option<f64>,
    /// Final proposals over the corpus.
    pub num_proposals: usize,
    /// Scenes with at least one final proposal.
    pub num_scenes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub parameter: AblationParameter,
    pub view: View,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn header(&self) -> [String; 5] {
        [
            self.parameter.to_string(),
            "AP".into(),
            "AR".into(),
            "#Proposals".into(),
            "#Scenes".into(),
        ]
    }

    fn cells(&self) -> Vec<Vec<String>> {
        let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.1}", 100.0 * v));
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.value.to_string(),
                    pct(r.ap),
                    pct(r.ar),
                    r.num_proposals.to_string(),
                    r.num_scenes.to_string(),
                ]
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let header = self.header();
        format_table(&header.each_ref().map(String::as_str), &self.cells())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
            w.write_record([
                r.value.to_string(),
                opt(r.ap),
                opt(r.ar),
                r.num_proposals.to_string(),
                r.num_scenes.to_string(),
            ])?;
        }
        Ok(w.into_inner()?)
    }
}

/// Runs the pipeline and evaluation once per value, rows in spec order.
pub fn run_ablation(
    pool: &rayon::ThreadPool,
    scenes: &[SceneBundle],
    gts: &[LabeledGt],
    map: Option<&ClassMap>,
    spec: &AblationSpec,
) -> Result<AblationTable> {
    let base = PipelineConfig::from(spec.base.clone());
    let mut ids: BTreeSet<String> = scenes.iter().map(|s| s.scene_id.clone()).collect();
    ids.extend(gts.iter().map(|g| g.scene_id.clone()));
    let mut rows = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let mut cfg = base.clone();
        spec.parameter
            .apply(&mut cfg, value)
            .with_context(|| format!("{} = {value}", spec.parameter))?;
        let outputs = pool.install(|| {
            scenes
                .par_iter()
                .map(|s| run_pipeline(s, &cfg))
                .collect::<Result<Vec<_>, _>>()
        })?;
        let preds: Vec<LabeledPrediction> = outputs
            .iter()
            .flat_map(|o| {
                o.proposals.proposals.iter().map(|p| LabeledPrediction {
                    scene_id: o.proposals.scene_id.clone(),
                    bbox: p.bbox,
                    category: PROPOSAL_CATEGORY.to_string(),
                    score: p.score,
                })
            })
            .collect();
        let report = evaluate_views(&preds, gts, &ids, &[spec.view], map)?.remove(0);
        rows.push(AblationRow {
            value,
            ap: report.metrics.ap,
            ar: report.metrics.ar,
            num_proposals: preds.len(),
            num_scenes: outputs.iter().filter(|o| !o.proposals.proposals.is_empty()).count(),
        });
    }
    Ok(AblationTable {
        parameter: spec.parameter,
        view: spec.view,
        rows,
    })
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// TOML ablation spec.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory for ablation.json and ablation.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
}

fn corpus_relative(corpus: &Path, given: Option<&Path>, default: &str) -> PathBuf {
    match given {
        Some(p) if p.is_absolute() => p.to_path_buf(),
        Some(p) => corpus.join(p),
        None => corpus.join(default),
    }
}

pub fn ablate(args: &AblateArgs) -> Result<AblationTable> {
    let text = std::fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let spec = AblationSpec::parse(&text).with_context(|| format!("parsing {}", args.spec.display()))?;
    let gt_path = corpus_relative(&args.corpus, spec.gt.as_deref(), GROUND_TRUTH_FILE);
    let (gts, _) = load_ground_truth(&gt_path)?;
    let map = if spec.view == View::Corner {
        None
    } else {
        let p = corpus_relative(&args.corpus, spec.class_map.as_deref(), CLASS_MAP_FILE);
        Some(load_class_map(&p)?)
    };

    let pool = thread_pool(args.workers)?;
    let ids = list_scenes(&args.corpus)?;
    let scenes = pool.install(|| {
        ids.par_iter()
            .map(|id| load_scene(&args.corpus, id).with_context(|| format!("scene {id}")))
            .collect::<Result<Vec<_>>>()
    })?;
    if scenes.is_empty() {
        bail!("corpus {} has no scenes", args.corpus.display());
    }
    let table = run_ablation(&pool, &scenes, &gts, map.as_ref(), &spec)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_json(&args.out.join("ablation.json"), &table)?;
    std::fs::write(args.out.join("ablation.csv"), table.to_csv()?)?;
    Ok(table)
}

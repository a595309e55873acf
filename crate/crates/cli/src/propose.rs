use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use copg_core::proposal::{run_pipeline_observed, PipelineOutput, PipelineStep, SceneBundle};
use copg_core::PipelineConfig;
use rayon::prelude::*;

use crate::config::{effective_config, ConfigOverrides};
use crate::corpus::{list_scenes, load_scene, write_json};
use crate::formats::{CocoFile, NamedBox, SceneBoxes};
use crate::manifest::{RunManifest, SceneEntry, SceneStatus, StageCounts, MANIFEST_FILE};

pub const PROPOSALS_DIR: &str = "proposals";

#[derive(Debug, Clone, Args)]
pub struct ProposeArgs {
    /// Corpus directory.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for proposals/ and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML pipeline config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write initial and intermediate proposals.
    #[arg(long)]
    pub all_stages: bool,
    /// Leave per-step timings out of the manifest.
    #[arg(long)]
    pub omit_timing: bool,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

/// One scene's pipeline result with its manifest entry.
#[derive(Debug, Clone)]
pub struct SceneRun {
    pub entry: SceneEntry,
    pub output: Option<PipelineOutput>,
    pub image_size: (u32, u32),
}

pub fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()?)
}

/// Runs the pipeline on one loaded scene, timing each step.
pub fn run_scene(scene: &SceneBundle, cfg: &PipelineConfig, timing: bool) -> SceneRun {
    let mut timing_ms = std::collections::BTreeMap::new();
    let mut last = Instant::now();
    let mut on_step = |step: PipelineStep| {
        let now = Instant::now();
        if timing {
            timing_ms.insert(step.as_str().to_string(), (now - last).as_secs_f64() * 1e3);
        }
        last = now;
    };
    let result = run_pipeline_observed(scene, cfg, &mut on_step);
    let image_size = (scene.cam.width(), scene.cam.height());
    match result {
        Ok(out) => {
            let [initial, intermediate, final_] = out.stage_counts();
            SceneRun {
                entry: SceneEntry {
                    scene_id: scene.scene_id.clone(),
                    status: SceneStatus::Ok,
                    skipped: out.skipped.iter().map(|s| s.as_str().to_string()).collect(),
                    error: None,
                    counts: Some(StageCounts {
                        ground_points: out.ground_points,
                        clusters: out.num_clusters,
                        initial,
                        intermediate,
                        final_,
                    }),
                    timing_ms,
                },
                output: Some(out),
                image_size,
            }
        }
        Err(e) => SceneRun {
            entry: error_entry(&scene.scene_id, format!("{e:#}")),
            output: None,
            image_size,
        },
    }
}

fn error_entry(scene_id: &str, error: String) -> SceneEntry {
    SceneEntry {
        scene_id: scene_id.to_string(),
        status: SceneStatus::Error,
        skipped: Vec::new(),
        error: Some(error),
        counts: None,
        timing_ms: Default::default(),
    }
}

/// Loads and processes every scene on the pool; results are in `ids` order.
pub fn run_corpus(
    pool: &rayon::ThreadPool,
    corpus: &Path,
    ids: &[String],
    cfg: &PipelineConfig,
    timing: bool,
) -> Vec<SceneRun> {
    pool.install(|| {
        ids.par_iter()
            .map(|id| match load_scene(corpus, id) {
                Ok(scene) => run_scene(&scene, cfg, timing),
                Err(e) => SceneRun {
                    entry: error_entry(id, format!("{e:#}")),
                    output: None,
                    image_size: (0, 0),
                },
            })
            .collect()
    })
}

/// COCO file holding one scene's proposals.
pub fn proposal_file(run: &SceneRun, all_stages: bool) -> Option<CocoFile> {
    let out = run.output.as_ref()?;
    let boxes: Vec<NamedBox> = if all_stages {
        out.all_stages().map(NamedBox::from).collect()
    } else {
        out.proposals.proposals.iter().map(NamedBox::from).collect()
    };
    Some(CocoFile::from_scenes(
        &[SceneBoxes {
            scene_id: run.entry.scene_id.clone(),
            width: run.image_size.0,
            height: run.image_size.1,
            boxes,
        }],
        false,
    ))
}

pub fn propose(args: &ProposeArgs) -> Result<RunManifest> {
    let cfg = effective_config(args.config.as_deref(), &args.overrides)?;
    let ids = list_scenes(&args.corpus)?;
    let pool = thread_pool(args.workers)?;
    let runs = run_corpus(&pool, &args.corpus, &ids, &cfg, !args.omit_timing);

    let prop_dir = args.out.join(PROPOSALS_DIR);
    fs::create_dir_all(&prop_dir).with_context(|| format!("creating {}", prop_dir.display()))?;
    for run in &runs {
        if let Some(file) = proposal_file(run, args.all_stages) {
            write_json(&prop_dir.join(format!("{}.json", run.entry.scene_id)), &file)?;
        }
    }
    let manifest = RunManifest::new(
        args.corpus.display().to_string(),
        cfg,
        runs.into_iter().map(|r| r.entry).collect(),
    );
    write_json(&args.out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

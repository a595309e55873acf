use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use copg_core::eval::{apply_class_separation, ClassMap, EvalError, EvalReport, LabeledGt, LabeledPrediction, View};

use crate::corpus::{load_class_map, read_json, write_json};
use crate::formats::{labeled_ground_truth, labeled_predictions, CocoFile, SceneBoxes};
use crate::propose::PROPOSALS_DIR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ViewArg {
    Corner,
    Common,
    Novel,
    All,
}

impl ViewArg {
    pub fn views(self) -> Vec<View> {
        match self {
            ViewArg::Corner => vec![View::Corner],
            ViewArg::Common => vec![View::Common],
            ViewArg::Novel => vec![View::Novel],
            ViewArg::All => View::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// A proposals COCO file, a directory of per-scene files, or a propose
    /// output directory.
    #[arg(long)]
    pub proposals: PathBuf,
    /// Ground-truth COCO file.
    #[arg(long)]
    pub gt: PathBuf,
    /// Category map; required by the COMMON and NOVEL views.
    #[arg(long)]
    pub class_map: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "corner")]
    pub view: ViewArg,
    /// Write the reports here as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Reads every proposal file under `path`, in file-name order.
pub fn load_proposal_files(path: &Path) -> Result<Vec<SceneBoxes>> {
    if path.is_file() {
        let file: CocoFile = read_json(path)?;
        return file.scenes().with_context(|| format!("decoding {}", path.display()));
    }
    let nested = path.join(PROPOSALS_DIR);
    let dir = if nested.is_dir() { nested } else { path.to_path_buf() };
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "json"));
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let file: CocoFile = read_json(&f)?;
        out.extend(file.scenes().with_context(|| format!("decoding {}", f.display()))?);
    }
    Ok(out)
}

pub fn load_predictions(path: &Path) -> Result<(Vec<LabeledPrediction>, BTreeSet<String>)> {
    let scenes = load_proposal_files(path)?;
    let ids = scenes.iter().map(|s| s.scene_id.clone()).collect();
    let file = CocoFile::from_scenes(&scenes, false);
    Ok((labeled_predictions(&file)?, ids))
}

pub fn load_ground_truth(path: &Path) -> Result<(Vec<LabeledGt>, BTreeSet<String>)> {
    let file: CocoFile = read_json(path)?;
    let ids = file.images.iter().map(|i| i.file_name.clone()).collect();
    let gts = labeled_ground_truth(&file).with_context(|| format!("decoding {}", path.display()))?;
    Ok((gts, ids))
}

/// Reports for each view over the union of prediction and gt scenes.
pub fn evaluate_views(
    preds: &[LabeledPrediction],
    gts: &[LabeledGt],
    scenes: &BTreeSet<String>,
    views: &[View],
    map: Option<&ClassMap>,
) -> Result<Vec<EvalReport>, EvalError> {
    if gts.is_empty() {
        return Err(EvalError::NoGroundTruth);
    }
    let empty = ClassMap::default();
    views
        .iter()
        .map(|&view| {
            let cats = apply_class_separation(preds, gts, scenes, view, map.unwrap_or(&empty))?;
            Ok(EvalReport::build(view, &cats))
        })
        .collect()
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.1}", 100.0 * v))
}

pub const REPORT_COLUMNS: [&str; 12] = [
    "View",
    "AR",
    "AR50",
    "AR75",
    "AR^1",
    "AR^10",
    "AR^s",
    "AR^m",
    "AR^l",
    "AP",
    "#Proposals",
    "#Scenes",
];

/// Fixed-width table, metrics in percent.
pub fn format_reports(reports: &[EvalReport]) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let m = &r.metrics;
            let mut row = vec![r.view.to_string()];
            row.extend([m.ar, m.ar50, m.ar75, m.ar_1, m.ar_10, m.ar_s, m.ar_m, m.ar_l, m.ap].map(pct));
            row.push(r.num_proposals.to_string());
            row.push(r.num_scenes_with_proposals.to_string());
            row
        })
        .collect();
    format_table(&REPORT_COLUMNS, &rows)
}

/// Right-aligned columns separated by two spaces.
pub fn format_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

pub fn evaluate(args: &EvaluateArgs) -> Result<Vec<EvalReport>> {
    let views = args.view.views();
    let map = match &args.class_map {
        Some(p) => Some(load_class_map(p)?),
        None if views.iter().any(|&v| v != View::Corner) => {
            bail!("the {:?} view needs --class-map", args.view)
        }
        None => None,
    };
    let (preds, mut scenes) = load_predictions(&args.proposals)?;
    let (gts, gt_scenes) = load_ground_truth(&args.gt)?;
    scenes.extend(gt_scenes);
    let reports = evaluate_views(&preds, &gts, &scenes, &views, map.as_ref())
        .with_context(|| format!("evaluating {} against {}", args.proposals.display(), args.gt.display()))?;
    if let Some(out) = &args.out {
        write_json(out, &reports)?;
    }
    Ok(reports)
}

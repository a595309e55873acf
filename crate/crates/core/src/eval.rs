//! COCO-style recall and precision for box proposals, plus the class
//! separation views used to score them (CORNER, COMMON, NOVEL).
//!
//! Matching follows the COCO protocol without crowd regions: predictions are
//! visited in descending score order (stable for ties), each one taking the
//! unmatched ground truth with the highest IoU at or above the threshold.
//! Ground truths outside the requested area range are ignored: they can absorb
//! a prediction but never count towards recall.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{iou, Box2D};

pub const NUM_IOU_THRESHOLDS: usize = 10;
pub const NUM_RECALL_POINTS: usize = 101;

/// IoU thresholds 0.50:0.05:0.95, generated the way `numpy.linspace` does.
pub fn iou_thresholds() -> [f64; NUM_IOU_THRESHOLDS] {
    let step = (0.95 - 0.5) / (NUM_IOU_THRESHOLDS - 1) as f64;
    let mut t = [0.0; NUM_IOU_THRESHOLDS];
    for (i, v) in t.iter_mut().enumerate() {
        *v = 0.5 + i as f64 * step;
    }
    t[NUM_IOU_THRESHOLDS - 1] = 0.95;
    t
}

/// Recall sample points 0:0.01:1.
pub fn recall_points() -> [f64; NUM_RECALL_POINTS] {
    let mut r = [0.0; NUM_RECALL_POINTS];
    for (i, v) in r.iter_mut().enumerate() {
        *v = i as f64 * 0.01;
    }
    r[NUM_RECALL_POINTS - 1] = 1.0;
    r
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no ground truth in the requested range")]
    NoGroundTruth,
    #[error("category {0:?} is missing from the class map")]
    UnmappedCategory(String),
    #[error("unknown view {0:?} (expected corner, common or novel)")]
    UnknownView(String),
}

/// COCO area buckets on ground-truth area (square pixels). Bounds are
/// inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AreaRange {
    All,
    Small,
    Medium,
    Large,
    Custom(f64, f64),
}

impl AreaRange {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            AreaRange::All => (0.0, 1e10),
            AreaRange::Small => (0.0, 32.0 * 32.0),
            AreaRange::Medium => (32.0 * 32.0, 96.0 * 96.0),
            AreaRange::Large => (96.0 * 96.0, 1e10),
            AreaRange::Custom(lo, hi) => (lo, hi),
        }
    }

    pub fn contains(&self, area: f64) -> bool {
        let (lo, hi) = self.bounds();
        area >= lo && area <= hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: Box2D,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub bbox: Box2D,
    /// Area used for bucketing; defaults to `w * h`.
    pub area: f64,
}

impl GtBox {
    pub fn new(bbox: Box2D) -> Self {
        Self {
            bbox,
            area: bbox.area(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneData {
    pub preds: Vec<ScoredBox>,
    pub gts: Vec<GtBox>,
}

/// Predictions and ground truth of one category, keyed by scene id. Scenes
/// are visited in key order, which makes results independent of input order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub scenes: BTreeMap<String, SceneData>,
}

impl EvalSet {
    pub fn scene_mut(&mut self, scene_id: &str) -> &mut SceneData {
        self.scenes.entry(scene_id.to_string()).or_default()
    }

    pub fn add_pred(&mut self, scene_id: &str, bbox: Box2D, score: f64) {
        self.scene_mut(scene_id).preds.push(ScoredBox { bbox, score });
    }

    pub fn add_gt(&mut self, scene_id: &str, gt: GtBox) {
        self.scene_mut(scene_id).gts.push(gt);
    }

    pub fn num_preds(&self) -> usize {
        self.scenes.values().map(|s| s.preds.len()).sum()
    }

    pub fn num_gts(&self) -> usize {
        self.scenes.values().map(|s| s.gts.len()).sum()
    }
}

/// Greedy matching of score-sorted predictions to ground truths at one IoU
/// threshold. Returns, for each prediction, the index of its matched ground
/// truth. When several unmatched ground truths tie on the best IoU, the one
/// listed last wins (COCO behavior).
pub fn greedy_match(preds: &[Box2D], gts: &[Box2D], iou_threshold: f64) -> Vec<Option<usize>> {
    let ious: Vec<Vec<f64>> = preds.iter().map(|p| gts.iter().map(|g| iou(p, g)).collect()).collect();
    let ignore = vec![false; gts.len()];
    match_with_ignore(&ious, &ignore, iou_threshold)
}

/// COCO matching loop. `gt_ignore` must list non-ignored ground truths first.
fn match_with_ignore(ious: &[Vec<f64>], gt_ignore: &[bool], threshold: f64) -> Vec<Option<usize>> {
    let mut taken = vec![false; gt_ignore.len()];
    ious.iter()
        .map(|row| {
            let mut best = threshold.min(1.0 - 1e-10);
            let mut m: Option<usize> = None;
            for (g, &v) in row.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                if let Some(mi) = m {
                    if !gt_ignore[mi] && gt_ignore[g] {
                        break;
                    }
                }
                if v < best {
                    continue;
                }
                best = v;
                m = Some(g);
            }
            if let Some(g) = m {
                taken[g] = true;
            }
            m
        })
        .collect()
}

/// Per-scene matching at every IoU threshold.
struct SceneEval {
    scores: Vec<f64>,
    /// `[threshold][pred]`
    matched: Vec<Vec<bool>>,
    ignored: Vec<Vec<bool>>,
    num_gt: usize,
}

fn evaluate_scene(scene: &SceneData, max_dets: usize, area: AreaRange, thresholds: &[f64]) -> SceneEval {
    let mut order: Vec<usize> = (0..scene.preds.len()).collect();
    order.sort_by(|&a, &b| scene.preds[b].score.total_cmp(&scene.preds[a].score));
    order.truncate(max_dets);
    let preds: Vec<&ScoredBox> = order.iter().map(|&i| &scene.preds[i]).collect();

    // Non-ignored ground truths first, stable within each group.
    let mut gts: Vec<&GtBox> = scene.gts.iter().collect();
    gts.sort_by_key(|g| !area.contains(g.area));
    let gt_ignore: Vec<bool> = gts.iter().map(|g| !area.contains(g.area)).collect();
    let num_gt = gt_ignore.iter().filter(|&&ig| !ig).count();

    let ious: Vec<Vec<f64>> = preds
        .iter()
        .map(|p| gts.iter().map(|g| iou(&p.bbox, &g.bbox)).collect())
        .collect();

    let mut matched = Vec::with_capacity(thresholds.len());
    let mut ignored = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let m = match_with_ignore(&ious, &gt_ignore, t);
        ignored.push(
            m.iter()
                .zip(&preds)
                .map(|(mi, p)| match mi {
                    Some(g) => gt_ignore[*g],
                    None => !area.contains(p.bbox.area()),
                })
                .collect(),
        );
        matched.push(m.iter().map(Option::is_some).collect());
    }
    SceneEval {
        scores: preds.iter().map(|p| p.score).collect(),
        matched,
        ignored,
        num_gt,
    }
}

/// Recall and interpolated precision for one category.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulated {
    /// Final recall at each IoU threshold.
    pub recall: [f64; NUM_IOU_THRESHOLDS],
    /// Interpolated precision `[threshold][recall point]`.
    pub precision: Vec<[f64; NUM_RECALL_POINTS]>,
}

/// Pools every scene into one ranked list and computes recall and the
/// 101-point interpolated precision per IoU threshold. `None` when no ground
/// truth falls in `area`.
pub fn accumulate(set: &EvalSet, max_dets: usize, area: AreaRange) -> Option<Accumulated> {
    let thresholds = iou_thresholds();
    let evals: Vec<SceneEval> = set
        .scenes
        .values()
        .map(|s| evaluate_scene(s, max_dets, area, &thresholds))
        .collect();
    let num_gt: usize = evals.iter().map(|e| e.num_gt).sum();
    if num_gt == 0 {
        return None;
    }

    // (scene, local index) in descending score order, stable in scene order.
    let mut ranked: Vec<(usize, usize)> = evals
        .iter()
        .enumerate()
        .flat_map(|(s, e)| (0..e.scores.len()).map(move |d| (s, d)))
        .collect();
    ranked.sort_by(|a, b| evals[b.0].scores[b.1].total_cmp(&evals[a.0].scores[a.1]));

    let rec_points = recall_points();
    let mut recall = [0.0; NUM_IOU_THRESHOLDS];
    let mut precision = vec![[0.0; NUM_RECALL_POINTS]; NUM_IOU_THRESHOLDS];
    let mut rc = Vec::with_capacity(ranked.len());
    let mut pr = Vec::with_capacity(ranked.len());
    for t in 0..NUM_IOU_THRESHOLDS {
        rc.clear();
        pr.clear();
        let (mut tp, mut fp) = (0usize, 0usize);
        for &(s, d) in &ranked {
            if !evals[s].ignored[t][d] {
                if evals[s].matched[t][d] {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
            rc.push(tp as f64 / num_gt as f64);
            pr.push(if tp + fp == 0 {
                0.0
            } else {
                tp as f64 / (tp + fp) as f64
            });
        }
        recall[t] = rc.last().copied().unwrap_or(0.0);
        // Precision envelope: non-increasing from the right.
        for i in (1..pr.len()).rev() {
            if pr[i] > pr[i - 1] {
                pr[i - 1] = pr[i];
            }
        }
        for (ri, &r) in rec_points.iter().enumerate() {
            let pos = rc.partition_point(|&v| v < r);
            if pos < pr.len() {
                precision[t][ri] = pr[pos];
            }
        }
    }
    Some(Accumulated { recall, precision })
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Recall averaged over IoU thresholds 0.50:0.05:0.95, using at most
/// `max_dets` top-scoring predictions per scene.
pub fn average_recall(set: &EvalSet, max_dets: usize, area: AreaRange) -> Result<f64, EvalError> {
    let acc = accumulate(set, max_dets, area).ok_or(EvalError::NoGroundTruth)?;
    Ok(mean(acc.recall))
}

/// Recall at each IoU threshold.
pub fn recall_per_threshold(
    set: &EvalSet,
    max_dets: usize,
    area: AreaRange,
) -> Result<[f64; NUM_IOU_THRESHOLDS], EvalError> {
    Ok(accumulate(set, max_dets, area).ok_or(EvalError::NoGroundTruth)?.recall)
}

/// COCO AP: interpolated precision averaged over the 101 recall points and
/// the ten IoU thresholds.
pub fn average_precision(set: &EvalSet, max_dets: usize, area: AreaRange) -> Result<f64, EvalError> {
    let acc = accumulate(set, max_dets, area).ok_or(EvalError::NoGroundTruth)?;
    Ok(mean(acc.precision.iter().flat_map(|row| row.iter().copied())))
}

/// Metric columns of a report. `None` marks an undefined value (no ground
/// truth in range).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "AR")]
    pub ar: Option<f64>,
    #[serde(rename = "AR50")]
    pub ar50: Option<f64>,
    #[serde(rename = "AR75")]
    pub ar75: Option<f64>,
    #[serde(rename = "AR_1")]
    pub ar_1: Option<f64>,
    #[serde(rename = "AR_10")]
    pub ar_10: Option<f64>,
    #[serde(rename = "AR_s")]
    pub ar_s: Option<f64>,
    #[serde(rename = "AR_m")]
    pub ar_m: Option<f64>,
    #[serde(rename = "AR_l")]
    pub ar_l: Option<f64>,
    #[serde(rename = "AP")]
    pub ap: Option<f64>,
}

/// Default per-scene prediction cap for the headline numbers.
pub const DEFAULT_MAX_DETS: usize = 100;

impl Metrics {
    /// All columns for a single category.
    pub fn for_set(set: &EvalSet) -> Metrics {
        let t75 = iou_thresholds()
            .iter()
            .position(|&t| (t - 0.75).abs() < 1e-9)
            .expect("0.75 is a threshold");
        let acc = accumulate(set, DEFAULT_MAX_DETS, AreaRange::All);
        let ar_at = |max_dets, area| average_recall(set, max_dets, area).ok();
        Metrics {
            ar: acc.as_ref().map(|a| mean(a.recall)),
            ar50: acc.as_ref().map(|a| a.recall[0]),
            ar75: acc.as_ref().map(|a| a.recall[t75]),
            ar_1: ar_at(1, AreaRange::All),
            ar_10: ar_at(10, AreaRange::All),
            ar_s: ar_at(DEFAULT_MAX_DETS, AreaRange::Small),
            ar_m: ar_at(DEFAULT_MAX_DETS, AreaRange::Medium),
            ar_l: ar_at(DEFAULT_MAX_DETS, AreaRange::Large),
            ap: acc
                .as_ref()
                .map(|a| mean(a.precision.iter().flat_map(|row| row.iter().copied()))),
        }
    }

    /// Columns averaged over categories, skipping categories where a value
    /// is undefined.
    pub fn for_categories(sets: &[EvalSet]) -> Metrics {
        let per: Vec<Metrics> = sets.iter().map(Metrics::for_set).collect();
        let avg = |f: fn(&Metrics) -> Option<f64>| {
            let vals: Vec<f64> = per.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| mean(vals))
        };
        Metrics {
            ar: avg(|m| m.ar),
            ar50: avg(|m| m.ar50),
            ar75: avg(|m| m.ar75),
            ar_1: avg(|m| m.ar_1),
            ar_10: avg(|m| m.ar_10),
            ar_s: avg(|m| m.ar_s),
            ar_m: avg(|m| m.ar_m),
            ar_l: avg(|m| m.ar_l),
            ap: avg(|m| m.ap),
        }
    }
}

/// Class-separation regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum View {
    /// Every class, matched class-agnostically.
    Corner,
    /// Per-class over pedestrian, cyclist and a unified vehicle class.
    Common,
    /// Non-common classes, matched class-agnostically.
    Novel,
}

impl View {
    pub const ALL: [View; 3] = [View::Corner, View::Common, View::Novel];
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            View::Corner => "CORNER",
            View::Common => "COMMON",
            View::Novel => "NOVEL",
        })
    }
}

impl FromStr for View {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "corner" => Ok(View::Corner),
            "common" => Ok(View::Common),
            "novel" => Ok(View::Novel),
            _ => Err(EvalError::UnknownView(s.to_string())),
        }
    }
}

/// Group a detector or annotation class is mapped to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassGroup {
    Vehicle,
    Pedestrian,
    Cyclist,
    Novel,
    Ignore,
}

impl ClassGroup {
    /// The common classes, in report order.
    pub const COMMON: [ClassGroup; 3] = [ClassGroup::Pedestrian, ClassGroup::Cyclist, ClassGroup::Vehicle];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassGroup::Vehicle => "vehicle",
            ClassGroup::Pedestrian => "pedestrian",
            ClassGroup::Cyclist => "cyclist",
            ClassGroup::Novel => "novel",
            ClassGroup::Ignore => "ignore",
        }
    }
}

/// Category-name mapping for predictions and ground truth.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    #[serde(default)]
    pub predictions: BTreeMap<String, ClassGroup>,
    #[serde(default)]
    pub ground_truth: BTreeMap<String, ClassGroup>,
}

impl ClassMap {
    fn group(map: &BTreeMap<String, ClassGroup>, category: &str) -> Result<ClassGroup, EvalError> {
        map.get(category)
            .copied()
            .ok_or_else(|| EvalError::UnmappedCategory(category.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub scene_id: String,
    pub bbox: Box2D,
    pub category: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledGt {
    pub scene_id: String,
    pub bbox: Box2D,
    pub category: String,
    pub area: f64,
}

/// One evaluation category produced by class separation.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewCategory {
    pub name: String,
    pub set: EvalSet,
}

/// Splits labeled predictions and ground truth into the evaluation
/// categories of `view`. CORNER never looks at labels, so the class map is
/// only consulted for COMMON and NOVEL. `scenes` lists every scene in the
/// corpus so that empty scenes still appear.
pub fn apply_class_separation(
    preds: &[LabeledPrediction],
    gts: &[LabeledGt],
    scenes: &BTreeSet<String>,
    view: View,
    map: &ClassMap,
) -> Result<Vec<ViewCategory>, EvalError> {
    let empty_set = || EvalSet {
        scenes: scenes.iter().map(|s| (s.clone(), SceneData::default())).collect(),
    };
    let gt_box = |g: &LabeledGt| GtBox {
        bbox: g.bbox,
        area: g.area,
    };
    match view {
        View::Corner => {
            let mut set = empty_set();
            for p in preds {
                set.add_pred(&p.scene_id, p.bbox, p.score);
            }
            for g in gts {
                set.add_gt(&g.scene_id, gt_box(g));
            }
            Ok(vec![ViewCategory {
                name: "corner".into(),
                set,
            }])
        }
        View::Novel | View::Common => {
            let groups: Vec<ClassGroup> = if view == View::Novel {
                vec![ClassGroup::Novel]
            } else {
                ClassGroup::COMMON.to_vec()
            };
            let mut sets: Vec<EvalSet> = groups.iter().map(|_| empty_set()).collect();
            for p in preds {
                let g = ClassMap::group(&map.predictions, &p.category)?;
                if let Some(k) = groups.iter().position(|&x| x == g) {
                    sets[k].add_pred(&p.scene_id, p.bbox, p.score);
                }
            }
            for gt in gts {
                let g = ClassMap::group(&map.ground_truth, &gt.category)?;
                if let Some(k) = groups.iter().position(|&x| x == g) {
                    sets[k].add_gt(&gt.scene_id, gt_box(gt));
                }
            }
            Ok(groups
                .into_iter()
                .zip(sets)
                .map(|(g, set)| ViewCategory {
                    name: g.as_str().to_string(),
                    set,
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub name: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Evaluation output for one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub view: View,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub per_category: Vec<CategoryReport>,
    pub num_proposals: usize,
    pub num_scenes_with_proposals: usize,
    pub num_scenes: usize,
}

impl EvalReport {
    pub fn build(view: View, categories: &[ViewCategory]) -> EvalReport {
        let sets: Vec<EvalSet> = categories.iter().map(|c| c.set.clone()).collect();
        let mut with_preds = BTreeSet::new();
        let mut all_scenes = BTreeSet::new();
        for set in &sets {
            for (id, scene) in &set.scenes {
                all_scenes.insert(id.as_str());
                if !scene.preds.is_empty() {
                    with_preds.insert(id.as_str());
                }
            }
        }
        EvalReport {
            view,
            metrics: Metrics::for_categories(&sets),
            per_category: categories
                .iter()
                .map(|c| CategoryReport {
                    name: c.name.clone(),
                    metrics: Metrics::for_set(&c.set),
                })
                .collect(),
            num_proposals: sets.iter().map(EvalSet::num_preds).sum(),
            num_scenes_with_proposals: with_preds.len(),
            num_scenes: all_scenes.len(),
        }
    }
}

//! Brute-force COCO recall and precision, restated declaratively.
//!
//! Each prediction, in descending score order, takes the unmatched ground
//! truth of highest IoU at or above the threshold; candidates inside the area
//! range are preferred over out-of-range ones, and among equal IoUs the one
//! later in (in-range first, then input) order wins. Interpolated precision
//! at recall `r` is the best precision at any rank whose recall reaches `r`.

use copg_core::Box2D;

#[derive(Debug, Clone)]
pub struct Scene {
    pub preds: Vec<(Box2D, f64)>,
    /// `(box, area)`
    pub gts: Vec<(Box2D, f64)>,
}

pub fn iou(a: &Box2D, b: &Box2D) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.w * a.h + b.w * b.h - inter)
}

fn thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

struct Ranked {
    score: f64,
    tp: bool,
    ignored: bool,
}

/// `(ranked predictions, in-range gt count)` for one threshold, pooled in
/// the given scene order.
fn simulate(scenes: &[Scene], max_dets: usize, area: (f64, f64), thr: f64) -> (Vec<Ranked>, usize) {
    let in_range = |a: f64| a >= area.0 && a <= area.1;
    let mut pooled = Vec::new();
    let mut npos = 0;
    for scene in scenes {
        let mut preds: Vec<(Box2D, f64)> = scene.preds.clone();
        preds.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        preds.truncate(max_dets);

        let mut gts: Vec<(Box2D, bool)> = scene
            .gts
            .iter()
            .filter(|g| in_range(g.1))
            .map(|g| (g.0, false))
            .collect();
        gts.extend(scene.gts.iter().filter(|g| !in_range(g.1)).map(|g| (g.0, true)));
        npos += gts.iter().filter(|g| !g.1).count();

        let mut taken = vec![false; gts.len()];
        let limit = thr.min(1.0 - 1e-10);
        for (pb, score) in preds {
            let pick = |want_ignored: bool, taken: &[bool]| {
                let mut best: Option<(usize, f64)> = None;
                for (g, (gb, ig)) in gts.iter().enumerate() {
                    if taken[g] || *ig != want_ignored {
                        continue;
                    }
                    let v = iou(&pb, gb);
                    if v >= limit && best.is_none_or(|(_, bv)| v >= bv) {
                        best = Some((g, v));
                    }
                }
                best.map(|(g, _)| g)
            };
            let chosen = pick(false, &taken).or_else(|| pick(true, &taken));
            let (tp, ignored) = match chosen {
                Some(g) => {
                    taken[g] = true;
                    (!gts[g].1, gts[g].1)
                }
                None => (false, !in_range(pb.w * pb.h)),
            };
            pooled.push(Ranked { score, tp, ignored });
        }
    }
    pooled.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    (pooled, npos)
}

pub fn average_recall(scenes: &[Scene], max_dets: usize, area: (f64, f64)) -> Option<f64> {
    let mut total = 0.0;
    for t in thresholds() {
        let (ranked, npos) = simulate(scenes, max_dets, area, t);
        if npos == 0 {
            return None;
        }
        total += ranked.iter().filter(|r| r.tp && !r.ignored).count() as f64 / npos as f64;
    }
    Some(total / 10.0)
}

pub fn average_precision(scenes: &[Scene], max_dets: usize, area: (f64, f64)) -> Option<f64> {
    let mut total = 0.0;
    for t in thresholds() {
        let (ranked, npos) = simulate(scenes, max_dets, area, t);
        if npos == 0 {
            return None;
        }
        let mut curve = Vec::new();
        let (mut tp, mut fp) = (0usize, 0usize);
        for r in &ranked {
            if !r.ignored {
                if r.tp {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
            let precision = if tp + fp == 0 {
                0.0
            } else {
                tp as f64 / (tp + fp) as f64
            };
            curve.push((tp as f64 / npos as f64, precision));
        }
        for k in 0..=100 {
            let r = k as f64 / 100.0;
            total += curve
                .iter()
                .filter(|(rc, _)| *rc >= r)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max);
        }
    }
    Some(total / (10.0 * 101.0))
}

//! COCO-style average precision over labelled boxes.
//!
//! The matching and interpolation follow pycocotools: detections are
//! matched greedily in descending score order to the best still-free
//! ground truth at or above the IoU threshold, and precision is read off
//! the monotone envelope at 101 recall points.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{iou_2d, AnnotationSet};
use crate::CategoryId;

/// IoU thresholds 0.50:0.05:0.95.
pub const COCO_IOU_GRID: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

const RECALL_POINTS: usize = 101;

/// Ground-truth size bucket by box area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaRange {
    All,
    Small,
    Medium,
    Large,
}

impl AreaRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            AreaRange::All => (0.0, 1e10),
            AreaRange::Small => (0.0, 32.0 * 32.0),
            AreaRange::Medium => (32.0 * 32.0, 96.0 * 96.0),
            AreaRange::Large => (96.0 * 96.0, 1e10),
        }
    }

    fn excludes(self, area: f64) -> bool {
        let (lo, hi) = self.bounds();
        area < lo || area > hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApParams {
    pub iou_thresholds: Vec<f64>,
    pub max_dets: usize,
    pub area_buckets: bool,
}

impl Default for ApParams {
    fn default() -> Self {
        ApParams {
            iou_thresholds: COCO_IOU_GRID.to_vec(),
            max_dets: 100,
            area_buckets: true,
        }
    }
}

/// Matching outcome for one category at one IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryEval {
    /// Non-ignored ground-truth count.
    pub npos: usize,
    /// Detections in evaluation order: `(pred index, matched gt index, ignored)`.
    pub detections: Vec<(usize, Option<usize>, bool)>,
    /// `None` when the category has no ground truth.
    pub ap: Option<f64>,
}

fn descending_by_score(set: &AnnotationSet, idx: &mut [usize]) {
    // Stable: equal scores keep input order.
    idx.sort_by(|&a, &b| set.boxes[b].score.total_cmp(&set.boxes[a].score));
}

/// Runs the greedy matcher for one category and returns the match trace
/// together with its 101-point interpolated AP.
pub fn evaluate_category(
    preds: &AnnotationSet,
    gt: &AnnotationSet,
    category: CategoryId,
    iou_thr: f64,
    area: AreaRange,
    max_dets: usize,
) -> CategoryEval {
    let gt_by_pano = gt.by_pano();
    let pred_by_pano = preds.by_pano();
    let panos: BTreeSet<&str> = gt_by_pano.keys().chain(pred_by_pano.keys()).copied().collect();

    let mut npos = 0;
    let mut per_image: Vec<Vec<(usize, Option<usize>, bool)>> = Vec::new();
    for pano in panos {
        let mut g: Vec<usize> = gt_by_pano
            .get(pano)
            .into_iter()
            .flatten()
            .copied()
            .filter(|&i| gt.boxes[i].category == category)
            .collect();
        let mut d: Vec<usize> = pred_by_pano
            .get(pano)
            .into_iter()
            .flatten()
            .copied()
            .filter(|&i| preds.boxes[i].category == category)
            .collect();
        let g_ignore = |i: usize| area.excludes(gt.boxes[i].bbox.area());
        // Non-ignored ground truth first.
        g.sort_by_key(|&i| g_ignore(i));
        npos += g.iter().filter(|&&i| !g_ignore(i)).count();
        descending_by_score(preds, &mut d);
        d.truncate(max_dets);

        let wrap = gt.wrap_width(preds, pano);
        let mut gt_taken = vec![false; g.len()];
        let mut out = Vec::with_capacity(d.len());
        for &di in &d {
            let mut best_iou = iou_thr.min(1.0 - 1e-10);
            let mut m: Option<usize> = None;
            for (gk, &gi) in g.iter().enumerate() {
                if gt_taken[gk] {
                    continue;
                }
                if let Some(mk) = m {
                    if !g_ignore(g[mk]) && g_ignore(gi) {
                        break;
                    }
                }
                let iou = iou_2d(&preds.boxes[di].bbox, &gt.boxes[gi].bbox, wrap);
                if iou < best_iou {
                    continue;
                }
                best_iou = iou;
                m = Some(gk);
            }
            match m {
                Some(mk) => {
                    gt_taken[mk] = true;
                    out.push((di, Some(g[mk]), g_ignore(g[mk])));
                }
                None => out.push((di, None, area.excludes(preds.boxes[di].bbox.area()))),
            }
        }
        per_image.push(out);
    }

    let mut detections: Vec<(usize, Option<usize>, bool)> = per_image.into_iter().flatten().collect();
    detections.sort_by(|a, b| preds.boxes[b.0].score.total_cmp(&preds.boxes[a.0].score));
    let ap = (npos > 0).then(|| interpolated_ap(&detections, npos));
    CategoryEval { npos, detections, ap }
}

fn interpolated_ap(detections: &[(usize, Option<usize>, bool)], npos: usize) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut recall = Vec::new();
    let mut precision = Vec::new();
    for &(_, m, ignored) in detections {
        if ignored {
            continue;
        }
        if m.is_some() {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / npos as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut sum = 0.0;
    for r in 0..RECALL_POINTS {
        // Same grid values as numpy's linspace(0, 1, 101).
        let threshold = r as f64 * 0.01;
        let pos = recall.partition_point(|&x| x < threshold);
        if pos < precision.len() {
            sum += precision[pos];
        }
    }
    sum / RECALL_POINTS as f64
}

/// AP for one category; `None` if that category has no ground truth.
pub fn average_precision(
    preds: &AnnotationSet,
    gt: &AnnotationSet,
    category: CategoryId,
    iou_thr: f64,
    area: AreaRange,
) -> Option<f64> {
    evaluate_category(preds, gt, category, iou_thr, area, ApParams::default().max_dets).ap
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    /// Mean over categories and the IoU grid.
    pub map: f64,
    pub map50: Option<f64>,
    pub map75: Option<f64>,
    pub map_small: Option<f64>,
    pub map_medium: Option<f64>,
    pub map_large: Option<f64>,
    /// AP averaged over the IoU grid, per category with ground truth.
    pub per_category: BTreeMap<CategoryId, f64>,
    /// AP at IoU 0.5, per category with ground truth.
    pub per_category_50: BTreeMap<CategoryId, f64>,
    /// Categories seen only in predictions; left out of every mean.
    pub excluded_categories: Vec<CategoryId>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// mAP over the IoU grid, the 0.50 / 0.75 slices, size buckets and a
/// per-category breakdown.
pub fn evaluate_ap(preds: &AnnotationSet, gt: &AnnotationSet, params: &ApParams) -> ApReport {
    let categories: BTreeSet<CategoryId> = gt.boxes.iter().chain(&preds.boxes).map(|b| b.category).collect();
    let ap_at = |cat: CategoryId, thr: f64, area: AreaRange| {
        evaluate_category(preds, gt, cat, thr, area, params.max_dets).ap
    };
    let mut excluded = Vec::new();
    let mut per_category = BTreeMap::new();
    let mut per_category_50 = BTreeMap::new();
    let mut grid: Vec<f64> = Vec::new();
    let mut at50 = Vec::new();
    let mut at75 = Vec::new();
    for &cat in &categories {
        let aps: Vec<Option<f64>> = params.iou_thresholds.iter().map(|&t| ap_at(cat, t, AreaRange::All)).collect();
        if aps.iter().all(Option::is_none) {
            excluded.push(cat);
            continue;
        }
        let aps: Vec<f64> = aps.into_iter().flatten().collect();
        per_category.insert(cat, mean(aps.iter().copied()).unwrap_or(0.0));
        grid.extend(&aps);
        for (&t, &ap) in params.iou_thresholds.iter().zip(&aps) {
            if (t - 0.5).abs() < 1e-9 {
                at50.push(ap);
                per_category_50.insert(cat, ap);
            }
            if (t - 0.75).abs() < 1e-9 {
                at75.push(ap);
            }
        }
    }
    let bucket = |area: AreaRange| -> Option<f64> {
        if !params.area_buckets {
            return None;
        }
        mean(
            categories
                .iter()
                .flat_map(|&c| params.iou_thresholds.iter().filter_map(move |&t| ap_at(c, t, area))),
        )
    };
    ApReport {
        map: mean(grid).unwrap_or(0.0),
        map50: mean(at50),
        map75: mean(at75),
        map_small: bucket(AreaRange::Small),
        map_medium: bucket(AreaRange::Medium),
        map_large: bucket(AreaRange::Large),
        per_category,
        per_category_50,
        excluded_categories: excluded,
    }
}

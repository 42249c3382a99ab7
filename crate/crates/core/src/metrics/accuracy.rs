use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{iou_2d, AnnotationSet, LabeledBox};
use crate::CategoryId;

/// Box IoU a coarse annotation must reach against ground truth to count.
pub const ACCURACY_IOU_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub total: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

/// Fraction of coarse annotations that overlap a same-category ground-truth
/// box with IoU at or above the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub iou_threshold: f64,
    pub total: usize,
    pub correct: usize,
    /// `None` when there are no coarse annotations: the ratio is undefined.
    pub accuracy: Option<f64>,
    /// Keyed by the coarse annotation's category.
    pub per_category: BTreeMap<CategoryId, CategoryAccuracy>,
    /// `(coarse index, ground-truth index)` pairs of the one-to-one assignment.
    pub matches: Vec<(usize, usize)>,
}

fn box_key(b: &LabeledBox) -> [f64; 4] {
    b.bbox.to_array()
}

fn cmp_keys(a: &[f64; 4], b: &[f64; 4]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Greedy one-to-one assignment per panorama: eligible pairs (IoU at or
/// above the threshold, equal category) are taken in descending IoU order.
/// Ties are broken on box coordinates, so the result does not depend on the
/// order of either input.
pub fn coarse_accuracy(coarse: &AnnotationSet, gt: &AnnotationSet, iou_thr: f64) -> AccuracyReport {
    let gt_by_pano = gt.by_pano();
    let mut matches = Vec::new();
    for (pano, coarse_idx) in coarse.by_pano() {
        let Some(gt_idx) = gt_by_pano.get(pano) else {
            continue;
        };
        let wrap = gt.wrap_width(coarse, pano);
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for &c in &coarse_idx {
            for &g in gt_idx {
                let (cb, gb) = (&coarse.boxes[c], &gt.boxes[g]);
                if cb.category != gb.category {
                    continue;
                }
                let iou = iou_2d(&cb.bbox, &gb.bbox, wrap);
                if iou >= iou_thr {
                    pairs.push((iou, c, g));
                }
            }
        }
        pairs.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| cmp_keys(&box_key(&coarse.boxes[a.1]), &box_key(&coarse.boxes[b.1])))
                .then_with(|| cmp_keys(&box_key(&gt.boxes[a.2]), &box_key(&gt.boxes[b.2])))
        });
        let mut used_c = vec![false; coarse.boxes.len()];
        let mut used_g = vec![false; gt.boxes.len()];
        for (_, c, g) in pairs {
            if !used_c[c] && !used_g[g] {
                used_c[c] = true;
                used_g[g] = true;
                matches.push((c, g));
            }
        }
    }
    matches.sort_unstable();

    let mut per_category: BTreeMap<CategoryId, CategoryAccuracy> = BTreeMap::new();
    for b in &coarse.boxes {
        per_category.entry(b.category).or_default().total += 1;
    }
    for &(c, _) in &matches {
        per_category.get_mut(&coarse.boxes[c].category).expect("counted above").correct += 1;
    }
    for v in per_category.values_mut() {
        v.accuracy = (v.total > 0).then(|| v.correct as f64 / v.total as f64);
    }
    let total = coarse.boxes.len();
    let correct = matches.len();
    AccuracyReport {
        iou_threshold: iou_thr,
        total,
        correct,
        accuracy: (total > 0).then(|| correct as f64 / total as f64),
        per_category,
        matches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pixel::BoxXywh;
    use proptest::prelude::*;

    fn lb(pano: &str, x: f64, cat: u32) -> LabeledBox {
        LabeledBox {
            pano_id: pano.into(),
            bbox: BoxXywh::new(x, 100.0, 100.0, 200.0),
            category: CategoryId(cat),
            score: 1.0,
        }
    }

    fn set(boxes: Vec<LabeledBox>) -> AnnotationSet {
        AnnotationSet {
            boxes,
            image_widths: [("a".to_string(), 2048.0), ("b".to_string(), 2048.0)].into(),
        }
    }

    #[test]
    fn identical_sets_are_fully_accurate() {
        let gt = set(vec![lb("a", 0.0, 1), lb("a", 500.0, 2), lb("b", 10.0, 3)]);
        let r = coarse_accuracy(&gt, &gt, ACCURACY_IOU_THRESHOLD);
        assert_eq!(r.accuracy, Some(1.0));
        assert_eq!(r.per_category.values().map(|c| c.correct).sum::<usize>(), r.correct);
    }

    #[test]
    fn shifted_box_below_threshold() {
        // x-shift s on a 100-wide box: IoU = (100 - s) / (100 + s). s = 100*0.3/1.7 gives 0.7.
        let s = 100.0 * 0.3 / 1.7;
        let shifted = lb("a", 500.0 + s, 2);
        let gt_box = lb("a", 500.0, 2);
        let iou = iou_2d(&shifted.bbox, &gt_box.bbox, None);
        assert!((iou - 0.7).abs() < 1e-12);
        let gt = set(vec![lb("a", 0.0, 1), gt_box]);
        let coarse = set(vec![lb("a", 0.0, 1), shifted]);
        assert_eq!(coarse_accuracy(&coarse, &gt, 0.8).accuracy, Some(0.5));
    }

    #[test]
    fn wrong_category_is_incorrect() {
        let gt = set(vec![lb("a", 0.0, 1)]);
        let coarse = set(vec![lb("a", 2.5, 2)]);
        assert!(iou_2d(&coarse.boxes[0].bbox, &gt.boxes[0].bbox, None) > 0.95);
        let r = coarse_accuracy(&coarse, &gt, 0.8);
        assert_eq!((r.total, r.correct), (1, 0));
    }

    #[test]
    fn empty_coarse_is_undefined() {
        let gt = set(vec![lb("a", 0.0, 1)]);
        let r = coarse_accuracy(&set(vec![]), &gt, 0.8);
        assert_eq!(r.accuracy, None);
        assert_eq!(r.total, 0);
    }

    #[test]
    fn one_gt_never_matched_twice() {
        let gt = set(vec![lb("a", 0.0, 1)]);
        let coarse = set(vec![lb("a", 0.0, 1), lb("a", 1.0, 1)]);
        let r = coarse_accuracy(&coarse, &gt, 0.8);
        assert_eq!(r.correct, 1);
        assert_eq!(r.matches, vec![(0, 0)]);
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            xs in prop::collection::vec((0.0..1500.0f64, 1u32..3, 0usize..2), 1..12),
            gs in prop::collection::vec((0.0..1500.0f64, 1u32..3, 0usize..2), 0..12),
            seed in any::<u64>(),
        ) {
            let panos = ["a", "b"];
            let coarse: Vec<LabeledBox> = xs.iter().map(|&(x, c, p)| lb(panos[p], (x / 10.0).round() * 10.0, c)).collect();
            let gt: Vec<LabeledBox> = gs.iter().map(|&(x, c, p)| lb(panos[p], (x / 10.0).round() * 10.0, c)).collect();
            let base = coarse_accuracy(&set(coarse.clone()), &set(gt.clone()), 0.8);
            let mut c2 = coarse.clone();
            let mut g2 = gt.clone();
            let k = (seed as usize) % c2.len().max(1);
            c2.rotate_left(k);
            g2.reverse();
            let other = coarse_accuracy(&set(c2), &set(g2), 0.8);
            prop_assert_eq!(base.correct, other.correct);
            prop_assert_eq!(base.per_category, other.per_category);
            let mut seen = std::collections::BTreeSet::new();
            for (_, g) in &base.matches {
                prop_assert!(seen.insert(*g));
            }
        }
    }
}

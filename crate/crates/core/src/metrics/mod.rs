//! Evaluation: overlap measures, coarse-annotation accuracy and COCO-style
//! average precision.

mod accuracy;
mod ap;
mod iou;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pixel::BoxXywh;
use crate::CategoryId;

pub use accuracy::{coarse_accuracy, AccuracyReport, CategoryAccuracy, ACCURACY_IOU_THRESHOLD};
pub use ap::{
    average_precision, evaluate_ap, evaluate_category, AreaRange, ApParams, ApReport, CategoryEval, COCO_IOU_GRID,
};
pub use iou::{iou_1d, iou_2d};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("union of the two intervals has zero length")]
    DegenerateUnion,
}

/// A labelled box in one panorama, with an optional confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub pano_id: String,
    pub bbox: BoxXywh,
    pub category: CategoryId,
    pub score: f64,
}

/// Boxes plus the panorama widths needed to wrap them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub boxes: Vec<LabeledBox>,
    /// Panoramas with a known width wrap horizontally; others do not.
    pub image_widths: BTreeMap<String, f64>,
}

impl AnnotationSet {
    pub fn by_pano(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut m: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, b) in self.boxes.iter().enumerate() {
            m.entry(b.pano_id.as_str()).or_default().push(i);
        }
        m
    }

    pub(crate) fn wrap_width(&self, other: &AnnotationSet, pano: &str) -> Option<f64> {
        self.image_widths.get(pano).or_else(|| other.image_widths.get(pano)).copied()
    }
}

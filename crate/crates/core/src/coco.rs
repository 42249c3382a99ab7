//! COCO-format reading and writing for annotation sets.
//!
//! Images are identified by `pano_id` (also written as `file_name`); the
//! numeric `image_id` is only an intra-file join key.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ingest::{read_text, parse_json_value, CategoryMapping, IngestError, PanoramaMeta};
use crate::matcher::CoarseAnnotation;
use crate::metrics::{AnnotationSet, LabeledBox};
use crate::pixel::BoxXywh;
use crate::CategoryId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pano_id: Option<String>,
    pub width: u32,
    pub height: u32,
}

impl CocoImage {
    pub fn key(&self) -> &str {
        self.pano_id.as_deref().unwrap_or(&self.file_name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub bbox: [f64; 4],
    pub area: f64,
    pub category_id: CategoryId,
    #[serde(default)]
    pub iscrowd: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub building_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou_x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: CategoryId,
    pub name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<Value>,
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

pub fn categories_from_mapping(mapping: &CategoryMapping) -> Vec<CocoCategory> {
    mapping
        .categories()
        .into_iter()
        .map(|(id, name)| CocoCategory { id, name })
        .collect()
}

/// Image table for `metas`, ids assigned in sorted pano_id order starting at 1.
pub fn images_from_metas(metas: &[PanoramaMeta]) -> Vec<CocoImage> {
    let mut sorted: Vec<&PanoramaMeta> = metas.iter().collect();
    sorted.sort_by(|a, b| a.pano_id.cmp(&b.pano_id));
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, m)| CocoImage {
            id: i as u64 + 1,
            file_name: m.pano_id.clone(),
            pano_id: Some(m.pano_id.clone()),
            width: m.width,
            height: m.height,
        })
        .collect()
}

impl CocoDataset {
    /// Builds a dataset from labelled boxes, one image per panorama in `metas`.
    pub fn from_boxes<'a>(
        metas: &[PanoramaMeta],
        categories: Vec<CocoCategory>,
        boxes: impl IntoIterator<Item = (&'a str, BoxXywh, CategoryId, Option<f64>, Option<String>, Option<f64>)>,
    ) -> Self {
        let images = images_from_metas(metas);
        let ids: BTreeMap<&str, u64> = images.iter().map(|im| (im.key(), im.id)).collect();
        let annotations = boxes
            .into_iter()
            .filter_map(|(pano, bbox, category_id, score, building_id, iou_x)| {
                let image_id = *ids.get(pano)?;
                Some((image_id, bbox, category_id, score, building_id, iou_x))
            })
            .enumerate()
            .map(|(i, (image_id, bbox, category_id, score, building_id, iou_x))| CocoAnnotation {
                id: i as u64 + 1,
                image_id,
                bbox: bbox.to_array(),
                area: bbox.area(),
                category_id,
                iscrowd: 0,
                score,
                building_id,
                iou_x,
            })
            .collect();
        CocoDataset {
            info: None,
            images,
            annotations,
            categories,
        }
    }

    pub fn from_coarse(metas: &[PanoramaMeta], mapping: &CategoryMapping, coarse: &[CoarseAnnotation]) -> Self {
        Self::from_boxes(
            metas,
            categories_from_mapping(mapping),
            coarse.iter().map(|a| {
                (
                    a.pano_id.as_str(),
                    a.bbox,
                    a.category,
                    Some(a.score),
                    Some(a.building_id.clone()),
                    Some(a.iou_x),
                )
            }),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let text = read_text(path.as_ref())?;
        serde_json::from_str(&text).map_err(|e| crate::ingest::parse_error(&text, 0, 0, &e))
    }

    /// Boxes keyed by panorama; annotations without a score get 1.0.
    pub fn to_annotation_set(&self) -> AnnotationSet {
        let by_id: BTreeMap<u64, &CocoImage> = self.images.iter().map(|im| (im.id, im)).collect();
        let boxes = self
            .annotations
            .iter()
            .filter_map(|a| {
                let im = by_id.get(&a.image_id)?;
                Some(LabeledBox {
                    pano_id: im.key().to_string(),
                    bbox: BoxXywh::from_array(a.bbox),
                    category: a.category_id,
                    score: a.score.unwrap_or(1.0),
                })
            })
            .collect();
        AnnotationSet {
            boxes,
            image_widths: self.images.iter().map(|im| (im.key().to_string(), im.width as f64)).collect(),
        }
    }
}

/// Reads predictions either as a full COCO dataset or as a COCO results
/// array of `{pano_id | image_id, bbox, score, category_id}`.
pub fn parse_predictions(text: &str) -> Result<AnnotationSet, IngestError> {
    let doc = parse_json_value(text)?;
    match doc {
        Value::Array(records) => {
            let mut boxes = Vec::with_capacity(records.len());
            for (i, r) in records.iter().enumerate() {
                let bad = |what: &str| IngestError::Structure(format!("prediction {i}: {what}"));
                let obj = r.as_object().ok_or_else(|| bad("not an object"))?;
                let pano = crate::ingest::id_field(obj, "pano_id")
                    .or_else(|| crate::ingest::id_field(obj, "image_id"))
                    .ok_or_else(|| bad("missing pano_id"))?;
                let bbox: [f64; 4] = serde_json::from_value(obj.get("bbox").cloned().unwrap_or(Value::Null))
                    .map_err(|_| bad("bbox must be four numbers"))?;
                let category = obj
                    .get("category_id")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| bad("missing category_id"))?;
                boxes.push(LabeledBox {
                    pano_id: pano,
                    bbox: BoxXywh::from_array(bbox),
                    category: CategoryId(category as u32),
                    score: obj.get("score").and_then(Value::as_f64).unwrap_or(1.0),
                });
            }
            Ok(AnnotationSet {
                boxes,
                image_widths: BTreeMap::new(),
            })
        }
        other => {
            let ds: CocoDataset =
                serde_json::from_value(other).map_err(|e| IngestError::Structure(format!("not a COCO dataset: {e}")))?;
            Ok(ds.to_annotation_set())
        }
    }
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<AnnotationSet, IngestError> {
    parse_predictions(&read_text(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(id: &str) -> PanoramaMeta {
        PanoramaMeta {
            pano_id: id.into(),
            lat: 0.0,
            lon: 0.0,
            north_px: 0.0,
            width: 2048,
            height: 1024,
        }
    }

    #[test]
    fn coarse_round_trip_through_coco() {
        let mapping = CategoryMapping::numbered("t", "C", 3);
        let coarse = vec![CoarseAnnotation {
            pano_id: "b".into(),
            bbox: BoxXywh::new(2000.0, 10.0, 100.0, 50.0),
            category: CategoryId(3),
            building_id: "bld".into(),
            iou_x: 0.8,
            score: 0.7,
            detection_index: 0,
        }];
        let ds = CocoDataset::from_coarse(&[meta("b"), meta("a")], &mapping, &coarse);
        assert_eq!(ds.images[0].file_name, "a");
        assert_eq!(ds.annotations[0].image_id, 2);
        assert_eq!(ds.categories.len(), 3);
        let text = serde_json::to_string(&ds).unwrap();
        let set = parse_predictions(&text).unwrap();
        assert_eq!(set.boxes.len(), 1);
        assert_eq!(set.boxes[0].pano_id, "b");
        assert_eq!(set.boxes[0].score, 0.7);
        assert_eq!(set.image_widths["b"], 2048.0);
    }

    #[test]
    fn results_array_predictions() {
        let set = parse_predictions(r#"[{"pano_id":"a","bbox":[1,2,3,4],"score":0.5,"category_id":2}]"#).unwrap();
        assert_eq!(set.boxes[0].category, CategoryId(2));
        assert!(parse_predictions(r#"[{"pano_id":"a","bbox":[1,2,3,4]}]"#).is_err());
    }
}

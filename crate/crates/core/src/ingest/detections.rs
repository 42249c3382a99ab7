use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{id_field, parse_json_value, read_text, IngestError, LoadReport};
use crate::pixel::BoxXywh;

/// A facade box from the detector. The detector's category is discarded on
/// ingest; only position and confidence survive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub pano_id: String,
    pub bbox: BoxXywh,
    pub score: f64,
}

/// Detections grouped by panorama, file order kept within each group.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetectionSet {
    pub groups: BTreeMap<String, Vec<DetectionBox>>,
}

impl DetectionSet {
    pub fn from_boxes(boxes: impl IntoIterator<Item = DetectionBox>) -> Self {
        let mut groups: BTreeMap<String, Vec<DetectionBox>> = BTreeMap::new();
        for b in boxes {
            groups.entry(b.pano_id.clone()).or_default().push(b);
        }
        DetectionSet { groups }
    }

    pub fn get(&self, pano_id: &str) -> &[DetectionBox] {
        self.groups.get(pano_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DetectionBox> {
        self.groups.values().flatten()
    }
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<(DetectionSet, LoadReport), IngestError> {
    parse_detections(&read_text(path.as_ref())?)
}

/// Reads a COCO-results-style array of `{pano_id | image_id, bbox, score}`.
/// Any `category_id` (or other extra field) is ignored.
pub fn parse_detections(text: &str) -> Result<(DetectionSet, LoadReport), IngestError> {
    let doc = parse_json_value(text)?;
    let records = doc
        .as_array()
        .ok_or_else(|| IngestError::Structure("expected a JSON array of detections".into()))?;
    let mut report = LoadReport {
        input: records.len(),
        ..Default::default()
    };
    let mut boxes = Vec::new();
    for (index, record) in records.iter().enumerate() {
        match parse_record(record) {
            Ok(b) => {
                report.accepted += 1;
                boxes.push(b);
            }
            Err((id, reason)) => report.reject(index, id, reason),
        }
    }
    Ok((DetectionSet::from_boxes(boxes), report))
}

fn parse_record(record: &Value) -> Result<DetectionBox, (Option<String>, String)> {
    let obj = record
        .as_object()
        .ok_or_else(|| (None, "detection is not an object".to_string()))?;
    let pano_id = id_field(obj, "pano_id")
        .or_else(|| id_field(obj, "image_id"))
        .ok_or_else(|| (None, "missing pano_id / image_id".to_string()))?;
    let fail = |reason: String| (Some(pano_id.clone()), reason);
    let bbox: Vec<f64> = obj
        .get("bbox")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 4)
        .and_then(|a| a.iter().map(Value::as_f64).collect())
        .ok_or_else(|| fail("bbox must be four numbers".into()))?;
    let score = obj
        .get("score")
        .and_then(Value::as_f64)
        .ok_or_else(|| fail("missing score".into()))?;
    let [x, y, w, h] = [bbox[0], bbox[1], bbox[2], bbox[3]];
    if !(w > 0.0 && h > 0.0) {
        return Err(fail(format!("non-positive box size {w}x{h}")));
    }
    if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
        return Err(fail("non-finite box coordinate".into()));
    }
    if y < 0.0 {
        return Err(fail(format!("box top {y} above the image")));
    }
    if !(0.0..=1.0).contains(&score) {
        return Err(fail(format!("score {score} outside [0, 1]")));
    }
    Ok(DetectionBox {
        pano_id,
        bbox: BoxXywh::new(x, y, w, h),
        score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_by_panorama() {
        let text = r#"[
            {"pano_id":"a","bbox":[1,2,3,4],"score":0.9},
            {"pano_id":"b","bbox":[1,2,3,4],"score":0.5},
            {"pano_id":"a","bbox":[5,2,3,4],"score":0.7,"category_id":3}
        ]"#;
        let (set, report) = parse_detections(text).unwrap();
        assert_eq!(set.get("a").len(), 2);
        assert_eq!(set.get("b").len(), 1);
        assert_eq!(set.get("a")[1].bbox.x, 5.0);
        assert_eq!(report.accepted, 3);
    }

    #[test]
    fn category_is_discarded() {
        let with = r#"[{"pano_id":"a","bbox":[1,2,3,4],"score":0.9,"category_id":3}]"#;
        let without = r#"[{"pano_id":"a","bbox":[1,2,3,4],"score":0.9}]"#;
        assert_eq!(parse_detections(with).unwrap().0, parse_detections(without).unwrap().0);
    }

    #[test]
    fn invalid_records_rejected() {
        let text = r#"[
            {"pano_id":"a","bbox":[10,10,-5,20],"score":0.9},
            {"pano_id":"a","bbox":[10,10,5,20],"score":1.2},
            {"image_id":7,"bbox":[10,10,5,20],"score":0.4}
        ]"#;
        let (set, report) = parse_detections(text).unwrap();
        assert_eq!(report.rejected.len(), 2);
        assert!(report.is_balanced());
        assert_eq!(set.get("7").len(), 1);
    }
}

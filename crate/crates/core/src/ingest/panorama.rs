use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_error, read_text, IngestError, LoadReport};
use crate::projection::GeoPoint;

/// Capture position and horizontal orientation of one panorama.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoramaMeta {
    pub pano_id: String,
    pub lat: f64,
    pub lon: f64,
    /// Pixel column facing true north, in `[0, width)`; may be fractional.
    pub north_px: f64,
    pub width: u32,
    pub height: u32,
}

impl PanoramaMeta {
    pub fn position(&self) -> GeoPoint {
        GeoPoint::new(self.lat, self.lon)
    }

    fn check(&self) -> Result<(), String> {
        if !(self.lat.is_finite() && (-90.0..=90.0).contains(&self.lat)) {
            return Err(format!("latitude {} out of range", self.lat));
        }
        if !(self.lon.is_finite() && (-180.0..=180.0).contains(&self.lon)) {
            return Err(format!("longitude {} out of range", self.lon));
        }
        if self.width == 0 || self.height == 0 {
            return Err("zero image dimension".into());
        }
        if !(self.north_px >= 0.0 && self.north_px < self.width as f64) {
            return Err(format!("north_px {} outside [0, {})", self.north_px, self.width));
        }
        Ok(())
    }
}

pub fn load_panorama_meta(path: impl AsRef<Path>) -> Result<(Vec<PanoramaMeta>, LoadReport), IngestError> {
    parse_panorama_meta(&read_text(path.as_ref())?)
}

/// Reads JSON lines, one panorama per non-blank line.
///
/// Syntax errors abort the load. Records with a missing field or an
/// out-of-range value are rejected individually. A repeated `pano_id` makes
/// the join key ambiguous and fails the whole file.
pub fn parse_panorama_meta(text: &str) -> Result<(Vec<PanoramaMeta>, LoadReport), IngestError> {
    let mut report = LoadReport::default();
    let mut metas = Vec::new();
    let mut seen = BTreeSet::new();
    let mut offset = 0;
    for (line_no, line) in text.split_inclusive('\n').enumerate() {
        let line_offset = offset;
        offset += line.len();
        if line.trim().is_empty() {
            continue;
        }
        let index = report.input;
        report.input += 1;
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| parse_error(line, line_offset, line_no, &e))?;
        let id = value.get("pano_id").and_then(|v| v.as_str()).map(str::to_string);
        if let Some(id) = &id {
            if !seen.insert(id.clone()) {
                return Err(IngestError::DuplicatePanorama(id.clone()));
            }
        }
        let meta: PanoramaMeta = match serde_json::from_value(value) {
            Ok(m) => m,
            Err(e) => {
                report.reject(index, id, e.to_string());
                continue;
            }
        };
        if let Err(reason) = meta.check() {
            report.reject(index, id, reason);
            continue;
        }
        if meta.width != 2 * meta.height {
            let msg = format!(
                "{}: {}x{} is not a 2:1 equirectangular frame",
                meta.pano_id, meta.width, meta.height
            );
            log::warn!("{msg}");
            report.warnings.push(msg);
        }
        report.accepted += 1;
        metas.push(meta);
    }
    Ok((metas, report))
}

/// Serializes metas back to JSON lines.
pub fn to_json_lines(metas: &[PanoramaMeta]) -> String {
    let mut out = String::new();
    for m in metas {
        out.push_str(&serde_json::to_string(m).expect("PanoramaMeta serializes"));
        out.push('\n');
    }
    out
}

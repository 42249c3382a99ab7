//! Parsing and validation of every external input.
//!
//! Each loader separates two failure classes: a document that cannot be
//! parsed at all is an [`IngestError`]; an individual record that parses but
//! breaks a domain invariant becomes a [`Rejection`] in the [`LoadReport`]
//! and the load continues.

mod detections;
mod footprints;
mod mapping;
mod panorama;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use detections::{load_detections, parse_detections, DetectionBox, DetectionSet};
pub use footprints::{load_footprints, parse_footprints, validate_ring, BuildingFootprint, FootprintSet};
pub use mapping::CategoryMapping;
pub use panorama::{load_panorama_meta, parse_panorama_meta, to_json_lines, PanoramaMeta};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unexpected document structure: {0}")]
    Structure(String),
    #[error("duplicate pano_id {0:?}")]
    DuplicatePanorama(String),
    #[error("invalid category mapping: {0}")]
    Mapping(String),
}

/// One input record that was parsed but refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// Zero-based position of the record in its file.
    pub index: usize,
    pub id: Option<String>,
    pub reason: String,
}

/// Per-file accounting: `accepted + rejected.len() == input`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub input: usize,
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl LoadReport {
    fn reject(&mut self, index: usize, id: Option<String>, reason: impl Into<String>) {
        let reason = reason.into();
        log::debug!("record {index} ({id:?}) rejected: {reason}");
        self.rejected.push(Rejection { index, id, reason });
    }

    pub fn is_balanced(&self) -> bool {
        self.accepted + self.rejected.len() == self.input
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Byte offset of a 1-based (line, column) position in `text`.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len();
    }
    text.len()
}

pub(crate) fn parse_error(text: &str, base_offset: usize, base_line: usize, err: &serde_json::Error) -> IngestError {
    let line = err.line();
    let column = err.column();
    IngestError::Parse {
        offset: base_offset + byte_offset(text, line, column),
        line: base_line + line,
        column,
        message: err.to_string(),
    }
}

pub(crate) fn parse_json_value(text: &str) -> Result<serde_json::Value, IngestError> {
    serde_json::from_str(text).map_err(|e| parse_error(text, 0, 0, &e))
}

/// Reads a string-or-integer identifier field.
pub(crate) fn id_field(obj: &serde_json::Map<String, serde_json::Value>, key: &str) -> Option<String> {
    match obj.get(key)? {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_error_reports_byte_offset() {
        let text = "[\n  {\"a\": 1},\n  {\"a\": }\n]";
        let err = parse_json_value(text).unwrap_err();
        match err {
            IngestError::Parse { offset, line, .. } => {
                assert_eq!(line, 3);
                assert_eq!(&text[offset..offset + 1], "}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

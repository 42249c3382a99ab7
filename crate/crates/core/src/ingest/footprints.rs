use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{id_field, parse_json_value, read_text, CategoryMapping, IngestError, LoadReport};
use crate::projection::{meters_per_degree, GeoPoint};
use crate::CategoryId;

/// A building outline with its function category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingFootprint {
    pub building_id: String,
    /// Closed outer ring: the first vertex is repeated at the end.
    pub ring: Vec<GeoPoint>,
    pub raw_label: String,
    pub category: CategoryId,
}

impl BuildingFootprint {
    /// Ring without the closing vertex.
    pub fn open_ring(&self) -> &[GeoPoint] {
        &self.ring[..self.ring.len().saturating_sub(1)]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FootprintSet {
    pub footprints: Vec<BuildingFootprint>,
}

impl FootprintSet {
    pub fn new(footprints: Vec<BuildingFootprint>) -> Self {
        Self { footprints }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BuildingFootprint> {
        self.footprints.iter()
    }

    pub fn len(&self) -> usize {
        self.footprints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.footprints.is_empty()
    }

    /// GeoJSON FeatureCollection that [`parse_footprints`] reads back unchanged.
    pub fn to_geojson(&self) -> Value {
        let features: Vec<Value> = self
            .footprints
            .iter()
            .map(|fp| {
                let coords: Vec<Value> = fp.ring.iter().map(|p| serde_json::json!([p.lon, p.lat])).collect();
                serde_json::json!({
                    "type": "Feature",
                    "properties": { "building_id": fp.building_id, "label": fp.raw_label },
                    "geometry": { "type": "Polygon", "coordinates": [coords] },
                })
            })
            .collect();
        serde_json::json!({ "type": "FeatureCollection", "features": features })
    }
}

pub fn load_footprints(
    path: impl AsRef<Path>,
    mapping: &CategoryMapping,
) -> Result<(FootprintSet, LoadReport), IngestError> {
    parse_footprints(&read_text(path.as_ref())?, mapping)
}

/// Reads a GeoJSON FeatureCollection of Polygon / MultiPolygon features.
///
/// Holes are dropped. Each MultiPolygon part becomes its own footprint with
/// id `<building_id>#k`. A feature with any invalid part is rejected whole.
pub fn parse_footprints(text: &str, mapping: &CategoryMapping) -> Result<(FootprintSet, LoadReport), IngestError> {
    let doc = parse_json_value(text)?;
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .filter(|_| doc.get("type").and_then(Value::as_str) == Some("FeatureCollection"))
        .ok_or_else(|| IngestError::Structure("expected a GeoJSON FeatureCollection".into()))?;

    let mut report = LoadReport {
        input: features.len(),
        ..Default::default()
    };
    let mut out = Vec::new();
    for (index, feature) in features.iter().enumerate() {
        match parse_feature(feature, mapping) {
            Ok(mut fps) => {
                report.accepted += 1;
                out.append(&mut fps);
            }
            Err((id, reason)) => report.reject(index, id, reason),
        }
    }
    Ok((FootprintSet::new(out), report))
}

type FeatureError = (Option<String>, String);

fn parse_feature(feature: &Value, mapping: &CategoryMapping) -> Result<Vec<BuildingFootprint>, FeatureError> {
    let empty = serde_json::Map::new();
    let props = feature.get("properties").and_then(Value::as_object).unwrap_or(&empty);
    let id = id_field(props, "building_id");
    let fail = |reason: String| (id.clone(), reason);

    let building_id = id.clone().ok_or_else(|| fail("missing building_id property".into()))?;
    let label = props
        .get("label")
        .and_then(Value::as_str)
        .ok_or_else(|| fail("missing label property".into()))?;
    let category = mapping
        .resolve(label)
        .ok_or_else(|| fail(format!("label {label:?} not in {} mapping and no default", mapping.city)))?;

    let geometry = feature
        .get("geometry")
        .and_then(Value::as_object)
        .ok_or_else(|| fail("missing geometry".into()))?;
    let coords = geometry.get("coordinates").ok_or_else(|| fail("missing coordinates".into()))?;
    let outer_ring = |polygon: &Value| -> Result<Vec<GeoPoint>, String> {
        let ring = polygon
            .as_array()
            .and_then(|rings| rings.first())
            .ok_or("polygon has no outer ring")?;
        validate_ring(&ring_positions(ring)?)
    };

    let make = |building_id: String, ring: Vec<GeoPoint>| BuildingFootprint {
        building_id,
        ring,
        raw_label: label.to_string(),
        category,
    };
    match geometry.get("type").and_then(Value::as_str) {
        Some("Polygon") => Ok(vec![make(building_id, outer_ring(coords).map_err(fail)?)]),
        Some("MultiPolygon") => {
            let parts = coords.as_array().ok_or_else(|| fail("MultiPolygon coordinates not an array".into()))?;
            if parts.is_empty() {
                return Err(fail("empty MultiPolygon".into()));
            }
            parts
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    outer_ring(p)
                        .map(|ring| make(format!("{building_id}#{k}"), ring))
                        .map_err(|e| fail(format!("part {k}: {e}")))
                })
                .collect()
        }
        other => Err(fail(format!("unsupported geometry type {other:?}"))),
    }
}

fn ring_positions(ring: &Value) -> Result<Vec<GeoPoint>, String> {
    let arr = ring.as_array().ok_or("ring is not an array")?;
    arr.iter()
        .map(|pos| {
            let p = pos.as_array().filter(|p| p.len() >= 2).ok_or("position is not [lon, lat]")?;
            let lon = p[0].as_f64().ok_or("non-numeric longitude")?;
            let lat = p[1].as_f64().ok_or("non-numeric latitude")?;
            if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
                return Err(format!("coordinate ({lon}, {lat}) outside WGS84 range"));
            }
            Ok(GeoPoint { lat, lon })
        })
        .collect()
}

/// Checks a closed ring: at least three distinct vertices, nonzero area and
/// no self-intersection. Consecutive duplicate vertices are collapsed.
pub fn validate_ring(positions: &[GeoPoint]) -> Result<Vec<GeoPoint>, String> {
    if positions.len() < 2 || positions.first() != positions.last() {
        return Err("ring is not closed".into());
    }
    let mut open: Vec<GeoPoint> = Vec::with_capacity(positions.len());
    for &p in &positions[..positions.len() - 1] {
        if open.last() != Some(&p) {
            open.push(p);
        }
    }
    while open.len() > 1 && open.first() == open.last() {
        open.pop();
    }
    if open.len() < 3 {
        return Err(format!("ring has {} distinct vertices, need at least 3", open.len()));
    }

    // Planar metres relative to the first vertex; plenty for shape checks.
    let k = meters_per_degree();
    let c = open[0].lat.to_radians().cos();
    let pts: Vec<(f64, f64)> = open
        .iter()
        .map(|p| ((p.lon - open[0].lon) * c * k, (p.lat - open[0].lat) * k))
        .collect();
    let n = pts.len();
    for i in 0..n {
        let (a1, a2) = (pts[i], pts[(i + 1) % n]);
        for j in i + 1..n {
            let (b1, b2) = (pts[j], pts[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Shared vertex is fine; folding back along the same line is not.
                let shared = if j == i + 1 { a2 } else { a1 };
                let (u, v) = if j == i + 1 { (a1, b2) } else { (a2, b1) };
                let d1 = (u.0 - shared.0, u.1 - shared.1);
                let d2 = (v.0 - shared.0, v.1 - shared.1);
                let cross = d1.0 * d2.1 - d1.1 * d2.0;
                let dot = d1.0 * d2.0 + d1.1 * d2.1;
                if cross.abs() <= 1e-12 * (d1.0.hypot(d1.1) * d2.0.hypot(d2.1)) && dot > 0.0 {
                    return Err(format!("ring folds back on itself at vertex {}", (i + 1) % n));
                }
            } else if segments_touch(a1, a2, b1, b2) {
                return Err(format!("ring self-intersects between edges {i} and {j}"));
            }
        }
    }
    let twice_area: f64 = (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    if twice_area.abs() < 1e-6 {
        return Err("ring has zero area".into());
    }
    let mut ring = open;
    ring.push(ring[0]);
    Ok(ring)
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed segment intersection, touching included.
fn segments_touch(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

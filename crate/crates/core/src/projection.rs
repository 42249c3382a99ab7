//! Geodetic, local-plane, heading, and pixel-column conversions.
//!
//! The Earth model is the small-angle equirectangular one: a degree of
//! latitude is `pi * R_E / 180` kilometres everywhere, a degree of longitude
//! shrinks by `cos(lat)` of the camera. Conversions refuse to run beyond
//! [`MAX_LOCAL_RANGE_M`], where that approximation stops being sub-0.1%.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{FootprintSet, PanoramaMeta};
use crate::pixel::wrap_to;
use crate::raytrace::WallSegment;
use crate::CategoryId;

/// Mean Earth radius in kilometres used by the local-plane conversion.
pub const EARTH_RADIUS_KM: f64 = 6371.393;

/// Largest camera-to-point distance the local plane accepts.
pub const MAX_LOCAL_RANGE_M: f64 = 10_000.0;

/// Ground distance of one degree of latitude, in metres.
pub fn meters_per_degree() -> f64 {
    PI * EARTH_RADIUS_KM / 180.0 * 1e3
}

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("point lies {distance_m:.1} m from the origin, beyond the {MAX_LOCAL_RANGE_M} m local-plane limit")]
    OutOfRange { distance_m: f64 },
    #[error("clip radius must be positive and at most {MAX_LOCAL_RANGE_M} m, got {0}")]
    InvalidRadius(f64),
}

/// WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Metres east (`x`) and north (`y`) of the camera.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalXY {
    pub x: f64,
    pub y: f64,
}

impl LocalXY {
    pub const ORIGIN: LocalXY = LocalXY { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: LocalXY) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: LocalXY) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for LocalXY {
    type Output = LocalXY;
    fn add(self, o: LocalXY) -> LocalXY {
        LocalXY::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for LocalXY {
    type Output = LocalXY;
    fn sub(self, o: LocalXY) -> LocalXY {
        LocalXY::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for LocalXY {
    type Output = LocalXY;
    fn mul(self, s: f64) -> LocalXY {
        LocalXY::new(self.x * s, self.y * s)
    }
}

/// Heading in degrees clockwise from true north, normalized to `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SweepAngle(f64);

impl SweepAngle {
    pub fn new(degrees: f64) -> Self {
        SweepAngle(wrap_to(degrees, 360.0))
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    /// Unit vector of the line of sight in the local plane.
    pub fn direction(self) -> LocalXY {
        let r = self.0.to_radians();
        LocalXY::new(r.sin(), r.cos())
    }
}

/// Which way increasing heading moves across the panorama.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadingConvention {
    /// Clockwise from north is increasing pixel x.
    #[default]
    Clockwise,
    /// Clockwise from north is decreasing pixel x (`--flip-heading`).
    Flipped,
}

impl HeadingConvention {
    pub fn from_flip(flip: bool) -> Self {
        if flip {
            HeadingConvention::Flipped
        } else {
            HeadingConvention::Clockwise
        }
    }

    fn sign(self) -> f64 {
        match self {
            HeadingConvention::Clockwise => 1.0,
            HeadingConvention::Flipped => -1.0,
        }
    }
}

fn normalize_lon_delta(d: f64) -> f64 {
    let w = wrap_to(d + 180.0, 360.0) - 180.0;
    if w == -180.0 && d > 0.0 {
        180.0
    } else {
        w
    }
}

pub fn geodetic_to_local(origin: GeoPoint, point: GeoPoint) -> Result<LocalXY, ProjectionError> {
    let k = meters_per_degree();
    let dlon = normalize_lon_delta(point.lon - origin.lon);
    let dlat = point.lat - origin.lat;
    let p = LocalXY::new(dlon * origin.lat.to_radians().cos() * k, dlat * k);
    let d = p.norm();
    if !(d <= MAX_LOCAL_RANGE_M) {
        return Err(ProjectionError::OutOfRange { distance_m: d });
    }
    Ok(p)
}

pub fn local_to_geodetic(origin: GeoPoint, p: LocalXY) -> Result<GeoPoint, ProjectionError> {
    let d = p.norm();
    if !(d <= MAX_LOCAL_RANGE_M) {
        return Err(ProjectionError::OutOfRange { distance_m: d });
    }
    let k = meters_per_degree();
    let lat = origin.lat + p.y / k;
    let lon = origin.lon + p.x / (origin.lat.to_radians().cos() * k);
    let lon = if (-180.0..=180.0).contains(&lon) {
        lon
    } else {
        normalize_lon_delta(lon)
    };
    Ok(GeoPoint { lat, lon })
}

/// Fractional pixel column of heading `theta`.
pub fn angle_to_pixel(theta: SweepAngle, meta: &PanoramaMeta, convention: HeadingConvention) -> f64 {
    let width = meta.width as f64;
    wrap_to(meta.north_px + convention.sign() * theta.degrees() / 360.0 * width, width)
}

/// Heading seen at pixel column `x`; inverse of [`angle_to_pixel`].
pub fn pixel_to_angle(x: f64, meta: &PanoramaMeta, convention: HeadingConvention) -> SweepAngle {
    let width = meta.width as f64;
    SweepAngle::new(convention.sign() * (x - meta.north_px) / width * 360.0)
}

/// Converts a north rotation given in degrees into the `north_px` column,
/// for metadata sources that store the rotation as an angle.
pub fn north_px_from_degrees(rotation_deg: f64, width: u32) -> f64 {
    wrap_to(rotation_deg / 360.0 * width as f64, width as f64)
}

/// One footprint ring in camera-centred metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBuilding {
    pub building_id: String,
    pub category: CategoryId,
    /// Open ring (closing vertex not repeated).
    pub ring: Vec<LocalXY>,
}

/// Wall segments around one camera, clipped to a disc of radius `radius_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalScene {
    pub origin: GeoPoint,
    pub radius_m: f64,
    pub buildings: Vec<LocalBuilding>,
    pub segments: Vec<WallSegment>,
    /// Set when the camera stands inside a footprint; holds that building's id.
    pub degenerate: Option<String>,
}

impl LocalScene {
    /// Builds a scene from local rings. Every building is kept; clipping is
    /// the caller's business.
    pub fn from_buildings(origin: GeoPoint, radius_m: f64, buildings: Vec<LocalBuilding>) -> Self {
        let mut segments = Vec::new();
        let mut degenerate = None;
        for b in &buildings {
            if degenerate.is_none() && point_in_ring(LocalXY::ORIGIN, &b.ring) {
                degenerate = Some(b.building_id.clone());
            }
            let n = b.ring.len();
            for i in 0..n {
                let a = b.ring[i];
                let c = b.ring[(i + 1) % n];
                if (c - a).norm() > 1e-6 {
                    segments.push(WallSegment {
                        a,
                        b: c,
                        building_id: b.building_id.clone(),
                        category: b.category,
                    });
                }
            }
        }
        LocalScene {
            origin,
            radius_m,
            buildings,
            segments,
            degenerate,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate.is_some()
    }
}

/// Shortest distance from the origin to the closed segment `[a, b]`.
pub fn origin_segment_distance(a: LocalXY, b: LocalXY) -> f64 {
    let e = b - a;
    let len2 = e.dot(e);
    if len2 == 0.0 {
        return a.norm();
    }
    let t = (-a.dot(e) / len2).clamp(0.0, 1.0);
    (a + e * t).norm()
}

/// Even-odd crossing test; points on the boundary may fall either way.
pub fn point_in_ring(p: LocalXY, ring: &[LocalXY]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (ring[i], ring[j]);
        if (pi.y > p.y) != (pj.y > p.y) {
            let x_cross = pj.x + (p.y - pj.y) / (pi.y - pj.y) * (pi.x - pj.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Collects every footprint whose outer ring meets the disc of radius
/// `radius_m` around the camera, as local-plane wall segments.
pub fn clip_scene(
    footprints: &FootprintSet,
    meta: &PanoramaMeta,
    radius_m: f64,
) -> Result<LocalScene, ProjectionError> {
    if !(radius_m > 0.0 && radius_m <= MAX_LOCAL_RANGE_M) {
        return Err(ProjectionError::InvalidRadius(radius_m));
    }
    let origin = meta.position();
    let k = meters_per_degree();
    // Coarse degree box around the disc, padded for the cos(lat) variation
    // across the box itself.
    let lat_pad = radius_m / k * 1.01 + 1e-9;
    let cos_lat = origin.lat.to_radians().cos().max(1e-6);
    let lon_pad = radius_m / (k * cos_lat) * 1.01 + 1e-9;

    let mut buildings = Vec::new();
    for fp in footprints.iter() {
        let (mut lat_lo, mut lat_hi, mut lon_lo, mut lon_hi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for v in &fp.ring {
            lat_lo = lat_lo.min(v.lat);
            lat_hi = lat_hi.max(v.lat);
            let dl = normalize_lon_delta(v.lon - origin.lon);
            lon_lo = lon_lo.min(dl);
            lon_hi = lon_hi.max(dl);
        }
        if lat_lo > origin.lat + lat_pad
            || lat_hi < origin.lat - lat_pad
            || lon_lo > lon_pad
            || lon_hi < -lon_pad
        {
            continue;
        }
        let ring: Result<Vec<LocalXY>, _> = fp.open_ring().iter().map(|&v| geodetic_to_local(origin, v)).collect();
        let Ok(ring) = ring else {
            log::debug!("footprint {} spans beyond the local-plane limit; skipped", fp.building_id);
            continue;
        };
        let n = ring.len();
        let touches_disc = (0..n).any(|i| origin_segment_distance(ring[i], ring[(i + 1) % n]) <= radius_m)
            || point_in_ring(LocalXY::ORIGIN, &ring);
        if touches_disc {
            buildings.push(LocalBuilding {
                building_id: fp.building_id.clone(),
                category: fp.category,
                ring,
            });
        }
    }
    Ok(LocalScene::from_buildings(origin, radius_m, buildings))
}

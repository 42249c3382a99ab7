//! Per-panorama visibility: which building each heading sees first.
//!
//! Walls are the finite edges of footprint rings. A heading ray is cast from
//! the camera every `step_deg` degrees; the nearest wall within the clip
//! radius owns that heading. Consecutive headings owned by the same building
//! merge into a [`VisibilityInterval`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::PanoramaMeta;
use crate::pixel::PixelSpan;
use crate::projection::{angle_to_pixel, origin_segment_distance, HeadingConvention, LocalScene, LocalXY, SweepAngle};
use crate::CategoryId;

/// Distances closer than this are treated as equal when picking the nearest wall.
pub const TIE_EPSILON_M: f64 = 1e-9;

/// Below this `|dir . normal|` the ray counts as parallel to the wall.
pub const PARALLEL_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("camera stands inside building {0}; scene is degenerate")]
    DegenerateScene(String),
    #[error("step {0} deg does not divide 360")]
    InvalidStep(f64),
}

/// One facade edge: endpoints in the local plane plus its owner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallSegment {
    pub a: LocalXY,
    pub b: LocalXY,
    pub building_id: String,
    pub category: CategoryId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub building_id: String,
    pub category: CategoryId,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaySample {
    pub theta: f64,
    pub hit: Option<Hit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaySweep {
    pub step_deg: f64,
    pub radius_m: f64,
    pub samples: Vec<RaySample>,
}

/// A maximal run of headings owned by one building.
///
/// `angle_lo` / `angle_hi` are the first and last grid headings of the run,
/// clockwise; `angle_hi < angle_lo` when the run crosses north. The pixel
/// fields run left to right on the panorama axis (and may cross its seam);
/// they are filled by [`intervals_to_pixel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityInterval {
    pub building_id: String,
    pub category: CategoryId,
    pub angle_lo: f64,
    pub angle_hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub px_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub px_hi: Option<f64>,
    pub min_distance: f64,
    /// Number of grid samples in the run.
    pub samples: usize,
}

impl VisibilityInterval {
    /// Clockwise angular extent from `angle_lo` to `angle_hi`.
    pub fn angular_width(&self) -> f64 {
        let w = (self.angle_hi - self.angle_lo).rem_euclid(360.0);
        if w >= 360.0 {
            0.0
        } else {
            w
        }
    }

    pub fn pixel_span(&self, width: f64) -> Option<PixelSpan> {
        Some(PixelSpan::from_endpoints(self.px_lo?, self.px_hi?, width))
    }
}

/// Distance along the ray `origin + t * dir` to the closed segment, if it
/// is hit at some `t > 0`.
///
/// The supporting line gives `t = (OP . n) / (dir . n)` for the unit normal
/// `n` and any point `P` on the wall; the foot of that intersection is then
/// checked against the segment's endpoints.
pub fn ray_wall_distance(origin: LocalXY, dir: LocalXY, seg: &WallSegment) -> Option<f64> {
    let edge = seg.b - seg.a;
    let len = edge.norm();
    if len == 0.0 {
        return None;
    }
    let normal = LocalXY::new(-edge.y / len, edge.x / len);
    let facing = dir.dot(normal);
    if facing.abs() < PARALLEL_EPSILON {
        return None;
    }
    let t = (seg.a - origin).dot(normal) / facing;
    if !(t > 0.0) {
        return None;
    }
    let foot = origin + dir * t;
    let u = (foot - seg.a).dot(edge) / (len * len);
    if (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Whether a candidate hit displaces the current best under the
/// nearest-wall rule with deterministic tie-breaking.
pub fn displaces(distance: f64, building_id: &str, best: Option<&Hit>) -> bool {
    match best {
        None => true,
        Some(b) => {
            if distance < b.distance - TIE_EPSILON_M {
                true
            } else if distance <= b.distance + TIE_EPSILON_M {
                building_id < b.building_id.as_str()
            } else {
                false
            }
        }
    }
}

/// Number of grid samples for `step_deg`, or an error if it does not divide 360.
pub fn sample_count(step_deg: f64) -> Result<usize, TraceError> {
    if !(step_deg > 0.0 && step_deg <= 360.0) {
        return Err(TraceError::InvalidStep(step_deg));
    }
    let n = 360.0 / step_deg;
    let rounded = n.round();
    if (n - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(TraceError::InvalidStep(step_deg));
    }
    Ok(rounded as usize)
}

/// Heading of grid sample `i` out of `n`. Computed as `360 i / n` so that
/// grids of different resolution agree bit-for-bit where they coincide.
pub fn grid_angle(i: usize, n: usize) -> f64 {
    360.0 * i as f64 / n as f64
}

fn nearest_hit<'a>(dir: LocalXY, radius: f64, segments: impl Iterator<Item = &'a WallSegment>) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for seg in segments {
        let Some(d) = ray_wall_distance(LocalXY::ORIGIN, dir, seg) else {
            continue;
        };
        if d > radius {
            continue;
        }
        if displaces(d, &seg.building_id, best.as_ref()) {
            best = Some(Hit {
                building_id: seg.building_id.clone(),
                category: seg.category,
                distance: d,
            });
        }
    }
    best
}

/// Brute-force sweep: every ray against every wall.
pub fn trace_sweep(scene: &LocalScene, step_deg: f64) -> Result<RaySweep, TraceError> {
    if let Some(id) = &scene.degenerate {
        return Err(TraceError::DegenerateScene(id.clone()));
    }
    let n = sample_count(step_deg)?;
    let samples = (0..n)
        .map(|i| {
            let theta = grid_angle(i, n);
            let dir = SweepAngle::new(theta).direction();
            RaySample {
                theta,
                hit: nearest_hit(dir, scene.radius_m, scene.segments.iter()),
            }
        })
        .collect();
    Ok(RaySweep {
        step_deg,
        radius_m: scene.radius_m,
        samples,
    })
}

/// Angular buckets over the sweep grid: for each grid heading, the walls
/// whose angular footprint (as seen from the camera) may cover it.
///
/// Walls are visited in their scene order, so the indexed sweep makes the
/// same comparisons as [`trace_sweep`] minus the ones that cannot hit.
#[derive(Debug, Clone)]
pub struct SweepIndex {
    n: usize,
    buckets: Vec<Vec<u32>>,
}

impl SweepIndex {
    pub fn build(scene: &LocalScene, step_deg: f64) -> Result<Self, TraceError> {
        let n = sample_count(step_deg)?;
        let mut buckets = vec![Vec::new(); n];
        for (k, seg) in scene.segments.iter().enumerate() {
            let near = origin_segment_distance(seg.a, seg.b);
            if near > scene.radius_m + 1e-6 {
                continue;
            }
            if near < 1e-6 {
                buckets.iter_mut().for_each(|b| b.push(k as u32));
                continue;
            }
            let ha = heading_of(seg.a);
            let hb = heading_of(seg.b);
            let diff = (hb - ha).rem_euclid(360.0);
            let (start, span) = if diff <= 180.0 { (ha, diff) } else { (hb, 360.0 - diff) };
            let first = (start / step_deg).floor() as i64 - 1;
            let last = ((start + span) / step_deg).ceil() as i64 + 1;
            let count = ((last - first + 1) as usize).min(n);
            for j in 0..count {
                let i = (first + j as i64).rem_euclid(n as i64) as usize;
                buckets[i].push(k as u32);
            }
        }
        Ok(SweepIndex { n, buckets })
    }

    pub fn candidates(&self, sample: usize) -> &[u32] {
        &self.buckets[sample]
    }
}

fn heading_of(p: LocalXY) -> f64 {
    p.x.atan2(p.y).to_degrees().rem_euclid(360.0)
}

/// Sweep accelerated by a [`SweepIndex`]; produces the same samples as
/// [`trace_sweep`] bit for bit.
pub fn trace_sweep_indexed(scene: &LocalScene, step_deg: f64) -> Result<RaySweep, TraceError> {
    if let Some(id) = &scene.degenerate {
        return Err(TraceError::DegenerateScene(id.clone()));
    }
    let index = SweepIndex::build(scene, step_deg)?;
    let n = index.n;
    let samples = (0..n)
        .map(|i| {
            let theta = grid_angle(i, n);
            let dir = SweepAngle::new(theta).direction();
            let segs = index.candidates(i).iter().map(|&k| &scene.segments[k as usize]);
            RaySample {
                theta,
                hit: nearest_hit(dir, scene.radius_m, segs),
            }
        })
        .collect();
    Ok(RaySweep {
        step_deg,
        radius_m: scene.radius_m,
        samples,
    })
}

/// Merges consecutive samples owned by the same building, wrapping around
/// north. Output is ordered by the run's first grid index.
pub fn intervals_from_sweep(sweep: &RaySweep) -> Vec<VisibilityInterval> {
    let samples = &sweep.samples;
    let n = samples.len();
    let owner = |i: usize| samples[i].hit.as_ref().map(|h| h.building_id.as_str());
    if n == 0 {
        return Vec::new();
    }
    // Start at a run boundary so no run straddles the iteration start.
    let start = (0..n).find(|&i| owner(i) != owner((i + n - 1) % n));
    let Some(start) = start else {
        return match &samples[0].hit {
            None => Vec::new(),
            Some(h) => vec![VisibilityInterval {
                building_id: h.building_id.clone(),
                category: h.category,
                angle_lo: samples[0].theta,
                angle_hi: samples[n - 1].theta,
                px_lo: None,
                px_hi: None,
                min_distance: samples.iter().filter_map(|s| s.hit.as_ref()).map(|h| h.distance).fold(f64::INFINITY, f64::min),
                samples: n,
            }],
        };
    };

    let mut runs: Vec<(usize, VisibilityInterval)> = Vec::new();
    let mut j = 0;
    while j < n {
        let i = (start + j) % n;
        let Some(hit) = &samples[i].hit else {
            j += 1;
            continue;
        };
        let mut iv = VisibilityInterval {
            building_id: hit.building_id.clone(),
            category: hit.category,
            angle_lo: samples[i].theta,
            angle_hi: samples[i].theta,
            px_lo: None,
            px_hi: None,
            min_distance: hit.distance,
            samples: 1,
        };
        j += 1;
        while j < n {
            let k = (start + j) % n;
            match &samples[k].hit {
                Some(h) if h.building_id == iv.building_id => {
                    iv.angle_hi = samples[k].theta;
                    iv.min_distance = iv.min_distance.min(h.distance);
                    iv.samples += 1;
                    j += 1;
                }
                _ => break,
            }
        }
        runs.push((i, iv));
    }
    runs.sort_by_key(|(i, _)| *i);
    runs.into_iter().map(|(_, iv)| iv).collect()
}

/// Fills the pixel fields of each interval through the heading-to-column map.
pub fn intervals_to_pixel(
    intervals: &[VisibilityInterval],
    meta: &PanoramaMeta,
    convention: HeadingConvention,
) -> Vec<VisibilityInterval> {
    intervals
        .iter()
        .map(|iv| {
            let lo = angle_to_pixel(SweepAngle::new(iv.angle_lo), meta, convention);
            let hi = angle_to_pixel(SweepAngle::new(iv.angle_hi), meta, convention);
            let (px_lo, px_hi) = match convention {
                HeadingConvention::Clockwise => (lo, hi),
                HeadingConvention::Flipped => (hi, lo),
            };
            VisibilityInterval {
                px_lo: Some(px_lo),
                px_hi: Some(px_hi),
                ..iv.clone()
            }
        })
        .collect()
}

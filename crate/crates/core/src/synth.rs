//! Procedural street scenes with exact ground truth.
//!
//! Buildings are convex footprints placed on both sides of a straight street
//! corridor; cameras stand on the street. Ground-truth visibility comes from
//! [`oracle_visibility`], a dense sweep that uses the parametric ray/segment
//! solution rather than the normal-projection form in
//! [`crate::raytrace::ray_wall_distance`], so the two cross-check each other.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coco::{categories_from_mapping, CocoDataset};
use crate::ingest::{BuildingFootprint, CategoryMapping, DetectionBox, DetectionSet, FootprintSet, PanoramaMeta};
use crate::metrics::{AnnotationSet, LabeledBox};
use crate::pixel::{wrap_to, BoxXywh, PixelSpan};
use crate::projection::{
    angle_to_pixel, clip_scene, local_to_geodetic, point_in_ring, GeoPoint, HeadingConvention, LocalScene, LocalXY,
    ProjectionError, SweepAngle,
};
use crate::raytrace::{displaces, grid_angle, sample_count, Hit, RaySample, TraceError, VisibilityInterval};
use crate::CategoryId;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    Config(String),
    #[error("placed only {placed} of {requested} buildings without overlap")]
    Infeasible { placed: usize, requested: usize },
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_buildings: usize,
    pub n_cameras: usize,
    /// Street width in metres, kerb to kerb.
    pub corridor_width: f64,
    pub category_count: u32,
    /// Relative category frequencies; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_weights: Option<Vec<f64>>,
    pub radius_m: f64,
    pub origin: GeoPoint,
    pub image_width: u32,
    pub image_height: u32,
    pub oracle_resolution_deg: f64,
    /// Visible intervals narrower than this get no ground-truth box.
    pub min_box_deg: f64,
    pub camera_height_m: f64,
    pub building_height_m: (f64, f64),
    pub max_retries: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_buildings: 12,
            n_cameras: 4,
            corridor_width: 10.0,
            category_count: 6,
            category_weights: None,
            radius_m: 50.0,
            origin: GeoPoint::new(40.7484, -73.9857),
            image_width: 2048,
            image_height: 1024,
            oracle_resolution_deg: 0.01,
            min_box_deg: 4.0,
            camera_height_m: 2.5,
            building_height_m: (8.0, 40.0),
            max_retries: 400,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if !(self.corridor_width >= 6.0) {
            return Err(SynthError::Config(format!(
                "corridor_width {} m is below the 6 m minimum",
                self.corridor_width
            )));
        }
        if self.category_count == 0 {
            return Err(SynthError::Config("category_count must be positive".into()));
        }
        if let Some(w) = &self.category_weights {
            if w.len() != self.category_count as usize || w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(SynthError::Config("category_weights must be non-negative, one per category".into()));
            }
        }
        if !(self.radius_m > 0.0) {
            return Err(SynthError::Config("radius_m must be positive".into()));
        }
        sample_count(self.oracle_resolution_deg)?;
        Ok(())
    }

    fn street_length(&self) -> f64 {
        (self.n_buildings as f64 * 14.0).max(120.0)
    }
}

/// A ground-truth facade box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub pano_id: String,
    pub bbox: BoxXywh,
    pub category: CategoryId,
    pub building_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraTruth {
    pub meta: PanoramaMeta,
    /// Oracle intervals with refined (off-grid) endpoints and pixel spans.
    pub intervals: Vec<VisibilityInterval>,
    pub boxes: Vec<GroundTruthBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub seed: u64,
    pub config: SynthConfig,
    pub mapping: CategoryMapping,
    pub footprints: FootprintSet,
    pub building_heights: BTreeMap<String, f64>,
    pub cameras: Vec<CameraTruth>,
}

/// Footprints and cameras without the (expensive) ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneLayout {
    pub seed: u64,
    pub mapping: CategoryMapping,
    pub footprints: FootprintSet,
    pub metas: Vec<PanoramaMeta>,
    pub building_heights: BTreeMap<String, f64>,
}

fn polygon_distance(a: &[LocalXY], b: &[LocalXY]) -> f64 {
    if a.iter().any(|&p| point_in_ring(p, b)) || b.iter().any(|&p| point_in_ring(p, a)) {
        return 0.0;
    }
    let edges = |r: &[LocalXY]| -> Vec<(LocalXY, LocalXY)> { (0..r.len()).map(|i| (r[i], r[(i + 1) % r.len()])).collect() };
    let (ea, eb) = (edges(a), edges(b));
    let mut best = f64::INFINITY;
    for &(p, q) in &ea {
        for &(r, s) in &eb {
            if proper_cross(p, q, r, s) {
                return 0.0;
            }
            best = best
                .min(point_segment(p, r, s))
                .min(point_segment(q, r, s))
                .min(point_segment(r, p, q))
                .min(point_segment(s, p, q));
        }
    }
    best
}

fn proper_cross(p: LocalXY, q: LocalXY, r: LocalXY, s: LocalXY) -> bool {
    let d1 = (s - r).cross(p - r);
    let d2 = (s - r).cross(q - r);
    let d3 = (q - p).cross(r - p);
    let d4 = (q - p).cross(s - p);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn point_segment(p: LocalXY, a: LocalXY, b: LocalXY) -> f64 {
    crate::projection::origin_segment_distance(a - p, b - p)
}

fn weighted_category(rng: &mut ChaCha8Rng, config: &SynthConfig) -> CategoryId {
    match &config.category_weights {
        None => CategoryId(rng.random_range(1..=config.category_count)),
        Some(w) => {
            let total: f64 = w.iter().sum();
            let mut x = rng.random::<f64>() * total;
            for (k, &wk) in w.iter().enumerate() {
                if x < wk {
                    return CategoryId(k as u32 + 1);
                }
                x -= wk;
            }
            CategoryId(config.category_count)
        }
    }
}

/// Convex footprint in street coordinates (along, across), rotated onto the plane.
fn candidate_footprint(rng: &mut ChaCha8Rng, config: &SynthConfig, street_dir: LocalXY) -> Vec<LocalXY> {
    let half_len = config.street_length() / 2.0;
    let kerb = config.corridor_width / 2.0;
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let frontage: f64 = rng.random_range(8.0..22.0);
    let depth: f64 = rng.random_range(8.0..18.0);
    let setback = if rng.random_bool(0.75) {
        rng.random_range(0.5..6.0)
    } else {
        rng.random_range(8.0..25.0)
    };
    let along = rng.random_range(-half_len..half_len);
    let near = kerb + setback;
    let jitter = rng.random_range(-8.0f64..8.0).to_radians();

    // Local building frame: x along the street, y away from it.
    let mut shape = vec![
        (-frontage / 2.0, 0.0),
        (frontage / 2.0, 0.0),
        (frontage / 2.0, depth),
        (-frontage / 2.0, depth),
    ];
    if rng.random_bool(0.3) {
        // Chamfer one street-side corner; stays convex.
        let c = rng.random_range(1.5..(frontage.min(depth) / 3.0));
        if rng.random_bool(0.5) {
            shape.splice(0..1, [(-frontage / 2.0, c), (-frontage / 2.0 + c, 0.0)]);
        } else {
            shape.splice(1..2, [(frontage / 2.0 - c, 0.0), (frontage / 2.0, c)]);
        }
    }
    let (sj, cj) = jitter.sin_cos();
    let across = LocalXY::new(street_dir.y, -street_dir.x) * side;
    let centre_along = along;
    let mut ring: Vec<LocalXY> = shape
        .into_iter()
        .map(|(x, y)| {
            let (rx, ry) = (x * cj - (y - depth / 2.0) * sj, x * sj + (y - depth / 2.0) * cj + depth / 2.0);
            street_dir * (centre_along + rx) + across * (near + ry)
        })
        .collect();
    if side < 0.0 {
        ring.reverse();
    }
    ring
}

fn across_offset(p: LocalXY, street_dir: LocalXY) -> f64 {
    p.cross(street_dir)
}

/// Footprints and camera positions for `seed`.
pub fn generate_layout(seed: u64, config: &SynthConfig) -> Result<SceneLayout, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heading = rng.random_range(0.0..180.0f64);
    let street_dir = SweepAngle::new(heading).direction();
    let kerb = config.corridor_width / 2.0;
    let gap = 1.0;

    let mut rings: Vec<Vec<LocalXY>> = Vec::with_capacity(config.n_buildings);
    for _ in 0..config.n_buildings {
        let mut placed = false;
        for _ in 0..config.max_retries {
            let ring = candidate_footprint(&mut rng, config, street_dir);
            let off: Vec<f64> = ring.iter().map(|&p| across_offset(p, street_dir)).collect();
            let clear_of_street = off.iter().all(|&o| o >= kerb + 0.25) || off.iter().all(|&o| o <= -kerb - 0.25);
            if !clear_of_street {
                continue;
            }
            if rings.iter().all(|r| polygon_distance(r, &ring) >= gap) {
                rings.push(ring);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SynthError::Infeasible {
                placed: rings.len(),
                requested: config.n_buildings,
            });
        }
    }

    let mut footprints = Vec::with_capacity(rings.len());
    let mut heights = BTreeMap::new();
    for (i, ring) in rings.iter().enumerate() {
        let id = format!("b{i:03}");
        let category = weighted_category(&mut rng, config);
        let mut geo: Vec<GeoPoint> = ring
            .iter()
            .map(|&p| local_to_geodetic(config.origin, p))
            .collect::<Result<_, _>>()?;
        geo.push(geo[0]);
        heights.insert(id.clone(), rng.random_range(config.building_height_m.0..=config.building_height_m.1));
        footprints.push(BuildingFootprint {
            building_id: id,
            ring: geo,
            raw_label: format!("C{}", category.0),
            category,
        });
    }

    let half_len = config.street_length() / 2.0;
    let mut metas = Vec::with_capacity(config.n_cameras);
    for k in 0..config.n_cameras {
        let along = rng.random_range(-0.8 * half_len..0.8 * half_len);
        let across = rng.random_range(-kerb / 2.0..kerb / 2.0);
        let p = street_dir * along + LocalXY::new(street_dir.y, -street_dir.x) * across;
        let g = local_to_geodetic(config.origin, p)?;
        metas.push(PanoramaMeta {
            pano_id: format!("c{k:03}"),
            lat: g.lat,
            lon: g.lon,
            north_px: rng.random_range(0.0..config.image_width as f64),
            width: config.image_width,
            height: config.image_height,
        });
    }
    Ok(SceneLayout {
        seed,
        mapping: CategoryMapping::numbered("synthetic", "C", config.category_count),
        footprints: FootprintSet::new(footprints),
        metas,
        building_heights: heights,
    })
}

/// Deterministic scene for `seed`, ground truth included.
pub fn generate_scene(seed: u64, config: &SynthConfig) -> Result<SyntheticScene, SynthError> {
    let layout = generate_layout(seed, config)?;
    SyntheticScene::from_layout(layout, config)
}

impl SyntheticScene {
    /// Computes ground truth for an arbitrary layout.
    pub fn from_layout(layout: SceneLayout, config: &SynthConfig) -> Result<Self, SynthError> {
        config.validate()?;
        let SceneLayout {
            seed,
            mapping,
            footprints,
            metas,
            building_heights,
        } = layout;
        let cameras = metas
            .par_iter()
            .map(|meta| camera_truth(&footprints, meta, &building_heights, config))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SyntheticScene {
            seed,
            config: config.clone(),
            mapping,
            footprints,
            building_heights,
            cameras,
        })
    }

    pub fn metas(&self) -> Vec<PanoramaMeta> {
        self.cameras.iter().map(|c| c.meta.clone()).collect()
    }

    pub fn ground_truth_boxes(&self) -> impl Iterator<Item = &GroundTruthBox> {
        self.cameras.iter().flat_map(|c| &c.boxes)
    }

    pub fn ground_truth_dataset(&self) -> CocoDataset {
        CocoDataset::from_boxes(
            &self.metas(),
            categories_from_mapping(&self.mapping),
            self.ground_truth_boxes()
                .map(|b| (b.pano_id.as_str(), b.bbox, b.category, None, Some(b.building_id.clone()), None)),
        )
    }

    pub fn ground_truth_set(&self) -> AnnotationSet {
        AnnotationSet {
            boxes: self
                .ground_truth_boxes()
                .map(|b| LabeledBox {
                    pano_id: b.pano_id.clone(),
                    bbox: b.bbox,
                    category: b.category,
                    score: 1.0,
                })
                .collect(),
            image_widths: self.cameras.iter().map(|c| (c.meta.pano_id.clone(), c.meta.width as f64)).collect(),
        }
    }
}

fn camera_truth(
    footprints: &FootprintSet,
    meta: &PanoramaMeta,
    heights: &BTreeMap<String, f64>,
    config: &SynthConfig,
) -> Result<CameraTruth, SynthError> {
    let scene = clip_scene(footprints, meta, config.radius_m)?;
    let intervals = oracle_visibility(&scene, config.oracle_resolution_deg)?;
    let width = meta.width as f64;
    let img_h = meta.height as f64;
    let cw = HeadingConvention::Clockwise;
    let intervals: Vec<VisibilityInterval> = intervals
        .into_iter()
        .map(|iv| VisibilityInterval {
            px_lo: Some(angle_to_pixel(SweepAngle::new(iv.angle_lo), meta, cw)),
            px_hi: Some(angle_to_pixel(SweepAngle::new(iv.angle_hi), meta, cw)),
            ..iv
        })
        .collect();
    let row = |elev_deg: f64| img_h / 2.0 - elev_deg / 180.0 * img_h;
    let boxes = intervals
        .iter()
        .filter(|iv| iv.angular_width() >= config.min_box_deg)
        .map(|iv| {
            let d = iv.min_distance.max(0.5);
            let h = heights.get(&iv.building_id).copied().unwrap_or(config.building_height_m.0);
            let top = row((h - config.camera_height_m).atan2(d).to_degrees()).clamp(0.0, img_h);
            let bottom = row((-config.camera_height_m).atan2(d).to_degrees()).clamp(0.0, img_h);
            GroundTruthBox {
                pano_id: meta.pano_id.clone(),
                bbox: BoxXywh::new(
                    iv.px_lo.expect("set above"),
                    top,
                    iv.angular_width() / 360.0 * width,
                    bottom - top,
                ),
                category: iv.category,
                building_id: iv.building_id.clone(),
            }
        })
        .collect();
    Ok(CameraTruth {
        meta: meta.clone(),
        intervals,
        boxes,
    })
}

/// Nearest wall along heading `theta` (degrees, any real value), solved in
/// parametric form: `t * dir = a + u * (b - a)`.
pub fn oracle_hit(scene: &LocalScene, theta: f64) -> Option<Hit> {
    let dir = SweepAngle::new(theta).direction();
    let mut best: Option<Hit> = None;
    for seg in &scene.segments {
        let e = seg.b - seg.a;
        let denom = dir.cross(e);
        if denom.abs() < 1e-12 * e.norm() {
            continue;
        }
        let t = seg.a.cross(e) / denom;
        let u = seg.a.cross(dir) / denom;
        if !(t > 0.0 && (0.0..=1.0).contains(&u) && t <= scene.radius_m) {
            continue;
        }
        if displaces(t, &seg.building_id, best.as_ref()) {
            best = Some(Hit {
                building_id: seg.building_id.clone(),
                category: seg.category,
                distance: t,
            });
        }
    }
    best
}

/// Dense oracle samples at `resolution_deg`.
pub fn oracle_sweep(scene: &LocalScene, resolution_deg: f64) -> Result<Vec<RaySample>, SynthError> {
    let n = sample_count(resolution_deg)?;
    Ok((0..n)
        .map(|i| {
            let theta = grid_angle(i, n);
            RaySample {
                theta,
                hit: oracle_hit(scene, theta),
            }
        })
        .collect())
}

const REFINE_TOLERANCE_DEG: f64 = 1e-5;

fn owner_at(scene: &LocalScene, theta: f64) -> Option<String> {
    oracle_hit(scene, theta).map(|h| h.building_id)
}

/// Bisects between `outside` (not owned by `id`) and `inside` (owned).
fn refine_boundary(scene: &LocalScene, id: &str, mut outside: f64, mut inside: f64) -> f64 {
    while (inside - outside).abs() > REFINE_TOLERANCE_DEG {
        let mid = 0.5 * (inside + outside);
        if owner_at(scene, mid).as_deref() == Some(id) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    0.5 * (inside + outside)
}

/// Exact-as-practical visibility intervals: a dense sweep merged into runs,
/// each run's endpoints refined by bisection to 1e-4 degrees or better.
///
/// Endpoints are continuous headings, not grid samples.
pub fn oracle_visibility(scene: &LocalScene, resolution_deg: f64) -> Result<Vec<VisibilityInterval>, SynthError> {
    let samples = oracle_sweep(scene, resolution_deg)?;
    let n = samples.len();
    let owner = |i: usize| samples[i % n].hit.as_ref().map(|h| h.building_id.as_str());
    let Some(start) = (0..n).find(|&i| owner(i) != owner(i + n - 1)) else {
        // One owner all the way round, or nothing at all.
        return Ok(samples[0]
            .hit
            .as_ref()
            .map(|h| VisibilityInterval {
                building_id: h.building_id.clone(),
                category: h.category,
                angle_lo: 0.0,
                angle_hi: 360.0 - resolution_deg,
                px_lo: None,
                px_hi: None,
                min_distance: samples.iter().filter_map(|s| s.hit.as_ref()).map(|h| h.distance).fold(f64::INFINITY, f64::min),
                samples: n,
            })
            .into_iter()
            .collect());
    };

    let step = 360.0 / n as f64;
    let mut out = Vec::new();
    let mut j = 0;
    while j < n {
        let first = start + j;
        let Some(hit) = samples[first % n].hit.clone() else {
            j += 1;
            continue;
        };
        let mut last = first;
        let mut min_d = hit.distance;
        while last + 1 < start + n && owner(last + 1) == Some(hit.building_id.as_str()) {
            last += 1;
            min_d = min_d.min(samples[last % n].hit.as_ref().expect("owned").distance);
        }
        j = last + 1 - start;
        // Unwrapped headings: sample k sits at k * step even past 360.
        let lo = refine_boundary(scene, &hit.building_id, (first as f64 - 1.0) * step, first as f64 * step);
        let hi = refine_boundary(scene, &hit.building_id, (last as f64 + 1.0) * step, last as f64 * step);
        out.push((
            first % n,
            VisibilityInterval {
                building_id: hit.building_id,
                category: hit.category,
                angle_lo: wrap_to(lo, 360.0),
                angle_hi: wrap_to(hi, 360.0),
                px_lo: None,
                px_hi: None,
                min_distance: min_d,
                samples: last - first + 1,
            },
        ));
    }
    out.sort_by_key(|(i, _)| *i);
    Ok(out.into_iter().map(|(_, iv)| iv).collect())
}

/// Jitter and false-positive settings for simulated detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Maximum shift as a fraction of box size, per axis.
    pub shift_frac: f64,
    /// Maximum relative size change, per axis.
    pub scale_frac: f64,
    /// Resample jitter until the box keeps at least this IoU with its source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_iou: Option<f64>,
    /// Score range for boxes over real facades.
    pub true_score: (f64, f64),
    /// Score range for injected false positives.
    pub false_score: (f64, f64),
    /// False positives injected, as a fraction of the true box count.
    pub false_positive_rate: f64,
}

impl NoiseConfig {
    pub fn none() -> Self {
        NoiseConfig {
            shift_frac: 0.0,
            scale_frac: 0.0,
            min_iou: None,
            true_score: (1.0, 1.0),
            false_score: (0.05, 0.25),
            false_positive_rate: 0.0,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let frac_ok = |f: f64| (0.0..=0.5).contains(&f);
        let score_ok = |(lo, hi): (f64, f64)| 0.0 <= lo && lo <= hi && hi <= 1.0;
        if !frac_ok(self.shift_frac) || !frac_ok(self.scale_frac) {
            return Err(SynthError::Config("noise fractions must lie in [0, 0.5]".into()));
        }
        if !score_ok(self.true_score) || !score_ok(self.false_score) {
            return Err(SynthError::Config("score ranges must satisfy 0 <= lo <= hi <= 1".into()));
        }
        if !(self.false_positive_rate >= 0.0) {
            return Err(SynthError::Config("false_positive_rate must be non-negative".into()));
        }
        Ok(())
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            shift_frac: 0.03,
            scale_frac: 0.03,
            min_iou: Some(0.85),
            true_score: (0.55, 1.0),
            false_score: (0.05, 0.25),
            false_positive_rate: 0.1,
        }
    }
}

/// A simulated detection with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDetection {
    pub pano_id: String,
    pub bbox: BoxXywh,
    pub score: f64,
    /// The detector's own (unreliable) category guess.
    pub category_id: CategoryId,
    /// Index of the source ground-truth box in scene order; `None` for false positives.
    pub source: Option<usize>,
}

pub fn detection_set(dets: &[SyntheticDetection]) -> DetectionSet {
    DetectionSet::from_boxes(dets.iter().map(|d| DetectionBox {
        pano_id: d.pano_id.clone(),
        bbox: d.bbox,
        score: d.score,
    }))
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn jitter_box(rng: &mut ChaCha8Rng, b: &BoxXywh, noise: &NoiseConfig, img_h: f64, width: f64) -> BoxXywh {
    if noise.shift_frac == 0.0 && noise.scale_frac == 0.0 {
        return *b;
    }
    let u = |rng: &mut ChaCha8Rng, f: f64| if f > 0.0 { rng.random_range(-f..=f) } else { 0.0 };
    let w = b.w * (1.0 + u(rng, noise.scale_frac));
    let h = b.h * (1.0 + u(rng, noise.scale_frac));
    let cx = b.x + b.w / 2.0 + u(rng, noise.shift_frac) * b.w;
    let cy = b.y + b.h / 2.0 + u(rng, noise.shift_frac) * b.h;
    let h = h.min(img_h);
    let y = (cy - h / 2.0).clamp(0.0, img_h - h);
    BoxXywh::new(wrap_to(cx - w / 2.0, width), y, w, h)
}

/// Uncovered arcs of the panorama axis, as `(start, len)` in pixels.
fn pixel_gaps(intervals: &[VisibilityInterval], width: f64) -> Vec<PixelSpan> {
    let mut pieces: Vec<(f64, f64)> = Vec::new();
    for iv in intervals {
        let Some(s) = iv.pixel_span(width) else { continue };
        if s.len >= width {
            return Vec::new();
        }
        if s.end() > width {
            pieces.push((s.start, width));
            pieces.push((0.0, s.end() - width));
        } else {
            pieces.push((s.start, s.end()));
        }
    }
    if pieces.is_empty() {
        return vec![PixelSpan::new(0.0, width, width)];
    }
    pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (s, e) in pieces {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    let mut gaps = Vec::new();
    for w in merged.windows(2) {
        gaps.push(PixelSpan::new(w[0].1, w[1].0 - w[0].1, width));
    }
    let (first, last) = (merged[0], merged[merged.len() - 1]);
    let wrap_len = first.0 + width - last.1;
    if wrap_len > 0.0 {
        gaps.push(PixelSpan::new(last.1, wrap_len, width));
    }
    gaps.retain(|g| g.len > 0.0);
    gaps
}

/// Simulated detector output for a scene.
///
/// Every ground-truth box yields one detection, jittered per `noise` and
/// scored from `true_score`. False positives go into arcs of the panorama
/// where no building is visible, scored from `false_score`.
pub fn perturb_detections(
    scene: &SyntheticScene,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<Vec<SyntheticDetection>, SynthError> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0fde_7ec7);
    let k = scene.mapping.category_count().max(1);
    let mut out = Vec::new();
    let mut source = 0;
    for cam in &scene.cameras {
        let width = cam.meta.width as f64;
        let img_h = cam.meta.height as f64;
        for b in &cam.boxes {
            let mut det = jitter_box(&mut rng, &b.bbox, noise, img_h, width);
            if let Some(min_iou) = noise.min_iou {
                let mut tries = 0;
                while crate::metrics::iou_2d(&det, &b.bbox, Some(width)) < min_iou {
                    tries += 1;
                    if tries > 64 {
                        det = b.bbox;
                        break;
                    }
                    det = jitter_box(&mut rng, &b.bbox, noise, img_h, width);
                }
            }
            out.push(SyntheticDetection {
                pano_id: cam.meta.pano_id.clone(),
                bbox: det,
                score: sample_range(&mut rng, noise.true_score),
                category_id: CategoryId(rng.random_range(1..=k)),
                source: Some(source),
            });
            source += 1;
        }
    }

    let wanted = (noise.false_positive_rate * source as f64).round() as usize;
    let gaps: Vec<Vec<PixelSpan>> = scene
        .cameras
        .iter()
        .map(|c| {
            pixel_gaps(&c.intervals, c.meta.width as f64)
                .into_iter()
                .filter(|g| g.len >= 24.0)
                .collect()
        })
        .collect();
    let usable: Vec<usize> = (0..gaps.len()).filter(|&i| !gaps[i].is_empty()).collect();
    if !usable.is_empty() {
        for _ in 0..wanted {
            let ci = usable[rng.random_range(0..usable.len())];
            let cam = &scene.cameras[ci];
            let g = gaps[ci][rng.random_range(0..gaps[ci].len())];
            let w = rng.random_range(0.3..0.8) * g.len.min(160.0);
            let x = g.start + rng.random_range(0.0..=(g.len - w));
            let img_h = cam.meta.height as f64;
            let h = rng.random_range(0.06..0.2) * img_h;
            let y = rng.random_range(0.3 * img_h..0.45 * img_h);
            out.push(SyntheticDetection {
                pano_id: cam.meta.pano_id.clone(),
                bbox: BoxXywh::new(wrap_to(x, cam.meta.width as f64), y, w, h),
                score: sample_range(&mut rng, noise.false_score),
                category_id: CategoryId(rng.random_range(1..=k)),
                source: None,
            });
        }
    }
    Ok(out)
}

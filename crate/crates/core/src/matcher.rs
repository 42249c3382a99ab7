//! Turning detector boxes into coarse annotations.
//!
//! Boxes arrive without categories. Each panorama's boxes are filtered by a
//! confidence threshold, then assigned to the visibility interval that
//! contains the box midpoint and overlaps it horizontally with 1D IoU above
//! `iou_x_min`. The category comes from the interval's building.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{DetectionBox, DetectionSet, FootprintSet, PanoramaMeta};
use crate::metrics::iou_1d;
use crate::pixel::BoxXywh;
use crate::projection::{clip_scene, HeadingConvention, ProjectionError};
use crate::raytrace::{
    intervals_from_sweep, intervals_to_pixel, sample_count, trace_sweep, trace_sweep_indexed, TraceError,
    VisibilityInterval,
};
use crate::CategoryId;

/// Threshold used before any batch has been observed.
pub const DEFAULT_THRESHOLD: f64 = 0.3;
pub const DEFAULT_CLIP: (f64, f64) = (0.05, 0.9);
pub const DEFAULT_IOU_X_MIN: f64 = 0.3;
pub const DEFAULT_BATCH_SIZE: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum ThresholdMode {
    Fixed(f64),
    Adaptive,
}

/// Confidence threshold and the record of every value it has taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdState {
    pub mode: ThresholdMode,
    pub current: f64,
    pub batch_size: usize,
    pub clip_lo: f64,
    pub clip_hi: f64,
    /// `(batch index, threshold applied to that batch)`.
    pub history: Vec<(usize, f64)>,
}

impl ThresholdState {
    pub fn new(mode: ThresholdMode, batch_size: usize) -> Self {
        let (clip_lo, clip_hi) = DEFAULT_CLIP;
        let current = match mode {
            ThresholdMode::Fixed(t) => t,
            ThresholdMode::Adaptive => DEFAULT_THRESHOLD,
        };
        ThresholdState {
            mode,
            current,
            batch_size,
            clip_lo,
            clip_hi,
            history: Vec::new(),
        }
    }

    pub fn adaptive(batch_size: usize) -> Self {
        Self::new(ThresholdMode::Adaptive, batch_size)
    }

    pub fn fixed(threshold: f64, batch_size: usize) -> Self {
        Self::new(ThresholdMode::Fixed(threshold), batch_size)
    }
}

/// Sets the threshold for the next batch from the previous batch's scores.
///
/// Adaptive mode fits a single Gaussian (sample mean and standard deviation)
/// and uses `mean - 0.5 * std`, clamped to `[clip_lo, clip_hi]`. The first
/// batch, or an empty score list, falls back to [`DEFAULT_THRESHOLD`].
pub fn fit_threshold(scores: &[f64], state: ThresholdState) -> ThresholdState {
    let mut state = state;
    let next = match state.mode {
        ThresholdMode::Fixed(t) => t,
        ThresholdMode::Adaptive if state.history.is_empty() || scores.is_empty() => DEFAULT_THRESHOLD,
        ThresholdMode::Adaptive => {
            let n = scores.len() as f64;
            let mean = scores.iter().sum::<f64>() / n;
            let std = if scores.len() > 1 {
                (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            (mean - 0.5 * std).clamp(state.clip_lo, state.clip_hi)
        }
    };
    state.current = next;
    let batch = state.history.len();
    state.history.push((batch, next));
    state
}

/// Boxes scoring at or above the current threshold, with their input positions.
pub fn filter_detections<'a>(dets: &'a [DetectionBox], state: &ThresholdState) -> Vec<(usize, &'a DetectionBox)> {
    dets.iter().enumerate().filter(|(_, d)| d.score >= state.current).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxMatch {
    pub building_id: String,
    pub category: CategoryId,
    pub iou_x: f64,
    /// Index into the interval list the match came from.
    pub interval: usize,
}

/// Finds the interval a box belongs to.
///
/// Candidates contain the box's horizontal midpoint strictly inside their
/// pixel span; among those with 1D IoU above `iou_min`, the largest IoU
/// wins, ties going to the smaller building id.
pub fn match_box(box_: &BoxXywh, intervals: &[VisibilityInterval], iou_min: f64, width: f64) -> Option<BoxMatch> {
    let mid = box_.mid_x(width);
    let bspan = box_.x_span(width);
    let mut best: Option<BoxMatch> = None;
    for (k, iv) in intervals.iter().enumerate() {
        let Some(span) = iv.pixel_span(width) else {
            continue;
        };
        if !span.contains_strict(mid, width) {
            continue;
        }
        let Ok(iou) = iou_1d(&bspan, &span, width) else {
            continue;
        };
        if iou <= iou_min {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => iou > b.iou_x || (iou == b.iou_x && iv.building_id < b.building_id),
        };
        if better {
            best = Some(BoxMatch {
                building_id: iv.building_id.clone(),
                category: iv.category,
                iou_x: iou,
                interval: k,
            });
        }
    }
    best
}

/// A detector box relabelled with a GIS category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseAnnotation {
    pub pano_id: String,
    pub bbox: BoxXywh,
    pub category: CategoryId,
    pub building_id: String,
    pub iou_x: f64,
    pub score: f64,
    /// Position of the source box within its panorama's detections.
    pub detection_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub radius_m: f64,
    pub step_deg: f64,
    pub iou_x_min: f64,
    pub threshold: ThresholdMode,
    pub batch_size: usize,
    pub seed: u64,
    pub heading: HeadingConvention,
    /// Use the angular-bucket sweep instead of the brute-force one.
    pub indexed_sweep: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            radius_m: 50.0,
            step_deg: 1.0,
            iou_x_min: DEFAULT_IOU_X_MIN,
            threshold: ThresholdMode::Adaptive,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 17,
            heading: HeadingConvention::Clockwise,
            indexed_sweep: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        if self.batch_size == 0 {
            return Err(MatchError::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.iou_x_min) {
            return Err(MatchError::Config(format!("iou_x_min {} outside [0, 1)", self.iou_x_min)));
        }
        if let ThresholdMode::Fixed(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(MatchError::Config(format!("fixed threshold {t} outside [0, 1]")));
            }
        }
        sample_count(self.step_deg)?;
        if !(self.radius_m > 0.0) {
            return Err(ProjectionError::InvalidRadius(self.radius_m).into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    /// Vertical extent leaves the image.
    Invalid,
    /// Panorama skipped because its scene is degenerate.
    Skipped,
    FilteredOut,
    Unmatched,
    Annotated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDisposition {
    pub pano_id: String,
    pub detection_index: usize,
    pub score: f64,
    pub disposition: Disposition,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxCounts {
    pub input_boxes: usize,
    pub invalid: usize,
    pub skipped: usize,
    pub filtered_out: usize,
    pub unmatched: usize,
    pub annotated: usize,
}

impl BoxCounts {
    fn add(&mut self, d: Disposition) {
        self.input_boxes += 1;
        match d {
            Disposition::Invalid => self.invalid += 1,
            Disposition::Skipped => self.skipped += 1,
            Disposition::FilteredOut => self.filtered_out += 1,
            Disposition::Unmatched => self.unmatched += 1,
            Disposition::Annotated => self.annotated += 1,
        }
    }

    fn merge(&mut self, o: &BoxCounts) {
        self.input_boxes += o.input_boxes;
        self.invalid += o.invalid;
        self.skipped += o.skipped;
        self.filtered_out += o.filtered_out;
        self.unmatched += o.unmatched;
        self.annotated += o.annotated;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub batch: usize,
    pub threshold: f64,
    pub panoramas: Vec<String>,
    #[serde(flatten)]
    pub counts: BoxCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegenerateSkip {
    pub pano_id: String,
    pub building_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingMetadata {
    pub pano_id: String,
    pub boxes: usize,
}

/// Where every input box went.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub batches: Vec<BatchReport>,
    pub thresholds: Vec<(usize, f64)>,
    pub totals: BoxCounts,
    pub degenerate_panoramas: Vec<DegenerateSkip>,
    pub missing_metadata: Vec<MissingMetadata>,
    pub dispositions: Vec<BoxDisposition>,
}

impl RunReport {
    pub fn is_clean(&self) -> bool {
        self.degenerate_panoramas.is_empty() && self.missing_metadata.is_empty()
    }
}

struct PanoOutcome {
    annotations: Vec<CoarseAnnotation>,
    dispositions: Vec<BoxDisposition>,
    counts: BoxCounts,
    degenerate: Option<DegenerateSkip>,
}

/// Visibility intervals with pixel spans for one panorama.
pub fn panorama_intervals(
    footprints: &FootprintSet,
    meta: &PanoramaMeta,
    config: &PipelineConfig,
) -> Result<Vec<VisibilityInterval>, MatchError> {
    let scene = clip_scene(footprints, meta, config.radius_m)?;
    let sweep = if config.indexed_sweep {
        trace_sweep_indexed(&scene, config.step_deg)?
    } else {
        trace_sweep(&scene, config.step_deg)?
    };
    Ok(intervals_to_pixel(&intervals_from_sweep(&sweep), meta, config.heading))
}

fn process_panorama(
    meta: &PanoramaMeta,
    boxes: &[DetectionBox],
    footprints: &FootprintSet,
    threshold: &ThresholdState,
    config: &PipelineConfig,
) -> Result<PanoOutcome, MatchError> {
    let mut out = PanoOutcome {
        annotations: Vec::new(),
        dispositions: Vec::new(),
        counts: BoxCounts::default(),
        degenerate: None,
    };
    let record = |out: &mut PanoOutcome, i: usize, b: &DetectionBox, d: Disposition| {
        out.counts.add(d);
        out.dispositions.push(BoxDisposition {
            pano_id: meta.pano_id.clone(),
            detection_index: i,
            score: b.score,
            disposition: d,
        });
    };

    let intervals = match panorama_intervals(footprints, meta, config) {
        Ok(iv) => iv,
        Err(MatchError::Trace(TraceError::DegenerateScene(building_id))) => {
            for (i, b) in boxes.iter().enumerate() {
                record(&mut out, i, b, Disposition::Skipped);
            }
            out.degenerate = Some(DegenerateSkip {
                pano_id: meta.pano_id.clone(),
                building_id,
            });
            return Ok(out);
        }
        Err(e) => return Err(e),
    };

    let width = meta.width as f64;
    let height = meta.height as f64;
    for (i, b) in boxes.iter().enumerate() {
        if b.bbox.y < 0.0 || b.bbox.y + b.bbox.h > height {
            record(&mut out, i, b, Disposition::Invalid);
            continue;
        }
        if b.score < threshold.current {
            record(&mut out, i, b, Disposition::FilteredOut);
            continue;
        }
        match match_box(&b.bbox, &intervals, config.iou_x_min, width) {
            Some(m) => {
                record(&mut out, i, b, Disposition::Annotated);
                out.annotations.push(CoarseAnnotation {
                    pano_id: meta.pano_id.clone(),
                    bbox: b.bbox,
                    category: m.category,
                    building_id: m.building_id,
                    iou_x: m.iou_x,
                    score: b.score,
                    detection_index: i,
                });
            }
            None => record(&mut out, i, b, Disposition::Unmatched),
        }
    }
    Ok(out)
}

/// Deterministic batch partition of the panoramas for a given seed.
pub fn partition_batches(metas: &[PanoramaMeta], batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..metas.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// The full matching stage over every panorama.
///
/// Panoramas are shuffled with `config.seed` and cut into batches. Each
/// batch's threshold comes from [`fit_threshold`] on the previous batch's
/// detection scores; panoramas within a batch run in parallel. Output
/// annotations and dispositions are sorted by panorama id, then by the
/// box's position in its panorama.
pub fn generate_coarse_annotations(
    metas: &[PanoramaMeta],
    footprints: &FootprintSet,
    dets: &DetectionSet,
    config: &PipelineConfig,
) -> Result<(Vec<CoarseAnnotation>, RunReport), MatchError> {
    config.validate()?;
    let known: BTreeSet<&str> = metas.iter().map(|m| m.pano_id.as_str()).collect();
    let missing_metadata: Vec<MissingMetadata> = dets
        .groups
        .iter()
        .filter(|(id, _)| !known.contains(id.as_str()))
        .map(|(id, b)| MissingMetadata {
            pano_id: id.clone(),
            boxes: b.len(),
        })
        .collect();
    for m in &missing_metadata {
        log::warn!("no metadata for panorama {}; {} boxes dropped", m.pano_id, m.boxes);
    }

    let mut state = ThresholdState::new(config.threshold, config.batch_size);
    let mut previous_scores: Vec<f64> = Vec::new();
    let mut annotations = Vec::new();
    let mut dispositions = Vec::new();
    let mut batches = Vec::new();
    let mut degenerate = Vec::new();
    let mut totals = BoxCounts::default();

    for (batch, members) in partition_batches(metas, config.batch_size, config.seed).into_iter().enumerate() {
        state = fit_threshold(&previous_scores, state);
        let outcomes: Vec<PanoOutcome> = members
            .par_iter()
            .map(|&k| process_panorama(&metas[k], dets.get(&metas[k].pano_id), footprints, &state, config))
            .collect::<Result<_, _>>()?;

        let mut counts = BoxCounts::default();
        for o in outcomes {
            counts.merge(&o.counts);
            annotations.extend(o.annotations);
            dispositions.extend(o.dispositions);
            degenerate.extend(o.degenerate);
        }
        totals.merge(&counts);
        previous_scores = members
            .iter()
            .flat_map(|&k| dets.get(&metas[k].pano_id).iter().map(|b| b.score))
            .collect();
        batches.push(BatchReport {
            batch,
            threshold: state.current,
            panoramas: members.iter().map(|&k| metas[k].pano_id.clone()).collect(),
            counts,
        });
    }

    annotations.sort_by(|a, b| (&a.pano_id, a.detection_index).cmp(&(&b.pano_id, b.detection_index)));
    dispositions.sort_by(|a, b| (&a.pano_id, a.detection_index).cmp(&(&b.pano_id, b.detection_index)));
    degenerate.sort_by(|a: &DegenerateSkip, b| a.pano_id.cmp(&b.pano_id));
    let report = RunReport {
        batches,
        thresholds: state.history,
        totals,
        degenerate_panoramas: degenerate,
        missing_metadata,
        dispositions,
    };
    Ok((annotations, report))
}

/// Categories of the annotations, grouped per building, for quick inspection.
pub fn annotated_buildings(annotations: &[CoarseAnnotation]) -> BTreeMap<String, CategoryId> {
    annotations.iter().map(|a| (a.building_id.clone(), a.category)).collect()
}

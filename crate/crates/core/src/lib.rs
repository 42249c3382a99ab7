//! Geometry-aware coarse annotation of building facades.
//!
//! Building footprints carry function categories; street-view panoramas
//! carry facade boxes from a detector whose categories are not trusted. This
//! crate ray-traces each panorama's surroundings in the ground plane, maps
//! the visible building walls onto the panorama's pixel axis, and relabels
//! every facade box with the category of the building it lines up with.
//!
//! Pipeline, per panorama:
//!
//! 1. [`projection::clip_scene`]: footprints near the camera as local wall segments.
//! 2. [`raytrace::trace_sweep`]: nearest wall for each heading on a 1 degree grid.
//! 3. [`raytrace::intervals_from_sweep`] and [`raytrace::intervals_to_pixel`]:
//!    visibility intervals on the panorama axis.
//! 4. [`matcher::filter_detections`] and [`matcher::match_box`]: confidence filtering
//!    and midpoint + 1D IoU matching.
//!
//! [`matcher::generate_coarse_annotations`] drives the whole thing in seeded
//! batches. [`metrics`] scores the result; [`synth`] builds scenes with exact
//! ground truth to check each step against.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coco;
pub mod ingest;
pub mod matcher;
pub mod metrics;
pub mod pixel;
pub mod projection;
pub mod raytrace;
pub mod render;
pub mod synth;

use serde::{Deserialize, Serialize};

/// Building-function category, `1..=K` within one city's mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u32);

impl std::fmt::Display for CategoryId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub use ingest::{BuildingFootprint, CategoryMapping, DetectionBox, DetectionSet, FootprintSet, PanoramaMeta};
pub use matcher::{generate_coarse_annotations, CoarseAnnotation, PipelineConfig, RunReport, ThresholdMode};
pub use pixel::{BoxXywh, PixelSpan};
pub use projection::{GeoPoint, HeadingConvention, LocalScene, LocalXY, SweepAngle};
pub use raytrace::{RaySweep, VisibilityInterval, WallSegment};

//! Seeded fixtures shared by the benchmarks.

use geotag_core::ingest::DetectionSet;
use geotag_core::matcher::panorama_intervals;
use geotag_core::metrics::{AnnotationSet, LabeledBox};
use geotag_core::projection::clip_scene;
use geotag_core::synth::{detection_set, generate_layout, generate_scene, perturb_detections, NoiseConfig, SynthConfig};
use geotag_core::{FootprintSet, LocalScene, PanoramaMeta, PipelineConfig, VisibilityInterval};

/// A street with `buildings` footprints and the scene seen from its first camera.
pub fn street_scene(seed: u64, buildings: usize, radius_m: f64) -> LocalScene {
    let cfg = SynthConfig {
        n_buildings: buildings,
        n_cameras: 1,
        ..SynthConfig::default()
    };
    let layout = generate_layout(seed, &cfg).expect("layout");
    clip_scene(&layout.footprints, &layout.metas[0], radius_m).expect("scene")
}

/// Intervals and panorama width for the matcher benchmark.
pub fn intervals(seed: u64) -> (Vec<VisibilityInterval>, f64) {
    let cfg = SynthConfig {
        n_buildings: 40,
        n_cameras: 1,
        ..SynthConfig::default()
    };
    let layout = generate_layout(seed, &cfg).expect("layout");
    let meta = &layout.metas[0];
    let iv = panorama_intervals(&layout.footprints, meta, &PipelineConfig::default()).expect("intervals");
    (iv, meta.width as f64)
}

pub struct PipelineFixture {
    pub metas: Vec<PanoramaMeta>,
    pub footprints: FootprintSet,
    pub detections: DetectionSet,
    pub ground_truth: AnnotationSet,
    pub predictions: AnnotationSet,
}

/// Noisy detections over `cameras` panoramas; predictions are the noisy
/// boxes carrying their true category.
pub fn pipeline_fixture(seed: u64, cameras: usize) -> PipelineFixture {
    let cfg = SynthConfig {
        n_buildings: cameras + 20,
        n_cameras: cameras,
        ..SynthConfig::default()
    };
    let scene = generate_scene(seed, &cfg).expect("scene");
    let dets = perturb_detections(&scene, &NoiseConfig::default(), seed).expect("detections");
    let ground_truth = scene.ground_truth_set();
    let predictions = AnnotationSet {
        boxes: dets
            .iter()
            .filter_map(|d| {
                let src = &ground_truth.boxes[d.source?];
                Some(LabeledBox {
                    pano_id: d.pano_id.clone(),
                    bbox: d.bbox,
                    category: src.category,
                    score: d.score,
                })
            })
            .collect(),
        image_widths: ground_truth.image_widths.clone(),
    };
    PipelineFixture {
        metas: scene.metas(),
        footprints: scene.footprints.clone(),
        detections: detection_set(&dets),
        ground_truth,
        predictions,
    }
}

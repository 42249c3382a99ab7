use geotag_core::coco::CocoDataset;
use geotag_core::ingest::{parse_footprints, parse_panorama_meta, to_json_lines};
use geotag_core::matcher::generate_coarse_annotations;
use geotag_core::metrics::{coarse_accuracy, evaluate_ap, AnnotationSet, ApParams, LabeledBox};
use geotag_core::synth::{detection_set, generate_scene, perturb_detections, NoiseConfig, SynthConfig, SyntheticScene};
use geotag_core::PipelineConfig;

fn coarse_set(scene: &SyntheticScene, config: &PipelineConfig, noise: &NoiseConfig) -> AnnotationSet {
    let dets = perturb_detections(scene, noise, 3).unwrap();
    let (coarse, report) =
        generate_coarse_annotations(&scene.metas(), &scene.footprints, &detection_set(&dets), config).unwrap();
    assert!(report.is_clean());
    AnnotationSet {
        boxes: coarse
            .iter()
            .map(|a| LabeledBox {
                pano_id: a.pano_id.clone(),
                bbox: a.bbox,
                category: a.category,
                score: a.score,
            })
            .collect(),
        image_widths: scene.ground_truth_set().image_widths,
    }
}

#[test]
fn noiseless_detections_recover_every_category() {
    let cfg = SynthConfig {
        n_buildings: 24,
        n_cameras: 6,
        ..Default::default()
    };
    for seed in [1, 2, 3] {
        let scene = generate_scene(seed, &cfg).unwrap();
        let gt = scene.ground_truth_set();
        assert!(!gt.boxes.is_empty());
        let coarse = coarse_set(&scene, &PipelineConfig::default(), &NoiseConfig::none());
        let acc = coarse_accuracy(&coarse, &gt, 0.8);
        assert_eq!(acc.accuracy, Some(1.0), "seed {seed}");
        let ap = evaluate_ap(&coarse, &gt, &ApParams::default());
        for (cat, v) in &ap.per_category_50 {
            assert_eq!(*v, 1.0, "category {cat}");
        }
    }
}

#[test]
fn files_round_trip_preserves_truth() {
    let cfg = SynthConfig {
        n_buildings: 12,
        n_cameras: 2,
        ..Default::default()
    };
    let scene = generate_scene(8, &cfg).unwrap();
    let geojson = serde_json::to_string(&scene.footprints.to_geojson()).unwrap();
    let (footprints, report) = parse_footprints(&geojson, &scene.mapping).unwrap();
    assert!(report.rejected.is_empty());
    assert_eq!(footprints, scene.footprints);
    let (metas, _) = parse_panorama_meta(&to_json_lines(&scene.metas())).unwrap();
    assert_eq!(metas, scene.metas());

    let gt = scene.ground_truth_dataset();
    let back: CocoDataset = serde_json::from_str(&serde_json::to_string(&gt).unwrap()).unwrap();
    assert_eq!(back, gt);
}

#[test]
fn scene_file_reload_reproduces_oracle() {
    use geotag_core::projection::clip_scene;
    use geotag_core::synth::oracle_visibility;

    let cfg = SynthConfig {
        n_buildings: 15,
        n_cameras: 3,
        ..Default::default()
    };
    let scene = generate_scene(21, &cfg).unwrap();
    let text = serde_json::to_string(&scene).unwrap();
    let back: SyntheticScene = serde_json::from_str(&text).unwrap();
    assert_eq!(back, scene);
    for cam in &back.cameras {
        let local = clip_scene(&back.footprints, &cam.meta, back.config.radius_m).unwrap();
        let again = oracle_visibility(&local, back.config.oracle_resolution_deg).unwrap();
        assert_eq!(again.len(), cam.intervals.len());
        for (a, b) in again.iter().zip(&cam.intervals) {
            assert_eq!((a.angle_lo, a.angle_hi, &a.building_id), (b.angle_lo, b.angle_hi, &b.building_id));
        }
    }
}

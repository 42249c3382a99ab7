use geotag_core::projection::{clip_scene, LocalBuilding};
use geotag_core::raytrace::{trace_sweep, trace_sweep_indexed};
use geotag_core::synth::{generate_layout, SynthConfig};
use geotag_core::{CategoryId, GeoPoint, LocalScene, LocalXY};
use proptest::prelude::*;

const STEPS: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 5.0, 10.0];

fn quad(id: usize, cx: f64, cy: f64, w: f64, h: f64, skew: f64) -> LocalBuilding {
    LocalBuilding {
        building_id: format!("q{id:02}"),
        category: CategoryId(1 + (id % 4) as u32),
        ring: vec![
            LocalXY::new(cx, cy),
            LocalXY::new(cx + w, cy + skew),
            LocalXY::new(cx + w, cy + h + skew),
            LocalXY::new(cx, cy + h),
        ],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn indexed_sweep_is_bit_identical(
        rects in prop::collection::vec((-80.0f64..80.0, -80.0f64..80.0, 0.5f64..25.0, 0.5f64..25.0, -3.0f64..3.0), 0..25),
        step in prop::sample::select(STEPS.to_vec()),
        radius in 5.0f64..90.0,
    ) {
        let buildings = rects
            .iter()
            .enumerate()
            .map(|(i, &(x, y, w, h, s))| quad(i, x, y, w, h, s))
            .collect();
        let scene = LocalScene::from_buildings(GeoPoint::new(0.0, 0.0), radius, buildings);
        let brute = trace_sweep(&scene, step);
        let fast = trace_sweep_indexed(&scene, step);
        match (brute, fast) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert!(false, "disagree: {:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }
}

#[test]
fn indexed_sweep_on_synthetic_streets() {
    let cfg = SynthConfig {
        n_buildings: 30,
        n_cameras: 5,
        ..Default::default()
    };
    for seed in 0..20 {
        let layout = generate_layout(seed, &cfg).unwrap();
        for meta in &layout.metas {
            let scene = clip_scene(&layout.footprints, meta, 50.0).unwrap();
            assert_eq!(trace_sweep(&scene, 1.0).unwrap(), trace_sweep_indexed(&scene, 1.0).unwrap());
        }
    }
}

#[test]
fn wall_through_origin_neighbourhood() {
    // Segment passing within a hair of the camera spans almost every bucket.
    let b = LocalBuilding {
        building_id: "thin".into(),
        category: CategoryId(1),
        ring: vec![
            LocalXY::new(-30.0, 1e-7),
            LocalXY::new(30.0, 1e-7),
            LocalXY::new(30.0, 4.0),
            LocalXY::new(-30.0, 4.0),
        ],
    };
    let scene = LocalScene::from_buildings(GeoPoint::new(0.0, 0.0), 50.0, vec![b]);
    assert_eq!(trace_sweep(&scene, 1.0).unwrap(), trace_sweep_indexed(&scene, 1.0).unwrap());
}

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use geotag_bench::{intervals, pipeline_fixture, street_scene};
use geotag_core::matcher::{generate_coarse_annotations, match_box};
use geotag_core::metrics::{coarse_accuracy, evaluate_ap, ApParams};
use geotag_core::raytrace::{trace_sweep, trace_sweep_indexed};
use geotag_core::{BoxXywh, PipelineConfig};

fn sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    for buildings in [10, 40, 120] {
        let scene = street_scene(7, buildings, 50.0);
        group.bench_with_input(BenchmarkId::new("brute", buildings), &scene, |b, s| {
            b.iter(|| trace_sweep(black_box(s), 1.0).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("bucketed", buildings), &scene, |b, s| {
            b.iter(|| trace_sweep_indexed(black_box(s), 1.0).unwrap())
        });
    }
    group.finish();
}

fn matching(c: &mut Criterion) {
    let (iv, width) = intervals(3);
    let boxes: Vec<BoxXywh> = (0..256).map(|i| BoxXywh::new(i as f64 * 8.0, 300.0, 90.0, 200.0)).collect();
    c.bench_function("match_box/256", |b| {
        b.iter(|| boxes.iter().filter(|bx| match_box(bx, black_box(&iv), 0.3, width).is_some()).count())
    });
}

fn end_to_end(c: &mut Criterion) {
    let f = pipeline_fixture(11, 50);
    let cfg = PipelineConfig::default();
    c.bench_function("annotate/50_panoramas", |b| {
        b.iter(|| generate_coarse_annotations(&f.metas, &f.footprints, black_box(&f.detections), &cfg).unwrap())
    });
    c.bench_function("eval/accuracy", |b| b.iter(|| coarse_accuracy(black_box(&f.predictions), &f.ground_truth, 0.8)));
    c.bench_function("eval/ap", |b| {
        b.iter(|| evaluate_ap(black_box(&f.predictions), &f.ground_truth, &ApParams::default()))
    });
}

criterion_group!(benches, sweeps, matching, end_to_end);
criterion_main!(benches);

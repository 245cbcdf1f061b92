use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use unitail_bench::{cost_matrix, detection_set, quad_pairs, random_quad, rng, sequence};
use unitail_core::detection_eval::coco_thresholds;
use unitail_core::{assign_targets, evaluate, hungarian, quad_iou, text_similarity, PyramidSpec};

fn iou(c: &mut Criterion) {
    let pairs = quad_pairs(1, 1024);
    c.bench_function("quad_iou/1024 pairs", |b| {
        b.iter(|| pairs.iter().map(|(p, q)| quad_iou(black_box(p), black_box(q))).sum::<f64>())
    });
}

fn assignment(c: &mut Criterion) {
    let spec = PyramidSpec::new(3, 7, 5, 224.0).unwrap();
    let mut r = rng(2);
    let gts: Vec<_> = (0..150).map(|_| random_quad(&mut r, 1024.0)).collect();
    c.bench_function("assign_targets/150 quads 1024px", |b| {
        b.iter(|| assign_targets(black_box(&gts), &spec, 1024.0, 1024.0, 0.3).unwrap())
    });
}

fn matching(c: &mut Criterion) {
    let mut g = c.benchmark_group("hungarian");
    for n in [16, 64, 256] {
        let m = cost_matrix(3, n, n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| b.iter(|| hungarian(black_box(m)).unwrap()));
    }
    g.finish();

    let (sp, sg) = (sequence(4, 12, 256), sequence(5, 15, 256));
    c.bench_function("text_similarity/12x15 d256", |b| {
        b.iter(|| text_similarity(black_box(&sp), black_box(&sg), false).unwrap())
    });
}

fn detection(c: &mut Criterion) {
    let (gts, dets) = detection_set(6, 20, 100);
    let th = coco_thresholds();
    let mut g = c.benchmark_group("evaluate");
    g.sample_size(10);
    g.bench_function("20 images x 100 quads", |b| b.iter(|| evaluate(black_box(&dets), &gts, &[], &th).unwrap()));
    g.finish();
}

criterion_group!(benches, iou, assignment, matching, detection);
criterion_main!(benches);

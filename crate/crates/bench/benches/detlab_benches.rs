use criterion::{black_box, criterion_group, criterion_main, Criterion};

use detlab::augment::{self, AugmentationPolicy, RngStream};
use detlab::evalmetrics::{self, EvalConfig};
use detlab::geom::{self, CanvasSize, GeomTransform};
use detlab::imgproc;
use detlab_bench::*;

fn bench_geom(c: &mut Criterion) {
    let mut r = rng(1);
    let boxes: Vec<_> = (0..256).map(|_| random_bbox(&mut r)).collect();
    c.bench_function("geom/iou_pairwise_256", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for a in &boxes {
                for q in &boxes {
                    acc += geom::iou(a, q);
                }
            }
            black_box(acc)
        })
    });

    let canvas = CanvasSize::new(1752, 1064).unwrap();
    c.bench_function("geom/transform_box_rot_arbitrary", |b| {
        b.iter(|| {
            for bx in &boxes {
                black_box(geom::transform_box(bx, GeomTransform::RotateArbitrary(37.0), canvas));
            }
        })
    });
}

fn bench_nms(c: &mut Criterion) {
    let mut r = rng(2);
    let dets = random_detections(&mut r, 100, 3);
    c.bench_function("evalmetrics/nms_100_boxes", |b| {
        b.iter(|| black_box(evalmetrics::nms(&dets, 0.5)))
    });
}

fn bench_evaluate(c: &mut Criterion) {
    let mut r = rng(3);
    let (dets, gts) = random_instance(&mut r, 20, 10, 3);
    c.bench_function("evalmetrics/evaluate_20_images", |b| {
        b.iter(|| black_box(evalmetrics::evaluate(&dets, &gts, &EvalConfig::new(3)).unwrap()))
    });
}

fn bench_imgproc(c: &mut Criterion) {
    let img = patterned_raster(640, 640, 0);
    let other = patterned_raster(640, 640, 9);
    c.bench_function("imgproc/hsv_factors_640", |b| {
        b.iter(|| black_box(imgproc::hsv_apply_factors(&img, 1.01, 0.9, 1.1)))
    });
    c.bench_function("imgproc/rotate_arbitrary_640", |b| {
        b.iter(|| black_box(imgproc::rotate_raster(&img, GeomTransform::RotateArbitrary(37.0))))
    });
    c.bench_function("imgproc/rotate90_640", |b| {
        b.iter(|| black_box(imgproc::rotate_raster(&img, GeomTransform::Rotate90Cw)))
    });
    c.bench_function("imgproc/blend_640", |b| {
        b.iter(|| black_box(imgproc::blend(&img, &other, 0.42).unwrap()))
    });
}

fn bench_augment(c: &mut Criterion) {
    let dataset = patterned_dataset(8, 640, 640);
    let policy = AugmentationPolicy {
        p_copy_paste: 1.0,
        p_mixup: 1.0,
        p_hsv: 1.0,
        p_flip_rot: 1.0,
        ..AugmentationPolicy::default()
    };
    c.bench_function("augment/online_640_all_enabled", |b| {
        let mut epoch = 0u64;
        b.iter(|| {
            epoch += 1;
            let mut stream = RngStream::new(7, "img_0000", epoch);
            black_box(
                augment::augment_online(&dataset.samples[0], &dataset, &policy, &mut stream)
                    .unwrap(),
            )
        })
    });

    let small = patterned_dataset(8, 160, 160);
    c.bench_function("augment/materialize_offline_8x160", |b| {
        b.iter(|| black_box(augment::materialize_offline(&small, &policy, 1, 42).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_geom,
    bench_nms,
    bench_evaluate,
    bench_imgproc,
    bench_augment
);
criterion_main!(benches);

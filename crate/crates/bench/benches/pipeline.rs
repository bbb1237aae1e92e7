use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use commadet::features::segmented_hog;
use commadet::imagery::{resize_bilinear, BBox, Patch};
use commadet::motion::motion_field;
use commadet::proposals::WindowPyramid;
use commadet::segmentation::{fit_gmm, segment_frame};
use commadet::detector::{nms, Detection};
use commadet::imagery::Timestamp;

use commadet_bench::{drifting_sequence, flat_bank, textured_frame};

fn bench_segment_frame(c: &mut Criterion) {
    let frame = textured_frame(768, 384);
    let bank = flat_bank(768, 384);
    c.bench_function("segment_frame 768x384", |b| {
        b.iter(|| segment_frame(black_box(&frame), &bank, 120.0).unwrap())
    });
}

fn bench_motion_field(c: &mut Criterion) {
    let frames = drifting_sequence(768, 384, 10);
    c.bench_function("motion_field 768x384 x10", |b| {
        b.iter(|| motion_field(black_box(&frames), (0, -10), 5.0).unwrap())
    });
}

fn bench_hog(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data: Vec<f32> = (0..256 * 256).map(|_| rng.gen_range(0.0..255.0)).collect();
    let patch = Patch { side: 256, data };
    c.bench_function("segmented_hog 256x256", |b| {
        b.iter(|| segmented_hog(black_box(&patch)).unwrap())
    });
}

fn bench_resize(c: &mut Criterion) {
    let frame = textured_frame(768, 384);
    let bbox = BBox { x0: 100, y0: 50, side: 200 };
    c.bench_function("resize_bilinear 200->256", |b| {
        b.iter(|| resize_bilinear(black_box(&frame), &bbox, 256).unwrap())
    });
}

fn bench_windows(c: &mut Criterion) {
    let pyramid = WindowPyramid::default();
    c.bench_function("generate_windows 1024x2048", |b| {
        b.iter(|| pyramid.generate_windows(black_box(2048), black_box(1024)))
    });
}

fn bench_gmm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<f64> = (0..6000)
        .map(|i| if i % 2 == 0 { rng.gen_range(35.0..55.0) } else { rng.gen_range(200.0..240.0) })
        .collect();
    c.bench_function("fit_gmm k=2 n=6000", |b| {
        b.iter(|| fit_gmm(black_box(&samples), 2, 42).unwrap())
    });
}

fn bench_nms(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let detections: Vec<Detection> = (0..500)
        .map(|_| Detection {
            bbox: BBox {
                x0: rng.gen_range(0..600),
                y0: rng.gen_range(0..300),
                side: rng.gen_range(64..256),
            },
            proba: rng.gen_range(0.0..1.0),
            timestamp: Timestamp::from_minutes(0),
        })
        .collect();
    c.bench_function("nms 500 boxes", |b| {
        b.iter(|| nms(black_box(detections.clone()), 0.30))
    });
}

criterion_group!(
    benches,
    bench_segment_frame,
    bench_motion_field,
    bench_hog,
    bench_resize,
    bench_windows,
    bench_gmm,
    bench_nms
);
criterion_main!(benches);

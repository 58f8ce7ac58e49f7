use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ttdf_core::corpus::{compress, generate_real_video, Compression};
use ttdf_core::eval::auc;
use ttdf_core::flow::{ofm_video, FlowEstimator, FlowParams, HornSchunck};
use ttdf_core::model::{forward, init_params, loss_and_grad, ClipInput, ModelConfig};

fn flow(c: &mut Criterion) {
    let v = generate_real_video(1, 9, 64).unwrap().video;
    let frames = v.frame_images();
    let hs = HornSchunck::new(FlowParams::default());
    c.bench_function("horn_schunck_64px_pair", |b| b.iter(|| hs.estimate(black_box(&frames[0]), &frames[1]).unwrap()));
    c.bench_function("ofm_video_9x64px", |b| b.iter(|| ofm_video(black_box(&v), &hs).unwrap()));
}

fn model(c: &mut Criterion) {
    let cfg = ModelConfig::default();
    let p = init_params(&cfg, 1).unwrap();
    let v = generate_real_video(2, 9, cfg.resolution).unwrap().video;
    let motion = ofm_video(&v, &HornSchunck::new(FlowParams::default())).unwrap();
    let n = cfg.frames * v.frame_len();
    let input = ClipInput { raw: &v.data[..n], motion: &motion.data[..n], height: v.height, width: v.width };
    c.bench_function("forward_default_clip", |b| b.iter(|| forward(&p, black_box(&input)).unwrap()));
    c.bench_function("loss_and_grad_default_clip", |b| b.iter(|| loss_and_grad(&p, black_box(&input), 1.0).unwrap()));
}

fn metrics(c: &mut Criterion) {
    let n = 10_000;
    let scores: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
    let labels: Vec<bool> = (0..n).map(|i| (i * 31) % 3 == 0).collect();
    c.bench_function("auc_10k", |b| b.iter(|| auc(black_box(&scores), &labels).unwrap()));
}

fn compression(c: &mut Criterion) {
    let v = generate_real_video(3, 16, 64).unwrap().video;
    c.bench_function("compress_c40_16x64px", |b| b.iter(|| compress(black_box(&v), Compression::C40).unwrap()));
}

criterion_group!(benches, flow, model, metrics, compression);
criterion_main!(benches);

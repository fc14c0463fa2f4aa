use criterion::{criterion_group, criterion_main, Criterion};
use dmrag_bench::{instances, random_fusion};
use dmrag_core::confidence::{loss_and_gradient, train, TrainConfig};
use std::hint::black_box;

fn fusion(c: &mut Criterion) {
    let features = random_fusion(39, 1);
    let values: Vec<f64> = (0..39).map(|i| (i as f64 + 0.5) / 39.0).collect();
    c.bench_function("fusion/posterior_39_channels", |b| {
        b.iter(|| features.posterior(black_box(&values)).unwrap())
    });

    let single = random_fusion(1, 2);
    let confs = [0.91, 0.12, 0.55, 0.97, 0.33, 0.78, 0.05, 0.64, 0.89, 0.41];
    c.bench_function("fusion/fuse_10_confidences", |b| {
        b.iter(|| single.fuse_confidences(black_box(&confs)).unwrap())
    });
}

fn logistic(c: &mut Criterion) {
    let data = instances(10_000, 39, 3);
    let w = vec![0.05; 39];
    c.bench_function("logistic/gradient_10k_x_39", |b| {
        b.iter(|| loss_and_gradient(black_box(&w), -0.3, &data, 0.0))
    });

    let small = instances(2_000, 39, 4);
    let cfg = TrainConfig {
        max_epochs: 200,
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("logistic");
    group.sample_size(10);
    group.bench_function("train_200_epochs_2k", |b| b.iter(|| train(black_box(&small), &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, fusion, logistic);
criterion_main!(benches);

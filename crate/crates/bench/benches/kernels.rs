use std::hint::black_box;

use aggnet_bench::{config, default_filter, warm_environment};
use aggnet_core::aggnn;
use aggnet_core::baselines::wmmse;
use aggnet_core::pdtrainer::Trainer;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn network(c: &mut Criterion) {
    let a = default_filter();
    let y = [1.0, 0.4, 0.2, 0.1, 0.05];
    c.bench_function("aggnn_forward", |b| b.iter(|| aggnn::forward(black_box(&a), black_box(&y)).unwrap()));
    let (_, acts) = aggnn::forward(&a, &y).unwrap();
    c.bench_function("aggnn_backward", |b| b.iter(|| aggnn::backward(black_box(&a), black_box(&acts), 1.0).unwrap()));
}

fn environment(c: &mut Criterion) {
    let mut g = c.benchmark_group("environment_step");
    for m in [25, 50, 100] {
        let (mut env, _) = warm_environment(m);
        g.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| b.iter(|| env.step().unwrap()));
    }
    g.finish();
}

fn baseline(c: &mut Criterion) {
    let mut g = c.benchmark_group("wmmse");
    for m in [25, 50] {
        let (_, obs) = warm_environment(m);
        let cfg = config(m);
        g.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| wmmse(black_box(&obs.gain), cfg.p0, cfg.wmmse_iters(), cfg.noise).unwrap())
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let cfg = config(25);
    let (mut env, _) = warm_environment(25);
    let mut trainer = Trainer::new(cfg.trainer_config(), default_filter(), 25).unwrap();
    c.bench_function("trainer_iteration_m25", |b| b.iter(|| trainer.iterate(&mut env).unwrap()));
}

criterion_group!(benches, network, environment, baseline, training);
criterion_main!(benches);

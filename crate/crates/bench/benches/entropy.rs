use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use srbflow_core::entropy::{entropy_gateaux, gradient_vector, SobolevMetric};
use srbflow_core::flow::{flow_step, FlowConfig};
use srbflow_core::response::response_density;
use srbflow_core::spectral::lab::run_lab;
use srbflow_core::verify::sine_map;
use srbflow_core::{TransferContext, VecField};

fn bench_derivatives(c: &mut Criterion) {
    let ctx = TransferContext::with_defaults(sine_map(0.05)).unwrap();
    ctx.gap().unwrap();
    let g = VecField::mode(1, 0, [1, 0], 0.0, 1.0).unwrap();
    c.bench_function("response/1d/256", |b| {
        b.iter(|| response_density(&ctx, black_box(&g), 1e-12).unwrap())
    });
    c.bench_function("gateaux/1d/256", |b| b.iter(|| entropy_gateaux(&ctx, black_box(&g)).unwrap()));
    let metric = SobolevMetric::default_for(1, 8).unwrap();
    c.bench_function("gradient/1d/256/M8", |b| b.iter(|| gradient_vector(&ctx, &metric).unwrap()));
}

fn bench_flow(c: &mut Criterion) {
    let metric = SobolevMetric::default_for(1, 8).unwrap();
    let cfg = FlowConfig::default_for(1);
    let f = sine_map(0.05);
    let mut group = c.benchmark_group("flow");
    group.sample_size(10);
    group.bench_function("step/1d/256", |b| b.iter(|| flow_step(&f, &metric, 1.0, &cfg).unwrap()));
    group.finish();
}

fn bench_lab(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral_lab");
    group.sample_size(10);
    group.bench_function("50x20", |b| b.iter(|| run_lab(black_box(0), 50, 20).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_derivatives, bench_flow, bench_lab);
criterion_main!(benches);

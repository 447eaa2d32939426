use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use srbflow_core::verify::sine_map;
use srbflow_core::{ExpandingMap, GridField, Numerics, TransferContext};

fn bench_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("transfer_apply");
    for n in [128usize, 256, 512] {
        let ctx = TransferContext::new(sine_map(0.1), Numerics::default_for(1).with_grid_size(n)).unwrap();
        let phi = GridField::from_fn(ctx.grid(), |p| 1.0 + 0.3 * (6.0 * p[0]).sin());
        group.bench_with_input(BenchmarkId::new("1d", n), &phi, |b, phi| {
            b.iter(|| ctx.apply(black_box(phi)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("1d_transpose", n), &phi, |b, phi| {
            b.iter(|| ctx.apply_transpose(black_box(phi)).unwrap())
        });
    }
    let diag = ExpandingMap::linear(2, &[vec![2, 0], vec![0, 2]]).unwrap();
    let ctx = TransferContext::new(diag, Numerics::default_for(2).with_grid_size(32)).unwrap();
    let phi = GridField::constant(ctx.grid(), 1.0);
    group.bench_function("2d/32", |b| b.iter(|| ctx.apply(black_box(&phi)).unwrap()));
    group.finish();
}

fn bench_setup(c: &mut Criterion) {
    c.bench_function("context/1d/256", |b| {
        b.iter(|| TransferContext::new(black_box(sine_map(0.1)), Numerics::default_for(1)).unwrap())
    });
    c.bench_function("density/1d/256", |b| {
        b.iter(|| {
            let ctx = TransferContext::new(sine_map(0.1), Numerics::default_for(1)).unwrap();
            ctx.density().unwrap().max()
        })
    });
}

criterion_group!(benches, bench_apply, bench_setup);
criterion_main!(benches);

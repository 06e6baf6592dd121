use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ssctm_bench::{three_cell, two_cell};
use ssctm_core::design::{design_localized, DesignOptions, GridSpec, Range};
use ssctm_core::model::AffineControlPolicy;
use ssctm_core::stability::{mean_drift, DesignScheme, InnerOptions};

fn drift(c: &mut Criterion) {
    let opts = InnerOptions::default();
    let (cfg, markov) = two_cell();
    let p = AffineControlPolicy::from_pairs(&[4750.0], &[25.0]).unwrap();
    c.bench_function("mean drift, two cells, localized", |b| {
        b.iter(|| mean_drift(DesignScheme::Localized, black_box(&p), &cfg, &markov, &opts).unwrap())
    });

    let (cfg, markov) = three_cell();
    let p = AffineControlPolicy::from_pairs(&[4950.0, 5700.0], &[25.0, 25.0]).unwrap();
    c.bench_function("mean drift, three cells, fully coordinated", |b| {
        b.iter(|| mean_drift(DesignScheme::FullyCoordinated, black_box(&p), &cfg, &markov, &opts).unwrap())
    });
}

fn grid(c: &mut Criterion) {
    let (cfg, markov) = two_cell();
    let grid = GridSpec::new(vec![Range::new(4000.0, 5500.0, 50.0)], vec![Range::new(20.0, 30.0, 1.0)]);
    let opts = DesignOptions { keep_log: false, ..DesignOptions::default() };
    let mut group = c.benchmark_group("design");
    group.sample_size(10);
    group.bench_function("localized grid, 341 candidates", |b| {
        b.iter(|| design_localized(&cfg, &markov, black_box(&grid), &opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, drift, grid);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use deadtime_core::{
    apply_deadtime_shift, build_base_exponent, build_baseline, build_fast, cumulative_flux, flux, normalize_rows,
    stationary, SystemParams,
};

const SIZES: [usize; 6] = [32, 64, 128, 256, 512, 1024];

fn construction(c: &mut Criterion) {
    let mut group = c.benchmark_group("construction");
    for n_b in SIZES {
        let p = SystemParams::default().with_bins(n_b);
        group.throughput(Throughput::Elements((n_b * n_b) as u64));
        group.bench_with_input(BenchmarkId::new("fast", n_b), &p, |b, p| {
            b.iter(|| build_fast(black_box(p)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("composed", n_b), &p, |b, p| {
            b.iter(|| apply_deadtime_shift(&build_base_exponent(black_box(p)).unwrap(), p).unwrap())
        });
        if n_b <= 256 {
            group.bench_with_input(BenchmarkId::new("baseline", n_b), &p, |b, p| {
                b.iter(|| build_baseline(black_box(p)).unwrap())
            });
        }
    }
    group.finish();
}

fn setup_terms(c: &mut Criterion) {
    let p = SystemParams::default().with_bins(32);
    let centers = p.grid().centers().to_vec();
    c.bench_function("setup/grid_32", |b| b.iter(|| black_box(&p).grid()));
    c.bench_function("setup/cumulative_flux_32", |b| {
        b.iter(|| {
            centers
                .iter()
                .map(|&s| cumulative_flux(black_box(&p), s).unwrap())
                .sum::<f64>()
        })
    });
    c.bench_function("setup/flux_32", |b| {
        b.iter(|| centers.iter().map(|&s| flux(black_box(&p), s).unwrap()).sum::<f64>())
    });
    c.bench_function("setup/validate", |b| b.iter(|| black_box(&p).validate()));
}

fn pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(20);
    for n_b in [64, 256] {
        let p = SystemParams::default().with_bins(n_b);
        group.bench_with_input(BenchmarkId::new("predict", n_b), &p, |b, p| {
            b.iter(|| {
                let m = normalize_rows(&build_fast(p).unwrap()).unwrap();
                stationary(&m, 1e-12, 1_000_000).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, construction, setup_terms, pipeline);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use pianosync_core::dtw::{dtw_full, mrmsdtw, CostConfig, SyncFeatures};
use pianosync_core::features::{FeatureKind, FeatureMatrix};

fn features(n: usize, phase: f64) -> SyncFeatures {
    let chroma = Array2::from_shape_fn((n, 12), |(t, k)| {
        1.0 + ((t as f64 * 0.07 + phase) * (k + 1) as f64).sin()
    });
    SyncFeatures::new(
        FeatureMatrix::new(chroma, 50, FeatureKind::Chroma).unwrap(),
        None,
    )
    .unwrap()
}

fn bench_dtw(c: &mut Criterion) {
    let cfg = CostConfig::default();
    let mut group = c.benchmark_group("dtw");
    group.sample_size(10);
    for n in [250, 500] {
        let (a, b) = (features(n, 0.0), features(n + n / 10, 0.3));
        group.bench_with_input(BenchmarkId::new("full", n), &n, |bench, _| {
            bench.iter(|| dtw_full(&a, &b, &cfg).unwrap())
        });
    }
    let (a, b) = (features(2000, 0.0), features(2100, 0.3));
    group.bench_function("mrmsdtw_2000", |bench| {
        bench.iter(|| mrmsdtw(&a, &b, &cfg, 1_000_000).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_dtw);
criterion_main!(benches);

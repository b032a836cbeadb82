use ata_bench::{square, tall};
use ata_core::{ata, build_tree, classical_ata_oracle, hasa, run_parallel, AtaConfig, HasaConfig, RuntimeOptions};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn serial(c: &mut Criterion) {
    let mut g = c.benchmark_group("serial");
    g.sample_size(10);
    for n in [128, 256, 512] {
        let a = square(n);
        let cfg = AtaConfig::default();
        g.bench_with_input(BenchmarkId::new("ata", n), &a, |b, a| b.iter(|| ata(&a.view(), &cfg).unwrap()));
        g.bench_with_input(BenchmarkId::new("oracle", n), &a, |b, a| b.iter(|| classical_ata_oracle(&a.view())));
    }
    let t = tall(256);
    g.bench_function("ata/tall-512x256", |b| b.iter(|| ata(&t.view(), &AtaConfig::default()).unwrap()));
    g.finish();
}

fn strassen(c: &mut Criterion) {
    let mut g = c.benchmark_group("hasa");
    g.sample_size(10);
    for n in [128, 256] {
        let (x, y) = (square(n), tall(n / 2));
        let x = x.view().sub(0, 0, n, n);
        let y = y.view().sub(0, 0, n, n / 2);
        g.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| hasa(&x, &y, &HasaConfig::default()).unwrap())
        });
    }
    g.finish();
}

fn threshold(c: &mut Criterion) {
    let mut g = c.benchmark_group("base_threshold");
    g.sample_size(10);
    let a = square(256);
    for t in [8, 16, 32, 64, 128] {
        let cfg = AtaConfig { base_threshold: t, count_mults: false };
        g.bench_with_input(BenchmarkId::from_parameter(t), &cfg, |b, cfg| b.iter(|| ata(&a.view(), cfg).unwrap()));
    }
    g.finish();
}

fn parallel(c: &mut Criterion) {
    let mut g = c.benchmark_group("parallel");
    g.sample_size(10);
    let a = square(512);
    let opts = RuntimeOptions::default();
    for p in [1, 6, 15] {
        let tree = build_tree(p, a.rows(), a.cols()).unwrap();
        g.bench_function(BenchmarkId::new("P", p), |b| b.iter(|| run_parallel(&a, &tree, &opts).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, serial, strassen, threshold, parallel);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use depthcal::estimation::Method;
use depthcal::simulator::{run_cells, run_cells_sequential, LoadedSuite, SceneConfig, SuiteConfig};

fn suite(methods: Vec<Method>) -> LoadedSuite {
    LoadedSuite::new(
        SuiteConfig { methods, seed_count: 8, ..SuiteConfig::default() },
        vec![SceneConfig { frames: 40, ..SceneConfig::default() }],
    )
    .unwrap()
}

fn cells(c: &mut Criterion) {
    let mut group = c.benchmark_group("suite_cells");
    group.sample_size(10);
    for (name, methods) in [("kf", vec![Method::Kf, Method::StaticScale]), ("hybrid", vec![Method::Hybrid])] {
        let s = suite(methods);
        let cells = s.cells();
        group.bench_with_input(BenchmarkId::new("sequential", name), &cells, |b, cells| {
            b.iter(|| run_cells_sequential(&s.scenes, cells, false))
        });
        group.bench_with_input(BenchmarkId::new("parallel", name), &cells, |b, cells| {
            b.iter(|| run_cells(&s.scenes, cells, false, 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, cells);
criterion_main!(benches);

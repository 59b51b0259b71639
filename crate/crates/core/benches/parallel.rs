use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pinning_core::continuum::{classify_grid, required_window, select_scales, ObstacleSet};
use pinning_core::discrete::{construct_supersolution, SearchBudget};
use pinning_core::dynamics::{simulate, Boundary, InterfaceState, SimParams};
use pinning_core::exec::map_indexed;
use pinning_core::media::mean_max_mc;
use pinning_core::{DistributionSpec, Exec, SeededField};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn mean_max(c: &mut Criterion) {
    let spec = DistributionSpec::bernoulli_pm1(0.45).unwrap();
    let mut g = c.benchmark_group("mean_max_mc");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "1e5"), |b| b.iter(|| mean_max_mc(&spec, 100_000, 16, 1, exec)));
    }
    g.finish();
}

fn path_batch(c: &mut Criterion) {
    let spec = DistributionSpec::bernoulli_pm1(0.5).unwrap();
    let mut g = c.benchmark_group("path_batch");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "32x1e4"), |b| {
            b.iter(|| {
                map_indexed(32, exec, |s| {
                    let field = SeededField::new(s as u64, spec.clone());
                    construct_supersolution(&field, 0, 0, 10_000, SearchBudget::default(), Exec::Sequential)
                        .unwrap()
                        .v(10_000)
                })
            })
        });
    }
    g.finish();
}

fn classification(c: &mut Criterion) {
    let scales = select_scales(1.0, 1.6, 1.0, 0.01).unwrap();
    let window = required_window(0, 64, 16, &scales);
    let obstacles = ObstacleSet::generate(window, &scales, 9).unwrap();
    let mut g = c.benchmark_group("classify_grid");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "64x16"), |b| {
            b.iter(|| classify_grid(0, 64, 16, &obstacles, &scales, exec).unwrap())
        });
    }
    g.finish();
}

fn dynamics_ensemble(c: &mut Criterion) {
    let field = SeededField::new(3, DistributionSpec::bernoulli_pm1(0.6).unwrap());
    let mut g = c.benchmark_group("dynamics_ensemble");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "16x256"), |b| {
            b.iter(|| {
                map_indexed(16, exec, |s| {
                    let st = InterfaceState::flat(256, 0, Boundary::Periodic, 0);
                    simulate(&field, st, &SimParams::new(0, 200.0, s as u64), &mut []).unwrap().max_height
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, mean_max, path_batch, classification, dynamics_ensemble);
criterion_main!(benches);

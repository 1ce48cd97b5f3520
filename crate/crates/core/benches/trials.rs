use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use timecheck_core::challenge::{collision_probe, ProbeShape};
use timecheck_core::device::{run_trials, Scenario};
use timecheck_core::exec::Execution;
use timecheck_core::field::MERSENNE_61;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_trials(c: &mut Criterion) {
    let scenario = Scenario::sram_baseline(1);
    let mut group = c.benchmark_group("run_trials");
    for n in [8u32, 32] {
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| run_trials(black_box(&scenario), n, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_probe(c: &mut Criterion) {
    let shape = ProbeShape { k: 4, p: MERSENNE_61, words: 64, passes: 2 };
    let mut group = c.benchmark_group("collision_probe");
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| collision_probe(black_box(shape), 4_000, 7, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(
    name = benches;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(3));
    targets = bench_trials, bench_probe
);
criterion_main!(benches);

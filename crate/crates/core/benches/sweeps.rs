use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use matcap_core::fmc::capacity_bounds_report;
use matcap_core::memory::{mem_fmc, MemoryAugmentedDynamics};
use matcap_core::par;
use matcap_core::sweep::{random_system, SystemKind};

const SEED: u64 = 2024;

fn capacity_trial(n: usize, t: usize) -> f64 {
    let d = random_system(SystemKind::Normal, n, 0.95, SEED, t);
    capacity_bounds_report(&d).unwrap().j_tot_rel
}

fn mem_trial(n: usize, t: usize) -> f64 {
    let d = random_system(SystemKind::Normal, n, 0.95, SEED, t);
    mem_fmc(&MemoryAugmentedDynamics::new(d, 3, 100)).unwrap().capacity
}

fn bench_capacity(c: &mut Criterion) {
    let mut g = c.benchmark_group("capacity_sweep");
    g.sample_size(10);
    for n in [4usize, 10] {
        g.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| par::map_indexed(32, |t| capacity_trial(n, t)))
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| par::map_indexed_seq(32, |t| capacity_trial(n, t)))
        });
    }
    g.finish();
}

fn bench_memory(c: &mut Criterion) {
    let mut g = c.benchmark_group("mem_fmc_sweep");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| par::map_indexed(16, |t| mem_trial(6, t))));
    g.bench_function("sequential", |b| b.iter(|| par::map_indexed_seq(16, |t| mem_trial(6, t))));
    g.finish();
}

criterion_group!(benches, bench_capacity, bench_memory);
criterion_main!(benches);

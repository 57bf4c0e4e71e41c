use std::hint::black_box;

use coordscope::lp;
use coordscope::milp::{build_problem, decide, default_epsilon};
use coordscope::sim::{self, NetworkSpec};
use coordscope_bench::{coordinated, independent, packing_lp};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simplex(c: &mut Criterion) {
    let mut g = c.benchmark_group("simplex");
    for size in [10, 40, 80] {
        let prog = packing_lp(size, size);
        g.bench_with_input(BenchmarkId::from_parameter(size), &prog, |b, p| b.iter(|| lp::solve(black_box(p)).unwrap()));
    }
    g.finish();
}

fn decide_bench(c: &mut Criterion) {
    let mut g = c.benchmark_group("decide");
    g.sample_size(20);
    for steps in [5, 10, 20] {
        let d = coordinated(steps, 1);
        let p = build_problem(&d, default_epsilon(&d)).unwrap();
        g.bench_with_input(BenchmarkId::new("coordinated", steps), &p, |b, p| b.iter(|| decide(black_box(p)).unwrap()));
    }
    let d = independent(10, 1);
    let p = build_problem(&d, default_epsilon(&d)).unwrap();
    g.bench_function("independent/10", |b| b.iter(|| decide(black_box(&p)).unwrap()));
    g.finish();
}

fn allocate(c: &mut Criterion) {
    let spec = NetworkSpec::tri_radar();
    let probe = sim::sample_probe(&mut ChaCha8Rng::seed_from_u64(4), 2);
    c.bench_function("allocate/tri_radar", |b| b.iter(|| sim::allocate(&spec, black_box(&probe)).unwrap()));
}

criterion_group!(benches, simplex, decide_bench, allocate);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stswe_bench::manufactured;
use stswe_core::{dorfler_mark, indicators, jacobian, representer, residual};

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    for n in [8, 16, 32] {
        let f = manufactured(n);
        group.bench_with_input(BenchmarkId::new("residual", n), &f, |b, f| {
            b.iter(|| residual(&f.state, &f.spec, &f.disc).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("jacobian", n), &f, |b, f| {
            b.iter(|| jacobian(&f.state, &f.spec, &f.disc).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("representer", n), &f, |b, f| {
            b.iter(|| representer(&f.state, &f.spec, &f.disc).unwrap())
        });
    }
    group.finish();
}

fn refinement(c: &mut Criterion) {
    let mut group = c.benchmark_group("refinement");
    for n in [16, 32] {
        let f = manufactured(n);
        let ind = indicators(&representer(&f.state, &f.spec, &f.disc).unwrap());
        group.bench_with_input(BenchmarkId::new("mark", n), &ind, |b, ind| {
            b.iter(|| dorfler_mark(ind, 0.5).unwrap())
        });
        let marked = dorfler_mark(&ind, 0.5).unwrap();
        let mesh = f.disc.mesh().clone();
        group.bench_with_input(BenchmarkId::new("bisect", n), &marked, |b, marked| {
            b.iter(|| mesh.bisect(marked).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, assembly, refinement);
criterion_main!(benches);

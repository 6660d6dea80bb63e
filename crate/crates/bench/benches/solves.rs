use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stswe_bench::manufactured;
use stswe_core::cases::{lake_case, manufactured_case, ManufacturedParams, ADAPT_MESH, LAKE_MESH};
use stswe_core::{
    adapt_loop, newton_solve, AdaptConfig, Discretization, NewtonConfig, SpaceConfig,
};

fn newton(c: &mut Criterion) {
    let mut group = c.benchmark_group("newton");
    group.sample_size(10);
    for n in [4, 8, 16] {
        let f = manufactured(n);
        group.bench_with_input(BenchmarkId::new("manufactured", n), &f, |b, f| {
            b.iter(|| {
                newton_solve(f.state.clone(), &f.spec, &f.disc, &NewtonConfig::default()).unwrap()
            })
        });
    }
    let spec = lake_case();
    let mesh = spec.structured_mesh(LAKE_MESH.0, LAKE_MESH.1).unwrap();
    let disc = Discretization::new(Arc::new(mesh), SpaceConfig::default()).unwrap();
    let guess = disc.initial_guess(&spec).unwrap();
    group.bench_function("lake", |b| {
        b.iter(|| newton_solve(guess.clone(), &spec, &disc, &NewtonConfig::default()).unwrap())
    });
    group.finish();
}

fn adaptivity(c: &mut Criterion) {
    let mut group = c.benchmark_group("adapt");
    group.sample_size(10);
    let spec = manufactured_case(ManufacturedParams::convective());
    let mesh = Arc::new(spec.structured_mesh(ADAPT_MESH.0, ADAPT_MESH.1).unwrap());
    let cfg = AdaptConfig {
        max_refinements: 4,
        ..AdaptConfig::default()
    };
    group.bench_function("convective", |b| {
        b.iter(|| adapt_loop(&spec, mesh.clone(), SpaceConfig::default(), &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, newton, adaptivity);
criterion_main!(benches);

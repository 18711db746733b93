use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use geot_bench::{instance, three_location_example};
use geot_core::entropic::{sinkhorn_masses, SinkhornConfig};
use geot_core::exact::solve_transport;
use geot_core::partial::{solve_partial_masses, Penalty};
use geot_core::ExactSolverConfig;

fn exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact");
    group.sample_size(10);
    let (p, q, costs) = three_location_example();
    group.bench_function("three_locations", |b| {
        b.iter(|| solve_transport(&p, &q, &costs, &ExactSolverConfig::default(), true).unwrap())
    });
    for n in [50, 100, 200] {
        let inst = instance(n, 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &inst, |b, inst| {
            b.iter(|| {
                solve_transport(&inst.pred, &inst.obs, &inst.costs, &ExactSolverConfig::default(), true)
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn partial(c: &mut Criterion) {
    let mut group = c.benchmark_group("partial");
    group.sample_size(10);
    for n in [50, 100] {
        let inst = instance(n, 11);
        let obs: Vec<f64> = inst.obs.iter().map(|m| m * 1.1).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                solve_partial_masses(
                    &inst.pred,
                    &obs,
                    &inst.costs,
                    &Penalty::Uniform(0.0),
                    &ExactSolverConfig::default(),
                    true,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn sinkhorn(c: &mut Criterion) {
    let mut group = c.benchmark_group("sinkhorn");
    group.sample_size(10);
    let cfg = SinkhornConfig::default();
    for n in [50, 100, 200, 400] {
        let inst = instance(n, 7);
        let eps = cfg.epsilon.resolve(&inst.costs).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &inst, |b, inst| {
            b.iter(|| sinkhorn_masses(&inst.pred, &inst.obs, &inst.costs, eps, &cfg, true).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, exact, partial, sinkhorn);
criterion_main!(benches);

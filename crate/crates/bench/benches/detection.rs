use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mlsc::model::{sample_network_with_psi, scenario_schedule, uniform_pi};
use mlsc::{
    algorithm1, sample_memberships, submatrix, sum_squared_adjacency, top_k_eigenpairs, prune,
    degree_stats, MultiRelationalNetwork, Scenario, Variant,
};

fn scenario1(n: usize, t: usize) -> MultiRelationalNetwork {
    let s = scenario_schedule(Scenario::Scenario1NodeSweep, Variant::Sbm, n, t, 0).unwrap();
    let z = sample_memberships(n, &uniform_pi(4), 1).unwrap();
    sample_network_with_psi(&s.schedule, &z, None, 2).unwrap()
}

fn sum_squares(c: &mut Criterion) {
    let mut group = c.benchmark_group("sum_squared_adjacency");
    for n in [1000, 4000] {
        let net = scenario1(n, 11);
        group.bench_with_input(BenchmarkId::from_parameter(n), &net, |b, net| {
            b.iter(|| sum_squared_adjacency(black_box(net)))
        });
    }
    group.finish();
}

fn eigenpairs(c: &mut Criterion) {
    let mut group = c.benchmark_group("top_k_eigenpairs");
    group.sample_size(20);
    for n in [1000, 4000] {
        let net = scenario1(n, 11);
        let kept = prune(&degree_stats(&net)).unwrap().kept;
        let m = submatrix(&sum_squared_adjacency(&net), &kept).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| {
            b.iter(|| top_k_eigenpairs(black_box(m), 4, 0).unwrap())
        });
    }
    group.finish();
}

fn end_to_end(c: &mut Criterion) {
    let mut group = c.benchmark_group("algorithm1");
    group.sample_size(10);
    for n in [1000, 2000] {
        let net = scenario1(n, 11);
        group.bench_with_input(BenchmarkId::from_parameter(n), &net, |b, net| {
            b.iter(|| algorithm1(black_box(net), 4, 0.5, 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sum_squares, eigenpairs, end_to_end);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rsp_game::equilibrium::{solve_gne, solve_monopoly};
use rsp_game::network::{build_two_cluster_instance, TwoClusterParams};
use rsp_game::programs::assemble_potential_game;
use rsp_game::qp::{solve_qp, SolverSettings};

fn instance(n: usize, q: f64) -> rsp_game::network::ProblemInstance {
    build_two_cluster_instance(&TwoClusterParams {
        n,
        q,
        ..Default::default()
    })
    .unwrap()
}

fn assembly(c: &mut Criterion) {
    let inst = instance(10, 0.25);
    c.bench_function("assemble potential n=10", |b| {
        b.iter(|| assemble_potential_game(black_box(&inst)).unwrap())
    });
}

fn qp_solve(c: &mut Criterion) {
    let settings = SolverSettings::default();
    let mut group = c.benchmark_group("potential qp");
    group.sample_size(10);
    for n in [3, 10] {
        let game = assemble_potential_game(&instance(n, 0.25)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &game, |b, game| {
            b.iter(|| solve_qp(black_box(&game.program), &settings).unwrap())
        });
    }
    group.finish();
}

fn equilibrium(c: &mut Criterion) {
    let settings = SolverSettings::default();
    let inst = instance(3, 0.25);
    let mut group = c.benchmark_group("n=3");
    group.sample_size(10);
    group.bench_function("solve_gne with verification", |b| {
        b.iter(|| solve_gne(black_box(&inst), &settings).unwrap())
    });
    group.bench_function("pooled monopoly", |b| {
        b.iter(|| solve_monopoly(black_box(&inst), true, &settings).unwrap())
    });
    group.finish();
}

criterion_group!(benches, assembly, qp_solve, equilibrium);
criterion_main!(benches);

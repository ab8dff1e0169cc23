use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hocl_bench::{reference_problem, PhaseFixture};
use hocl_core::dynamics::{integrate_adjoint, integrate_forward, Agent, ControlTrajectory};
use hocl_core::{run_algorithm_1, run_algorithm_2, run_algorithm_o, SolverOptions};

fn sweeps(c: &mut Criterion) {
    let prob = reference_problem();
    let u1 = ControlTrajectory::zeros(prob.grid(), Agent::Leader, 2);
    let u2 = ControlTrajectory::zeros(prob.grid(), Agent::Follower, 2);
    c.bench_function("forward_reference", |b| {
        b.iter(|| integrate_forward(prob.theta0(), &u1, &u2, &prob).unwrap())
    });
    let theta = integrate_forward(prob.theta0(), &u1, &u2, &prob).unwrap();
    c.bench_function("leader_adjoint_reference", |b| {
        b.iter(|| integrate_adjoint(Agent::Leader, &theta, &prob).unwrap())
    });
}

fn solvers(c: &mut Criterion) {
    let prob = reference_problem();
    let opts = SolverOptions { max_outer: 20, ..Default::default() };
    let mut group = c.benchmark_group("solve_20_outer");
    group.sample_size(10);
    group.bench_function("baseline", |b| b.iter(|| run_algorithm_o(&prob, &opts).unwrap()));
    group.bench_function("msa", |b| b.iter(|| run_algorithm_1(&prob, &opts).unwrap()));
    group.bench_function("parallel", |b| b.iter(|| run_algorithm_2(&prob, &opts).unwrap()));
    group.finish();
}

fn subinterval_phase(c: &mut Criterion) {
    let mut group = c.benchmark_group("follower_phase_p8_nc64_s32");
    group.sample_size(10);
    for workers in [1, 2, 4] {
        let fixture = PhaseFixture::new(8, 64, 32, workers).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(workers), &fixture, |b, f| b.iter(|| f.run().unwrap()));
    }
    group.finish();
}

criterion_group!(benches, sweeps, solvers, subinterval_phase);
criterion_main!(benches);

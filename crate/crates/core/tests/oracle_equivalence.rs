use hocl_core::dynamics::{Agent, ControlTrajectory};
use hocl_core::instances::reference_spec;
use hocl_core::oracle::{direct_transcription_solve, discrete_cost, fd_projected_residual};
use hocl_core::{cost_j2, integrate_forward, run_algorithm_1, run_algorithm_o, Problem, SolveReport, SolverOptions};

const REL_TOL: f64 = 1e-3;

fn reference() -> Problem {
    Problem::new(reference_spec()).unwrap()
}

fn follower_vs_oracle(prob: &Problem, report: &SolveReport) -> (f64, ControlTrajectory, ControlTrajectory) {
    let (u1, u2) = report.controls(prob).unwrap();
    let oracle = direct_transcription_solve(Agent::Follower, prob, &u1).unwrap();
    (u2.l2_distance(&oracle) / oracle.l2_norm(), u2, oracle)
}

#[test]
fn baseline_follower_matches_oracle() {
    let prob = reference();
    let report = run_algorithm_o(&prob, &SolverOptions::default()).unwrap();
    assert!(report.converged);
    let (rel, _, _) = follower_vs_oracle(&prob, &report);
    assert!(rel <= REL_TOL, "{rel}");
}

#[test]
fn msa_follower_matches_oracle() {
    let prob = reference();
    let report = run_algorithm_1(&prob, &SolverOptions::default()).unwrap();
    assert!(report.converged);
    let (rel, _, _) = follower_vs_oracle(&prob, &report);
    assert!(rel <= REL_TOL, "{rel}");
}

#[test]
fn oracle_is_no_worse_than_the_adjoint_solver() {
    let prob = reference();
    let report = run_algorithm_1(&prob, &SolverOptions::default()).unwrap();
    let (u1, u2) = report.controls(&prob).unwrap();
    let oracle = direct_transcription_solve(Agent::Follower, &prob, &u1).unwrap();
    let j_oracle = discrete_cost(Agent::Follower, &prob, oracle.values(), &u1).unwrap();
    let j_solver = discrete_cost(Agent::Follower, &prob, u2.values(), &u1).unwrap();
    assert!(j_oracle <= j_solver + 1e-6, "{j_oracle} vs {j_solver}");
    let theta = integrate_forward(prob.theta0(), &u1, &u2, &prob).unwrap();
    assert!((cost_j2(&theta, &u2, &prob).unwrap() - j_solver).abs() <= 1e-12);
}

#[test]
fn oracle_residual_is_small() {
    let prob = reference();
    let u1 = ControlTrajectory::zeros(prob.grid(), Agent::Leader, 2);
    let oracle = direct_transcription_solve(Agent::Follower, &prob, &u1).unwrap();
    let r = fd_projected_residual(Agent::Follower, &prob, &oracle, &u1).unwrap();
    assert!(r <= 1e-5, "{r}");
}

#[test]
fn oracle_is_reproducible() {
    let prob = reference();
    let u1 = ControlTrajectory::zeros(prob.grid(), Agent::Leader, 2);
    let a = direct_transcription_solve(Agent::Follower, &prob, &u1).unwrap();
    let b = direct_transcription_solve(Agent::Follower, &prob, &u1).unwrap();
    assert_eq!(a, b);
}

//! Hierarchical (leader/follower) optimal control of a controlled gradient
//! flow `θ̇ = −∇J₀(θ) + u₁ + u₂`, with successive-approximation solvers.

// Negated comparisons reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod instances;
pub mod oracle;
pub mod problem;
pub mod rng;
pub mod solver;

pub use cost::{cost_j1, cost_j2, leader_objective, phi_gap};
pub use dynamics::{
    augmented_hamiltonian, control_gradient, extremum_residual, hamiltonian, integrate_adjoint,
    integrate_forward, interval_costate, AdjointTrajectory, Agent, ControlPartition,
    ControlTrajectory, IntervalCostate, Residual, StateTrajectory, TerminalSign, TimeGrid,
};
pub use error::{Error, Result};
pub use problem::{
    bootstrap_indices, bootstrap_split, synthetic_linear, Dataset, LeastSquares, ModelKind,
    ModelSpec, Problem, ProblemSpec,
};
pub use rng::SeedStream;
pub use solver::{
    run_algorithm_1, run_algorithm_2, run_algorithm_o, solve, Algorithm, SolveReport,
    SolverOptions, StepSign,
};

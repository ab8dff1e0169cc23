//! The three nested leader/follower solvers and their shared report types.

mod baseline;
mod msa;
mod parareal;

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use baseline::{follower_gradient_step, leader_gradient_step, run_algorithm_o};
pub use msa::{argmin_aug_h_follower, argmin_aug_h_leader, run_algorithm_1};
pub use parareal::{
    concatenate, intermediate_state, perturbation_check, run_algorithm_2, solve_subinterval,
    subcost_follower, subcost_leader, subinterval_phase, total_cost_bar, worker_pool, CoarseLayout,
    IntermediateTrajectory, ParallelDiagnostics, PerturbationCheck, Segment, PERTURBATION_SEED,
};

use crate::cost::{cost_j1, cost_j2, leader_objective, phi_gap};
use crate::dynamics::{
    extremum_residual, integrate_forward, interval_costate, Agent, ControlTrajectory,
    IntervalCostate, Residual, StateTrajectory,
};
use crate::error::{check_len, Error, Result};
use crate::problem::Problem;

/// Version of the serialized [`SolveReport`] layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Report fields that hold wall-clock measurements.
pub const TIMING_FIELDS: [&str; 3] = ["wall_time_s", "per_phase_time_s", "wall_s"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Baseline,
    Msa,
    Parallel,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Baseline => "baseline",
            Algorithm::Msa => "msa",
            Algorithm::Parallel => "parallel",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Algorithm::Baseline),
            "msa" => Ok(Algorithm::Msa),
            "parallel" => Ok(Algorithm::Parallel),
            other => Err(Error::InvalidOptions(format!(
                "unknown algorithm `{other}` (expected baseline, msa or parallel)"
            ))),
        }
    }
}

/// Direction of the gradient correction in the baseline solver.
///
/// `Descent` is `u ← u − γ·∂H/∂u`. `Ascent` is `u ← u + γ·∂H/∂u`, kept to
/// show what the opposite sign does.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSign {
    #[default]
    Descent,
    Ascent,
}

impl StepSign {
    pub fn value(self) -> f64 {
        match self {
            StepSign::Descent => -1.0,
            StepSign::Ascent => 1.0,
        }
    }
}

/// Solver knobs that are not part of the problem itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Follower sweeps per outer iteration in the baseline solver.
    pub inner_iters: usize,
    pub max_outer: usize,
    /// Projected-gradient budget of each subinterval solve.
    pub sub_iters: usize,
    pub sub_tol: f64,
    /// Weight of the leader's subinterval continuity penalty.
    pub lambda: f64,
    pub workers: usize,
    /// Number of subintervals; `None` picks the divisor of `N` closest to `N/16`.
    pub coarse_intervals: Option<usize>,
    pub step_sign: StepSign,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            inner_iters: 20,
            max_outer: 2000,
            sub_iters: 50,
            sub_tol: 1e-10,
            lambda: 1.0,
            workers: 1,
            coarse_intervals: None,
            step_sign: StepSign::Descent,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidOptions(msg));
        if self.max_outer == 0 {
            return bad("max_outer must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(self.sub_tol >= 0.0) {
            return bad(format!("sub_tol = {} must be >= 0", self.sub_tol));
        }
        if !(self.lambda > 0.0) {
            return bad(format!("lambda = {} must be positive", self.lambda));
        }
        if self.coarse_intervals == Some(0) {
            return bad("coarse_intervals must be at least 1".into());
        }
        Ok(())
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iter: usize,
    #[serde(rename = "J1")]
    pub j1: f64,
    #[serde(rename = "J2")]
    pub j2: f64,
    pub leader_residual: f64,
    pub follower_residual: f64,
    pub leader_raw: f64,
    pub follower_raw: f64,
    pub phi_gap: f64,
    pub wall_s: f64,
}

/// `J₂` just before and just after one follower update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerSweep {
    pub outer: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub converged: bool,
    pub theta_final: Vec<f64>,
    #[serde(rename = "J1")]
    pub j1: f64,
    #[serde(rename = "J2")]
    pub j2: f64,
    /// `J₁ ± Φ(θ(T))`, the quantity the leader descends.
    pub leader_objective: f64,
    pub phi: f64,
    pub phi_gap: f64,
    pub outer_iters: usize,
    pub leader_residual: f64,
    pub follower_residual: f64,
    pub residual_history: Vec<HistoryEntry>,
    pub leader_control: Vec<Vec<f64>>,
    pub follower_control: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<ParallelDiagnostics>,
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    pub wall_time_s: f64,
    pub per_phase_time_s: BTreeMap<String, f64>,
    #[serde(skip)]
    pub follower_sweeps: Vec<FollowerSweep>,
}

impl SolveReport {
    /// Final controls rebuilt on the problem grid.
    pub fn controls(&self, prob: &Problem) -> Result<(ControlTrajectory, ControlTrajectory)> {
        let rebuild = |agent, rows: &[Vec<f64>]| {
            let values = rows.iter().map(|r| DVector::from_column_slice(r)).collect();
            ControlTrajectory::new(prob.grid(), agent, values, prob.partition(), prob.u_max())
        };
        Ok((
            rebuild(Agent::Leader, &self.leader_control)?,
            rebuild(Agent::Follower, &self.follower_control)?,
        ))
    }

    /// JSON form with every wall-clock field removed, for reproducibility checks.
    pub fn without_timing(&self) -> Result<serde_json::Value> {
        let mut value = serde_json::to_value(self)?;
        strip_timing(&mut value);
        Ok(value)
    }
}

/// Removes [`TIMING_FIELDS`] from a JSON value, recursively.
pub fn strip_timing(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            for key in TIMING_FIELDS {
                map.remove(key);
            }
            map.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// Accumulated wall time per named phase.
#[derive(Debug, Default)]
pub(crate) struct PhaseTimer {
    totals: BTreeMap<String, f64>,
}

impl PhaseTimer {
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.totals.entry(phase.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }
}

fn check_problem(prob: &Problem, opts: &SolverOptions) -> Result<()> {
    opts.validate()?;
    check_len("theta0", prob.param_dim(), prob.theta0().len())
}

fn zero_controls(prob: &Problem) -> (ControlTrajectory, ControlTrajectory) {
    let (grid, p) = (prob.grid(), prob.param_dim());
    (
        ControlTrajectory::zeros(grid, Agent::Leader, p),
        ControlTrajectory::zeros(grid, Agent::Follower, p),
    )
}

/// Forward sweep plus the agent's costate and residual.
fn costate_and_residual(
    agent: Agent,
    theta: &StateTrajectory,
    u1: &ControlTrajectory,
    u2: &ControlTrajectory,
    prob: &Problem,
) -> Result<(IntervalCostate, Residual)> {
    let costate = interval_costate(agent, theta, prob)?;
    let residual = extremum_residual(&costate, u1, u2, prob)?;
    Ok((costate, residual))
}

fn history_entry(
    iter: usize,
    theta: &StateTrajectory,
    u2: &ControlTrajectory,
    leader: Residual,
    follower: Residual,
    prob: &Problem,
    start: Instant,
) -> Result<HistoryEntry> {
    Ok(HistoryEntry {
        iter,
        j1: cost_j1(theta),
        j2: cost_j2(theta, u2, prob)?,
        leader_residual: leader.projected,
        follower_residual: follower.projected,
        leader_raw: leader.raw,
        follower_raw: follower.raw,
        phi_gap: phi_gap(theta, prob)?,
        wall_s: start.elapsed().as_secs_f64(),
    })
}

struct Outcome {
    algorithm: Algorithm,
    converged: bool,
    outer_iters: usize,
    u1: ControlTrajectory,
    u2: ControlTrajectory,
    history: Vec<HistoryEntry>,
    sweeps: Vec<FollowerSweep>,
    diagnostics: Option<ParallelDiagnostics>,
}

fn finish(prob: &Problem, out: Outcome, timer: PhaseTimer, start: Instant) -> Result<SolveReport> {
    let theta = integrate_forward(prob.theta0(), &out.u1, &out.u2, prob)?;
    let last = out.history.last();
    let rows = |u: &ControlTrajectory| u.values().iter().map(|v| v.as_slice().to_vec()).collect();
    Ok(SolveReport {
        schema_version: SCHEMA_VERSION,
        algorithm: out.algorithm,
        converged: out.converged,
        theta_final: theta.terminal().as_slice().to_vec(),
        j1: cost_j1(&theta),
        j2: cost_j2(&theta, &out.u2, prob)?,
        leader_objective: leader_objective(&theta, prob)?,
        phi: prob.phi(theta.terminal())?,
        phi_gap: phi_gap(&theta, prob)?,
        outer_iters: out.outer_iters,
        leader_residual: last.map_or(f64::NAN, |h| h.leader_residual),
        follower_residual: last.map_or(f64::NAN, |h| h.follower_residual),
        residual_history: out.history,
        leader_control: rows(&out.u1),
        follower_control: rows(&out.u2),
        diagnostics: out.diagnostics,
        seeds: BTreeMap::new(),
        wall_time_s: start.elapsed().as_secs_f64(),
        per_phase_time_s: timer.totals,
        follower_sweeps: out.sweeps,
    })
}

/// Runs the selected solver.
pub fn solve(algorithm: Algorithm, prob: &Problem, opts: &SolverOptions) -> Result<SolveReport> {
    match algorithm {
        Algorithm::Baseline => run_algorithm_o(prob, opts),
        Algorithm::Msa => run_algorithm_1(prob, opts),
        Algorithm::Parallel => run_algorithm_2(prob, opts),
    }
}

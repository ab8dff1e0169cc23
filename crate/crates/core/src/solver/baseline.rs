//! Nested successive approximation with gradient corrections.
//!
//! The follower runs up to `inner_iters` corrections
//! `u₂ ← clamp(u₂ − γ₂(p₂ + βu₂))` to approximate its response to the current
//! leader control, then the leader takes one correction
//! `u₁ ← clamp(u₁ − γ₁p₁)`. `γ₁`, `γ₂` come from the problem.
//!
//! Step rule: the follower cost has curvature at most `β + αT²/2` in the L²
//! metric, so `J₂` does not increase along the inner loop when
//! `γ₂ ≤ 1/(β + αT²/2)`.

use std::time::Instant;

use crate::cost::cost_j2;
use crate::dynamics::{integrate_forward, Agent, ControlTrajectory, CostateValues};
use crate::error::{Error, Result};
use crate::problem::Problem;

use super::{
    check_problem, costate_and_residual, finish, history_entry, zero_controls, Algorithm,
    FollowerSweep, Outcome, PhaseTimer, SolveReport, SolverOptions, StepSign,
};

fn gradient_step(
    u: &ControlTrajectory,
    costate: &impl CostateValues,
    control_weight: f64,
    step: f64,
    sign: StepSign,
    prob: &Problem,
) -> ControlTrajectory {
    let s = sign.value() * step;
    let values = u
        .values()
        .iter()
        .zip(costate.interval_values())
        .map(|(uk, pk)| uk + (pk + uk * control_weight) * s)
        .collect();
    ControlTrajectory::projected(u.grid(), u.agent(), values, prob.partition(), prob.u_max())
}

/// `u₂ ← clamp(u₂ ∓ γ₂(p₂ + βu₂))` on the follower's coordinates.
pub fn follower_gradient_step(
    u2: &ControlTrajectory,
    p2: &impl CostateValues,
    step: f64,
    sign: StepSign,
    prob: &Problem,
) -> ControlTrajectory {
    debug_assert_eq!(u2.agent(), Agent::Follower);
    gradient_step(u2, p2, prob.beta(), step, sign, prob)
}

/// `u₁ ← clamp(u₁ ∓ γ₁p₁)` on the leader's coordinates.
pub fn leader_gradient_step(
    u1: &ControlTrajectory,
    p1: &impl CostateValues,
    step: f64,
    sign: StepSign,
    prob: &Problem,
) -> ControlTrajectory {
    debug_assert_eq!(u1.agent(), Agent::Leader);
    gradient_step(u1, p1, 0.0, step, sign, prob)
}

pub fn run_algorithm_o(prob: &Problem, opts: &SolverOptions) -> Result<SolveReport> {
    check_problem(prob, opts)?;
    let spec = prob.spec();
    let (g1, g2) = (spec.gamma1, spec.gamma2);
    if !(g1 > 0.0 && g2 > 0.0) {
        return Err(Error::InvalidOptions(format!(
            "baseline solver uses gamma1, gamma2 as step sizes; both must be positive (got {g1}, {g2})"
        )));
    }
    let eps = spec.eps_tol;
    let start = Instant::now();
    let mut timer = PhaseTimer::default();
    let (mut u1, mut u2) = zero_controls(prob);
    let mut history = Vec::new();
    let mut sweeps = Vec::new();
    let mut converged = false;
    let mut outer_iters = 0;

    let mut theta = timer.time("forward", || integrate_forward(prob.theta0(), &u1, &u2, prob))?;
    for outer in 1..=opts.max_outer {
        outer_iters = outer;
        for _ in 0..opts.inner_iters {
            let (p2, r2) = timer.time("follower_backward", || {
                costate_and_residual(Agent::Follower, &theta, &u1, &u2, prob)
            })?;
            if r2.projected <= eps / 10.0 {
                break;
            }
            let before = cost_j2(&theta, &u2, prob)?;
            u2 = timer.time("follower_update", || {
                follower_gradient_step(&u2, &p2, g2, opts.step_sign, prob)
            });
            theta = timer.time("forward", || integrate_forward(prob.theta0(), &u1, &u2, prob))?;
            sweeps.push(FollowerSweep {
                outer,
                before,
                after: cost_j2(&theta, &u2, prob)?,
            });
        }

        let (p1, r1) = timer.time("leader_backward", || {
            costate_and_residual(Agent::Leader, &theta, &u1, &u2, prob)
        })?;
        let (_, r2) = timer.time("follower_backward", || {
            costate_and_residual(Agent::Follower, &theta, &u1, &u2, prob)
        })?;
        history.push(history_entry(outer, &theta, &u2, r1, r2, prob, start)?);
        if r1.projected <= eps && r2.projected <= eps {
            converged = true;
            break;
        }
        u1 = timer.time("leader_update", || {
            leader_gradient_step(&u1, &p1, g1, opts.step_sign, prob)
        });
        theta = timer.time("forward", || integrate_forward(prob.theta0(), &u1, &u2, prob))?;
    }

    finish(
        prob,
        Outcome {
            algorithm: Algorithm::Baseline,
            converged,
            outer_iters,
            u1,
            u2,
            history,
            sweeps,
            diagnostics: None,
        },
        timer,
        start,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{AdjointTrajectory, TimeGrid};
    use crate::instances::{quadratic_spec, reference_spec};
    use crate::testing::{quadratic_problem, random_controls};
    use nalgebra::DVector;

    fn scalar_problem(u_max: f64) -> Problem {
        let mut spec = quadratic_spec(&[1.0, -1.0], 1.0, 1);
        spec.u_max = u_max;
        Problem::new(spec).unwrap()
    }

    fn adjoint(grid: TimeGrid, agent: Agent, values: &[f64]) -> AdjointTrajectory {
        AdjointTrajectory::new(grid, agent, values.iter().map(|x| DVector::from_vec(vec![*x, *x])).collect())
    }

    fn follower(prob: &Problem, x: f64) -> ControlTrajectory {
        ControlTrajectory::new(prob.grid(), Agent::Follower, vec![DVector::from_vec(vec![0.0, x])], prob.partition(), prob.u_max()).unwrap()
    }

    fn leader(prob: &Problem, x: f64) -> ControlTrajectory {
        ControlTrajectory::new(prob.grid(), Agent::Leader, vec![DVector::from_vec(vec![x, 0.0])], prob.partition(), prob.u_max()).unwrap()
    }

    #[test]
    fn follower_step_hand_values() {
        let prob = scalar_problem(10.0);
        let p = adjoint(prob.grid(), Agent::Follower, &[1.0, 0.0]);
        let out = follower_gradient_step(&follower(&prob, 0.0), &p, 0.5, StepSign::Descent, &prob);
        assert_eq!(out.value(0).as_slice(), &[0.0, -0.5]);
        // p + βu = 0 is stationary.
        let p = adjoint(prob.grid(), Agent::Follower, &[-2.0, 0.0]);
        let out = follower_gradient_step(&follower(&prob, 2.0), &p, 0.5, StepSign::Descent, &prob);
        assert_eq!(out.value(0).as_slice(), &[0.0, 2.0]);
        let tight = scalar_problem(0.3);
        let p = adjoint(tight.grid(), Agent::Follower, &[5.0, 0.0]);
        let out = follower_gradient_step(&follower(&tight, 0.0), &p, 0.5, StepSign::Descent, &tight);
        assert_eq!(out.value(0).as_slice(), &[0.0, -0.3]);
    }

    #[test]
    fn leader_step_hand_values() {
        let prob = scalar_problem(10.0);
        let u = leader(&prob, 1.0);
        let p = adjoint(prob.grid(), Agent::Leader, &[2.0, 0.0]);
        assert_eq!(leader_gradient_step(&u, &p, 0.25, StepSign::Descent, &prob).value(0)[0], 0.5);
        let zero = adjoint(prob.grid(), Agent::Leader, &[0.0, 0.0]);
        assert_eq!(leader_gradient_step(&u, &zero, 0.25, StepSign::Descent, &prob), u);
        let neg = adjoint(prob.grid(), Agent::Leader, &[-2.0, 0.0]);
        let up = leader_gradient_step(&u, &neg, 0.25, StepSign::Descent, &prob).value(0)[0] - 1.0;
        let down = leader_gradient_step(&u, &p, 0.25, StepSign::Descent, &prob).value(0)[0] - 1.0;
        assert_eq!(up, -down);
        assert_eq!(leader_gradient_step(&u, &p, 0.25, StepSign::Ascent, &prob).value(0)[0], 1.5);
    }

    #[test]
    fn steps_preserve_mask_and_box() {
        let prob = quadratic_problem(&[1.0, -1.0, 0.5], 1.0, 12);
        let (u1, u2) = random_controls(&prob, 3, 2.0);
        let theta = integrate_forward(prob.theta0(), &u1, &u2, &prob).unwrap();
        for agent in [Agent::Leader, Agent::Follower] {
            let (p, _) = costate_and_residual(agent, &theta, &u1, &u2, &prob).unwrap();
            let out = match agent {
                Agent::Leader => leader_gradient_step(&u1, &p, 0.9, StepSign::Descent, &prob),
                Agent::Follower => follower_gradient_step(&u2, &p, 0.9, StepSign::Descent, &prob),
            };
            out.check(prob.partition(), prob.u_max()).unwrap();
        }
    }

    #[test]
    fn huge_tolerance_stops_after_one_iteration() {
        let mut spec = reference_spec();
        spec.eps_tol = 1e9;
        let report = run_algorithm_o(&Problem::new(spec).unwrap(), &SolverOptions::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.outer_iters, 1);
        assert_eq!(report.residual_history.len(), 1);
    }

    #[test]
    fn optimal_start_stops_immediately() {
        // θ₀ = θ* = 0 makes every costate vanish when u = 0.
        let prob = quadratic_problem(&[0.0, 0.0], 1.0, 10);
        let report = run_algorithm_o(&prob, &SolverOptions::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.outer_iters, 1);
        assert!(report.follower_sweeps.is_empty());
    }

    #[test]
    fn zero_step_is_rejected() {
        let mut spec = reference_spec();
        spec.gamma2 = 0.0;
        assert!(run_algorithm_o(&Problem::new(spec).unwrap(), &SolverOptions::default()).is_err());
    }

    #[test]
    fn inner_loop_descends_and_stays_feasible() {
        let prob = Problem::new(reference_spec()).unwrap();
        let opts = SolverOptions { max_outer: 5, ..Default::default() };
        let report = run_algorithm_o(&prob, &opts).unwrap();
        assert!(!report.follower_sweeps.is_empty());
        for s in &report.follower_sweeps {
            assert!(s.after <= s.before + 1e-10, "{s:?}");
        }
        report.controls(&prob).unwrap();
    }

    #[test]
    fn runs_are_deterministic() {
        let prob = Problem::new(reference_spec()).unwrap();
        let opts = SolverOptions { max_outer: 20, ..Default::default() };
        let a = run_algorithm_o(&prob, &opts).unwrap();
        let b = run_algorithm_o(&prob, &opts).unwrap();
        assert_eq!(a.without_timing().unwrap(), b.without_timing().unwrap());
    }
}

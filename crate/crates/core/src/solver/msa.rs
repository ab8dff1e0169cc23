//! Successive approximation with augmented Hamiltonians.
//!
//! With `θ` and `p` frozen at the nominal trajectory the augmented
//! Hamiltonian is `H + (γ/2)‖u − ū‖²`, whose pointwise minimizer over the box
//! is available in closed form. Each outer iteration makes one follower
//! update and one leader update.

use std::time::Instant;

use nalgebra::DVector;

use crate::cost::cost_j2;
use crate::dynamics::{clamp, integrate_forward, Agent, ControlTrajectory, CostateValues};
use crate::error::Result;
use crate::problem::Problem;

use super::{
    check_problem, costate_and_residual, finish, history_entry, zero_controls, Algorithm,
    FollowerSweep, Outcome, PhaseTimer, SolveReport, SolverOptions,
};

/// Minimizer of `⟨u, p⟩ + (β/2)‖u‖² + (γ₂/2)‖u − ū‖²` over the box, on the
/// follower's coordinates: `clamp((γ₂ū − p)/(β + γ₂))`.
pub fn argmin_aug_h_follower(p2: &DVector<f64>, u2_bar: &DVector<f64>, prob: &Problem) -> DVector<f64> {
    let (beta, gamma, u_max) = (prob.beta(), prob.spec().gamma2, prob.u_max());
    let mut out = DVector::zeros(p2.len());
    for &i in prob.partition().indices(Agent::Follower) {
        out[i] = clamp((gamma * u2_bar[i] - p2[i]) / (beta + gamma), u_max);
    }
    out
}

/// Minimizer of `⟨u, p⟩ + (γ₁/2)‖u − ū‖²` over the box, on the leader's
/// coordinates. For `γ₁ = 0` this is bang-bang `−u_max·sign(p)` with
/// `sign(0) = 0`.
pub fn argmin_aug_h_leader(p1: &DVector<f64>, u1_bar: &DVector<f64>, prob: &Problem) -> DVector<f64> {
    let (gamma, u_max) = (prob.spec().gamma1, prob.u_max());
    let mut out = DVector::zeros(p1.len());
    for &i in prob.partition().indices(Agent::Leader) {
        out[i] = if gamma > 0.0 {
            clamp(u1_bar[i] - p1[i] / gamma, u_max)
        } else if p1[i] > 0.0 {
            -u_max
        } else if p1[i] < 0.0 {
            u_max
        } else {
            0.0
        };
    }
    out
}

fn update(
    u: &ControlTrajectory,
    costate: &impl CostateValues,
    prob: &Problem,
    argmin: fn(&DVector<f64>, &DVector<f64>, &Problem) -> DVector<f64>,
) -> ControlTrajectory {
    let values = u
        .values()
        .iter()
        .zip(costate.interval_values())
        .map(|(uk, pk)| argmin(pk, uk, prob))
        .collect();
    ControlTrajectory::projected(u.grid(), u.agent(), values, prob.partition(), prob.u_max())
}

pub fn run_algorithm_1(prob: &Problem, opts: &SolverOptions) -> Result<SolveReport> {
    check_problem(prob, opts)?;
    let eps = prob.spec().eps_tol;
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
        let (p2, _) = timer.time("follower_backward", || {
            costate_and_residual(Agent::Follower, &theta, &u1, &u2, prob)
        })?;
        let before = cost_j2(&theta, &u2, prob)?;
        u2 = timer.time("follower_update", || update(&u2, &p2, prob, argmin_aug_h_follower));
        theta = timer.time("forward", || integrate_forward(prob.theta0(), &u1, &u2, prob))?;
        sweeps.push(FollowerSweep {
            outer,
            before,
            after: cost_j2(&theta, &u2, prob)?,
        });

        // With ū = u the augmentation vanishes, so these are also the
        // augmented residuals.
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
        u1 = timer.time("leader_update", || update(&u1, &p1, prob, argmin_aug_h_leader));
        theta = timer.time("forward", || integrate_forward(prob.theta0(), &u1, &u2, prob))?;
    }

    finish(
        prob,
        Outcome {
            algorithm: Algorithm::Msa,
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
    use crate::dynamics::{augmented_hamiltonian, extremum_residual, interval_costate};
    use crate::instances::{quadratic_spec, reference_spec};
    use crate::rng::SeedStream;
    use proptest::prelude::*;

    fn problem(gamma1: f64, gamma2: f64, u_max: f64, leader: Vec<usize>, follower: Vec<usize>) -> Problem {
        let mut spec = quadratic_spec(&[1.0, -1.0], 1.0, 10);
        spec.gamma1 = gamma1;
        spec.gamma2 = gamma2;
        spec.u_max = u_max;
        spec.partition = crate::dynamics::ControlPartition::new(leader, follower);
        Problem::new(spec).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn follower_hand_values() {
        let prob = problem(0.5, 0.0, 10.0, vec![0], vec![1]);
        assert_eq!(argmin_aug_h_follower(&v(&[0.0, 3.0]), &v(&[0.0, 0.7]), &prob)[1], -3.0);
        let prob = problem(0.5, 0.99, 10.0, vec![0], vec![1]);
        assert_eq!(argmin_aug_h_follower(&v(&[0.0, 0.0]), &v(&[0.0, 0.0]), &prob)[1], 0.0);
    }

    #[test]
    fn follower_scalar_matches_grid_scan() {
        // β = 1, γ₂ = 1 sits outside the admissible range of a problem, so
        // the closed form is checked directly: (0 − 2)/2 = −1.
        let (beta, gamma, p, ubar) = (1.0f64, 1.0f64, 2.0f64, 0.0f64);
        let closed = ((gamma * ubar - p) / (beta + gamma)).clamp(-10.0, 10.0);
        assert_eq!(closed, -1.0);
        let f = |u: f64| u * p + 0.5 * beta * u * u + 0.5 * gamma * (u - ubar).powi(2);
        let best = (0..=200_000)
            .map(|i| -10.0 + 20.0 * i as f64 / 200_000.0)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        assert!((best - closed).abs() <= 1e-4);
    }

    #[test]
    fn leader_hand_values() {
        let prob = problem(0.0, 0.5, 1.0, vec![0], vec![1]);
        assert_eq!(argmin_aug_h_leader(&v(&[3.0, -2.0]), &v(&[0.0, 0.0]), &prob).as_slice(), &[-1.0, 0.0]);
        assert_eq!(argmin_aug_h_leader(&v(&[-2.0, 3.0]), &v(&[0.0, 0.0]), &prob).as_slice(), &[1.0, 0.0]);
        assert_eq!(argmin_aug_h_leader(&v(&[0.0, 0.0]), &v(&[0.4, 0.4]), &prob).as_slice(), &[0.0, 0.0]);
        let prob = problem(0.5, 0.5, 1.0, vec![0], vec![1]);
        assert_eq!(argmin_aug_h_leader(&v(&[0.0, 0.0]), &v(&[0.7, 0.0]), &prob).as_slice(), &[0.7, 0.0]);
        let prob = problem(0.5, 0.5, 10.0, vec![0], vec![1]);
        let out = argmin_aug_h_leader(&v(&[1.0, 0.0]), &v(&[0.0, 0.0]), &prob)[0];
        assert_eq!(out, -2.0);
        let f = |u: f64| u + 0.25 * u * u;
        let best = (0..=200_000)
            .map(|i| -10.0 + 20.0 * i as f64 / 200_000.0)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        assert!((best - out).abs() <= 1e-4);
    }

    #[test]
    fn argmins_beat_random_box_samples() {
        let prob = problem(0.3, 0.6, 0.8, vec![0], vec![1]);
        let mut rng = SeedStream::new(11);
        let mut draw = |s: f64| v(&[rng.uniform_in(-s, s), rng.uniform_in(-s, s)]);
        for _ in 0..20 {
            let (theta, p) = (draw(2.0), draw(2.0));
            let (b1, b2) = (prob.partition().mask(Agent::Leader, &draw(0.8)), prob.partition().mask(Agent::Follower, &draw(0.8)));
            let star1 = argmin_aug_h_leader(&p, &b1, &prob);
            let star2 = argmin_aug_h_follower(&p, &b2, &prob);
            let h1 = |u: &DVector<f64>| augmented_hamiltonian(Agent::Leader, &theta, &p, &b1, u, &b2, 0.3, &prob).unwrap();
            let h2 = |u: &DVector<f64>| augmented_hamiltonian(Agent::Follower, &theta, &p, &b2, u, &b1, 0.6, &prob).unwrap();
            let (m1, m2) = (h1(&star1), h2(&star2));
            for _ in 0..100 {
                let s = draw(0.8);
                assert!(h1(&prob.partition().mask(Agent::Leader, &s)) - m1 >= -1e-12);
                assert!(h2(&prob.partition().mask(Agent::Follower, &s)) - m2 >= -1e-12);
            }
        }
    }

    #[test]
    fn fixed_point_has_zero_residual() {
        // u = argmin(ū = u) at every node ⇒ projected residual vanishes.
        let prob = Problem::new(reference_spec()).unwrap();
        let opts = SolverOptions::default();
        let report = run_algorithm_1(&prob, &opts).unwrap();
        let (u1, u2) = report.controls(&prob).unwrap();
        let theta = integrate_forward(prob.theta0(), &u1, &u2, &prob).unwrap();
        let p2 = interval_costate(Agent::Follower, &theta, &prob).unwrap();
        let moved = update(&u2, &p2, &prob, argmin_aug_h_follower);
        if moved.l2_distance(&u2) <= 1e-12 {
            assert!(extremum_residual(&p2, &u1, &u2, &prob).unwrap().projected <= 1e-10);
        }
        assert!(report.converged);
    }

    #[test]
    fn follower_updates_descend() {
        let prob = Problem::new(reference_spec()).unwrap();
        let report = run_algorithm_1(&prob, &SolverOptions::default()).unwrap();
        for s in &report.follower_sweeps {
            assert!(s.after <= s.before + 1e-10, "{s:?}");
        }
    }

    #[test]
    fn gamma_sweep_reaches_the_same_fixed_point() {
        let mut finals = Vec::new();
        for gamma2 in [0.1, 0.5, 0.9] {
            let mut spec = reference_spec();
            spec.gamma2 = gamma2;
            let report = run_algorithm_1(&Problem::new(spec).unwrap(), &SolverOptions::default()).unwrap();
            assert!(report.converged, "gamma2 = {gamma2}");
            finals.push(DVector::from_vec(report.theta_final));
        }
        for f in &finals[1..] {
            assert!((f - &finals[0]).norm() / finals[0].norm() <= 1e-4);
        }
    }

    proptest! {
        #[test]
        fn zero_gamma_gives_plain_minimizers(
            p in prop::collection::vec(-3.0..3.0f64, 2),
            ub in prop::collection::vec(-1.0..1.0f64, 2),
        ) {
            let prob = problem(0.0, 0.0, 1.0, vec![0], vec![1]);
            let (p, ub) = (v(&p), v(&ub));
            let f = argmin_aug_h_follower(&p, &ub, &prob);
            prop_assert_eq!(f[1], clamp(-p[1] / prob.beta(), 1.0));
            let l = argmin_aug_h_leader(&p, &ub, &prob);
            prop_assert_eq!(l[0], -p[0].signum());
            prop_assert_eq!(l[1], 0.0);
            prop_assert_eq!(f[0], 0.0);
        }
    }
}

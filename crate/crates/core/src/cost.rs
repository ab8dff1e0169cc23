//! Cost functionals of both agents.
//!
//! Running costs of the state are integrated with a fourth-order
//! end-corrected node rule (weights `δ·[3/8, 7/6, 23/24, 1, …, 1, 23/24, 7/6, 3/8]`)
//! when `N ≥ 5`, and with the trapezoid rule on coarser grids. The control
//! terms are piecewise constant and integrate exactly.

use crate::dynamics::{Agent, ControlTrajectory, StageCost, StateTrajectory};
use crate::error::{Error, Result};
use crate::problem::Problem;

/// Quadrature weights for `n + 1` equally spaced node samples with step `h`.
pub fn node_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n + 1];
    if n >= 5 {
        for (i, c) in [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0].into_iter().enumerate() {
            w[i] = c * h;
            w[n - i] = c * h;
        }
    } else {
        w[0] = 0.5 * h;
        w[n] = 0.5 * h;
    }
    w
}

/// `J₁ = ∫ ½‖θ‖² dt`.
pub fn cost_j1(theta: &StateTrajectory) -> f64 {
    let h = theta.grid().delta();
    let n = theta.grid().intervals();
    0.5 * node_weights(n, h)
        .iter()
        .zip(theta.values())
        .map(|(w, th)| w * th.norm_squared())
        .sum::<f64>()
}

/// `J₂ = ∫ (α/2)‖θ‖² + (β/2)‖u₂‖² dt`.
pub fn cost_j2(theta: &StateTrajectory, u2: &ControlTrajectory, prob: &Problem) -> Result<f64> {
    if theta.grid() != u2.grid() {
        return Err(Error::InvalidProblem("cost_j2: trajectories live on different grids".into()));
    }
    StageCost::for_agent(Agent::Follower, prob).value(theta.values(), u2.values(), theta.grid().delta())
}

/// Leader objective `J₁ ± Φ(θ(T))`, the sign following the terminal costate convention.
pub fn leader_objective(theta: &StateTrajectory, prob: &Problem) -> Result<f64> {
    StageCost::for_agent(Agent::Leader, prob).value(theta.values(), &[], theta.grid().delta())
}

/// `Φ(θ(T)) − z`.
pub fn phi_gap(theta: &StateTrajectory, prob: &Problem) -> Result<f64> {
    Ok(prob.phi(theta.terminal())? - prob.spec().z_target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ControlPartition, TimeGrid};
    use crate::instances::quadratic_spec;
    use crate::oracle::analytic_quadratic_state;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn constant_state(t: f64, n: usize, value: &[f64]) -> StateTrajectory {
        let grid = TimeGrid::new(t, n).unwrap();
        StateTrajectory::new(grid, vec![DVector::from_column_slice(value); n + 1]).unwrap()
    }

    #[test]
    fn weights_sum_to_horizon_and_integrate_cubics() {
        for n in 1..40 {
            let h = 2.0 / n as f64;
            let w = node_weights(n, h);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            if n >= 5 {
                let q: f64 = w.iter().enumerate().map(|(k, wk)| wk * (k as f64 * h).powi(3)).sum();
                assert!((q - 4.0).abs() < 1e-12, "n = {n}: {q}");
            }
        }
    }

    #[test]
    fn j1_values() {
        assert_eq!(cost_j1(&constant_state(1.0, 10, &[0.0, 0.0])), 0.0);
        assert!((cost_j1(&constant_state(2.0, 10, &[1.0, 0.0])) - 1.0).abs() < 1e-14);
        assert!((cost_j1(&constant_state(2.0, 3, &[1.0, 0.0])) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn j1_matches_closed_form_integral() {
        // ∫₀¹ ½‖θ* + e^{−t}(θ₀ − θ*)‖² dt with θ₀ = 0, θ* = (1, −1)
        // = ∫₀¹ (1 − e^{−t})² dt = 1 − 2(1 − e^{−1}) + (1 − e^{−2})/2.
        let exact = 1.0 - 2.0 * (1.0 - (-1.0f64).exp()) + 0.5 * (1.0 - (-2.0f64).exp());
        let n = 100;
        let grid = TimeGrid::new(1.0, n).unwrap();
        let star = DVector::from_vec(vec![1.0, -1.0]);
        let zero = DVector::zeros(2);
        let values = (0..=n)
            .map(|k| analytic_quadratic_state(&zero, &star, grid.node(k)))
            .collect();
        let theta = StateTrajectory::new(grid, values).unwrap();
        let err = (cost_j1(&theta) - exact).abs();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn j2_hand_value() {
        let mut spec = quadratic_spec(&[1.0, -1.0], 1.0, 10);
        spec.alpha = 2.0;
        spec.beta = 4.0;
        spec.partition = ControlPartition::new(vec![0], vec![1]);
        let prob = Problem::new(spec).unwrap();
        let theta = constant_state(1.0, 10, &[1.0, 0.0]);
        let u2 = ControlTrajectory::projected(
            prob.grid(),
            Agent::Follower,
            vec![DVector::from_vec(vec![0.0, 1.0]); 10],
            prob.partition(),
            1.0,
        );
        assert!((cost_j2(&theta, &u2, &prob).unwrap() - 3.0).abs() < 1e-14);
        let zero = constant_state(1.0, 10, &[0.0, 0.0]);
        let u0 = ControlTrajectory::zeros(prob.grid(), Agent::Follower, 2);
        assert_eq!(cost_j2(&zero, &u0, &prob).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn j2_monotone_in_weights(
            a in 0.1..5.0f64, da in 0.0..5.0f64, b in 0.1..5.0f64, db in 0.0..5.0f64,
            th in prop::collection::vec(-2.0..2.0f64, 2), u in -1.0..1.0f64,
        ) {
            let mk = |alpha, beta| {
                let mut spec = quadratic_spec(&[1.0, -1.0], 1.0, 6);
                spec.alpha = alpha;
                spec.beta = beta;
                Problem::new(spec).unwrap()
            };
            let (lo, hi) = (mk(a, b), mk(a + da, b + db));
            let theta = constant_state(1.0, 6, &th);
            let u2 = ControlTrajectory::projected(
                lo.grid(), Agent::Follower, vec![DVector::from_vec(vec![0.0, u]); 6], lo.partition(), 1.0,
            );
            prop_assert!(cost_j2(&theta, &u2, &lo).unwrap() <= cost_j2(&theta, &u2, &hi).unwrap());
        }
    }
}

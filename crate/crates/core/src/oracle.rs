//! Independent reference computations: finite differences, the closed-form
//! quadratic flow, and a brute-force direct-transcription solver that never
//! touches an adjoint.

use nalgebra::DVector;

use crate::dynamics::{clamp, rk4_forward, Agent, ControlPartition, ControlTrajectory, StageCost};
use crate::error::{Error, Result};
use crate::problem::Problem;

/// Default finite-difference step. A sweep over `{1e-4, 1e-5, 1e-6}` on the
/// reference instance puts the best agreement with exact gradients at `1e-5`
/// (truncation `O(eps²)` against roundoff `O(1e-16/eps)`).
pub const FD_EPS: f64 = 1e-5;

/// Iteration budget of [`direct_transcription_solve`].
pub const ORACLE_ITERS: usize = 10_000;
/// The oracle stops early once its finite-difference projected residual is below this.
pub const ORACLE_TOL: f64 = 1e-10;

pub const ORACLE_MAX_DIM: usize = 4;
pub const ORACLE_MAX_INTERVALS: usize = 50;

fn fd_values(
    cost: &dyn Fn(&[DVector<f64>]) -> Result<f64>,
    values: &[DVector<f64>],
    idx: &[usize],
    eps: f64,
) -> Result<Vec<DVector<f64>>> {
    let mut work = values.to_vec();
    let mut grad = vec![DVector::zeros(values.first().map_or(0, |v| v.len())); values.len()];
    for k in 0..values.len() {
        for &i in idx {
            let x = values[k][i];
            work[k][i] = x + eps;
            let plus = cost(&work)?;
            work[k][i] = x - eps;
            let minus = cost(&work)?;
            work[k][i] = x;
            grad[k][i] = (plus - minus) / (2.0 * eps);
        }
    }
    Ok(grad)
}

/// Central differences of `cost` with respect to every control value on the
/// control's own coordinates; other coordinates are reported as zero.
pub fn fd_gradient(
    cost: impl Fn(&ControlTrajectory) -> Result<f64>,
    u: &ControlTrajectory,
    partition: &ControlPartition,
    eps: f64,
) -> Result<Vec<DVector<f64>>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidOptions(format!("fd step eps = {eps} must be positive")));
    }
    let (grid, agent) = (u.grid(), u.agent());
    let wrapped = |values: &[DVector<f64>]| {
        cost(&ControlTrajectory::from_parts_unchecked(grid, agent, values.to_vec()))
    };
    fd_values(&wrapped, u.values(), partition.indices(agent), eps)
}

/// `θ* + e^{−t}(θ₀ − θ*)`, the uncontrolled flow of `J₀ = ½‖θ − θ*‖²`.
pub fn analytic_quadratic_state(theta0: &DVector<f64>, theta_star: &DVector<f64>, t: f64) -> DVector<f64> {
    theta_star + (theta0 - theta_star) * (-t).exp()
}

/// Discretized cost of `agent` as a function of its own control values,
/// with the other agent's control frozen. Uses only forward integration.
pub fn discrete_cost(
    agent: Agent,
    prob: &Problem,
    own: &[DVector<f64>],
    other: &ControlTrajectory,
) -> Result<f64> {
    let grid = other.grid();
    let drive: Vec<DVector<f64>> = own.iter().zip(other.values()).map(|(a, b)| a + b).collect();
    let states = rk4_forward(prob.train(), prob.theta0(), grid.delta(), 0.0, &drive)?;
    StageCost::for_agent(agent, prob).value(&states, own, grid.delta())
}

/// Brute-force minimizer of the discretized cost of `agent` over its box-
/// and mask-feasible control values, by projected gradient with
/// finite-difference gradients and diminishing steps `s₀/(1 + i/2000)`.
/// Returns the best iterate seen.
pub fn direct_transcription_solve(
    agent: Agent,
    prob: &Problem,
    frozen_other: &ControlTrajectory,
) -> Result<ControlTrajectory> {
    let grid = prob.grid();
    let p = prob.param_dim();
    if p > ORACLE_MAX_DIM || grid.intervals() > ORACLE_MAX_INTERVALS {
        return Err(Error::OracleScale(format!(
            "p = {p}, N = {} exceeds p <= {ORACLE_MAX_DIM}, N <= {ORACLE_MAX_INTERVALS}",
            grid.intervals()
        )));
    }
    if frozen_other.grid() != grid || frozen_other.agent() != agent.other() {
        return Err(Error::InvalidProblem(
            "oracle: frozen control must belong to the other agent on the problem grid".into(),
        ));
    }
    let u_max = prob.u_max();
    let zero = ControlTrajectory::zeros(grid, agent, p);
    if u_max == 0.0 {
        return Ok(zero);
    }

    let h = grid.delta();
    let t = grid.horizon();
    // Curvature bound of the cost in the L² metric, from ‖∂θ(t)/∂u_k‖ ≤ δ.
    let (c_u, w) = match agent {
        Agent::Follower => (prob.beta(), prob.alpha()),
        Agent::Leader => (0.0, 1.0),
    };
    let phi_curv = match agent {
        Agent::Follower => 0.0,
        Agent::Leader => prob.valid().gram().norm(),
    };
    let s0 = 1.0 / (h * (c_u + w * t * t + phi_curv * t));

    let idx = prob.partition().indices(agent);
    let cost = |own: &[DVector<f64>]| discrete_cost(agent, prob, own, frozen_other);
    let mut u = zero.into_values();
    let mut best = (cost(&u)?, u.clone());
    for i in 0..ORACLE_ITERS {
        let g = fd_values(&cost, &u, idx, FD_EPS)?;
        let mut acc = 0.0;
        for (uk, gk) in u.iter().zip(&g) {
            for &j in idx {
                let r = uk[j] - clamp(uk[j] - gk[j] / h, u_max);
                acc += r * r;
            }
        }
        if (h * acc).sqrt() <= ORACLE_TOL {
            break;
        }
        let step = s0 / (1.0 + i as f64 / 2000.0);
        for (uk, gk) in u.iter_mut().zip(&g) {
            for &j in idx {
                uk[j] = clamp(uk[j] - step * gk[j], u_max);
            }
        }
        let value = cost(&u)?;
        if value < best.0 {
            best = (value, u.clone());
        }
    }
    ControlTrajectory::new(grid, agent, best.1, prob.partition(), u_max)
}

/// Projected residual of the discretized cost at `own`, using finite
/// differences scaled to the L² metric.
pub fn fd_projected_residual(
    agent: Agent,
    prob: &Problem,
    own: &ControlTrajectory,
    frozen_other: &ControlTrajectory,
) -> Result<f64> {
    let h = prob.grid().delta();
    let cost = |v: &[DVector<f64>]| discrete_cost(agent, prob, v, frozen_other);
    let g = fd_values(&cost, own.values(), prob.partition().indices(agent), FD_EPS)?;
    let mut acc = 0.0;
    for (uk, gk) in own.values().iter().zip(&g) {
        for &j in prob.partition().indices(agent) {
            let r = uk[j] - clamp(uk[j] - gk[j] / h, prob.u_max());
            acc += r * r;
        }
    }
    Ok((h * acc).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TimeGrid;
    use crate::instances::quadratic_spec;

    fn control(n: usize, f: impl Fn(usize) -> f64) -> (ControlTrajectory, ControlPartition) {
        let part = ControlPartition::new(vec![0], vec![1]);
        let grid = TimeGrid::new(1.0, n).unwrap();
        let values = (0..n).map(|k| DVector::from_vec(vec![0.0, f(k)])).collect();
        (ControlTrajectory::from_parts_unchecked(grid, Agent::Follower, values), part)
    }

    #[test]
    fn constant_cost_has_zero_gradient() {
        let (u, part) = control(5, |k| k as f64);
        let g = fd_gradient(|_| Ok(3.0), &u, &part, FD_EPS).unwrap();
        assert!(g.iter().all(|v| v.norm() == 0.0));
        assert!(fd_gradient(|_| Ok(3.0), &u, &part, 0.0).is_err());
    }

    #[test]
    fn quadratic_cost_gradient() {
        let (u, part) = control(8, |k| 0.1 * k as f64 - 0.3);
        let h = u.grid().delta();
        let cost = |c: &ControlTrajectory| Ok(0.5 * h * c.values().iter().map(|v| v.norm_squared()).sum::<f64>());
        let g = fd_gradient(cost, &u, &part, FD_EPS).unwrap();
        for (gk, uk) in g.iter().zip(u.values()) {
            assert!((gk[1] - h * uk[1]).abs() < 1e-10);
            assert_eq!(gk[0], 0.0);
        }
    }

    #[test]
    fn linear_cost_is_exact() {
        let (u, part) = control(4, |k| k as f64);
        let cost = |c: &ControlTrajectory| {
            Ok(c.values().iter().enumerate().map(|(k, v)| (k as f64 + 0.5) * v[1]).sum::<f64>())
        };
        for eps in [1e-2, 1e-4, 1e-6] {
            let g = fd_gradient(cost, &u, &part, eps).unwrap();
            for (k, gk) in g.iter().enumerate() {
                assert!((gk[1] - (k as f64 + 0.5)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn closed_form_state() {
        let zero = DVector::zeros(2);
        let star = DVector::from_vec(vec![1.0, -1.0]);
        assert_eq!(analytic_quadratic_state(&zero, &star, 0.0), zero);
        let e = (-1.0f64).exp();
        let at1 = analytic_quadratic_state(&zero, &star, 1.0);
        assert!((at1[0] - (1.0 - e)).abs() < 1e-15 && (at1[1] - (-1.0 + e)).abs() < 1e-15);
        assert!((analytic_quadratic_state(&zero, &star, 60.0) - &star).norm() < 1e-15);
    }

    #[test]
    fn scale_limit_and_zero_box() {
        let big = Problem::new(quadratic_spec(&[1.0; 5], 1.0, 10)).unwrap();
        let other = ControlTrajectory::zeros(big.grid(), Agent::Leader, 5);
        assert!(matches!(
            direct_transcription_solve(Agent::Follower, &big, &other),
            Err(Error::OracleScale(_))
        ));
        let long = Problem::new(quadratic_spec(&[1.0, -1.0], 1.0, 51)).unwrap();
        let other = ControlTrajectory::zeros(long.grid(), Agent::Leader, 2);
        assert!(direct_transcription_solve(Agent::Follower, &long, &other).is_err());

        let mut spec = quadratic_spec(&[1.0, -1.0], 1.0, 10);
        spec.u_max = 0.0;
        let prob = Problem::new(spec).unwrap();
        let other = ControlTrajectory::zeros(prob.grid(), Agent::Leader, 2);
        let u = direct_transcription_solve(Agent::Follower, &prob, &other).unwrap();
        assert!(u.values().iter().all(|v| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn heavy_control_cost_drives_follower_to_zero() {
        let mut spec = quadratic_spec(&[1.0, -1.0], 1.0, 10);
        spec.beta = 1e6;
        let prob = Problem::new(spec).unwrap();
        let other = ControlTrajectory::zeros(prob.grid(), Agent::Leader, 2);
        let u = direct_transcription_solve(Agent::Follower, &prob, &other).unwrap();
        assert!(u.l2_norm() <= 1e-3, "{}", u.l2_norm());
    }
}

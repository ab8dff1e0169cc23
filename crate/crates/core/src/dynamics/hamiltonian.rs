use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{clamp, AdjointTrajectory, Agent, ControlPartition, ControlTrajectory, IntervalCostate, TimeGrid};
use crate::error::{check_len, Error, Result};
use crate::problem::Problem;

fn check_point(prob: &Problem, vs: &[&DVector<f64>]) -> Result<()> {
    for v in vs {
        check_len("hamiltonian argument", prob.param_dim(), v.len())?;
    }
    Ok(())
}

fn velocity(prob: &Problem, theta: &DVector<f64>, u1: &DVector<f64>, u2: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(-prob.train().grad(theta)? + u1 + u2)
}

/// `∂H/∂θ = −∇²J₀(θ)p + wθ`.
fn state_derivative(agent: Agent, prob: &Problem, theta: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
    let w = match agent {
        Agent::Follower => prob.alpha(),
        Agent::Leader => 1.0,
    };
    Ok(-prob.train().hvp(p)? + theta * w)
}

/// Pointwise Hamiltonian.
///
/// Follower: `⟨f, p⟩ + (α/2)‖θ‖² + (β/2)‖u₂‖²`. Leader: `⟨f, p⟩ + ½‖θ‖²`,
/// where `f = −∇J₀(θ) + u₁ + u₂`.
pub fn hamiltonian(
    agent: Agent,
    theta: &DVector<f64>,
    p: &DVector<f64>,
    u1: &DVector<f64>,
    u2: &DVector<f64>,
    prob: &Problem,
) -> Result<f64> {
    check_point(prob, &[theta, p, u1, u2])?;
    let flow = velocity(prob, theta, u1, u2)?.dot(p);
    Ok(match agent {
        Agent::Follower => {
            flow + 0.5 * prob.alpha() * theta.norm_squared() + 0.5 * prob.beta() * u2.norm_squared()
        }
        Agent::Leader => flow + 0.5 * theta.norm_squared(),
    })
}

/// Hamiltonian augmented by `(γ/2)‖∂H/∂p(u) − ∂H/∂p(ū)‖² + (γ/2)‖∂H/∂θ(u) − ∂H/∂θ(ū)‖²`,
/// both penalties taken at the same nominal `(θ, p)`.
///
/// `u` and `u_bar` belong to `agent`; `u_other` is the other agent's control.
#[allow(clippy::too_many_arguments)]
pub fn augmented_hamiltonian(
    agent: Agent,
    theta: &DVector<f64>,
    p: &DVector<f64>,
    u_bar: &DVector<f64>,
    u: &DVector<f64>,
    u_other: &DVector<f64>,
    gamma: f64,
    prob: &Problem,
) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidGamma(gamma));
    }
    check_point(prob, &[u_bar])?;
    let split = |own: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        match agent {
            Agent::Leader => (own.clone(), u_other.clone()),
            Agent::Follower => (u_other.clone(), own.clone()),
        }
    };
    let (u1, u2) = split(u);
    let (b1, b2) = split(u_bar);
    let h = hamiltonian(agent, theta, p, &u1, &u2, prob)?;
    let dp = velocity(prob, theta, &u1, &u2)? - velocity(prob, theta, &b1, &b2)?;
    // The state derivative does not see the control; kept for completeness.
    let dtheta = state_derivative(agent, prob, theta, p)? - state_derivative(agent, prob, theta, p)?;
    Ok(h + 0.5 * gamma * dp.norm_squared() + 0.5 * gamma * dtheta.norm_squared())
}

/// Costate values seen by the control on each interval `k = 0..N`.
pub trait CostateValues {
    fn grid(&self) -> TimeGrid;
    fn agent(&self) -> Agent;
    fn interval_values(&self) -> &[DVector<f64>];
}

impl CostateValues for AdjointTrajectory {
    fn grid(&self) -> TimeGrid {
        AdjointTrajectory::grid(self)
    }

    fn agent(&self) -> Agent {
        AdjointTrajectory::agent(self)
    }

    /// Left-node values `p(t_k)`.
    fn interval_values(&self) -> &[DVector<f64>] {
        &self.values()[..self.grid().intervals()]
    }
}

impl CostateValues for IntervalCostate {
    fn grid(&self) -> TimeGrid {
        IntervalCostate::grid(self)
    }

    fn agent(&self) -> Agent {
        IntervalCostate::agent(self)
    }

    fn interval_values(&self) -> &[DVector<f64>] {
        self.values()
    }
}

/// Extremum-condition residuals of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    /// `sqrt(δ Σ_k ‖u_k − clamp(u_k − g_k)‖²)` on the agent's coordinates.
    pub projected: f64,
    /// `sqrt(δ Σ_k ‖g_k‖²)` on the agent's coordinates.
    pub raw: f64,
}

/// Projected residual for arbitrary per-interval gradients `g_k` of `u_k`.
pub(crate) fn projected_residual(
    agent: Agent,
    partition: &ControlPartition,
    u_max: f64,
    h: f64,
    u: &[DVector<f64>],
    g: &[DVector<f64>],
) -> Residual {
    let idx = partition.indices(agent);
    let (mut proj, mut raw) = (0.0, 0.0);
    for (uk, gk) in u.iter().zip(g) {
        for &i in idx {
            let r = uk[i] - clamp(uk[i] - gk[i], u_max);
            proj += r * r;
            raw += gk[i] * gk[i];
        }
    }
    Residual {
        projected: (h * proj).sqrt(),
        raw: (h * raw).sqrt(),
    }
}

/// Projected gradient residual of the extremum condition, with
/// `g = p₂ + βu₂` for the follower and `g = p₁` for the leader.
pub fn extremum_residual(
    costate: &impl CostateValues,
    u1: &ControlTrajectory,
    u2: &ControlTrajectory,
    prob: &Problem,
) -> Result<Residual> {
    let grid = costate.grid();
    if u1.grid() != grid || u2.grid() != grid {
        return Err(Error::InvalidProblem(
            "extremum_residual: trajectories live on different grids".into(),
        ));
    }
    let agent = costate.agent();
    let own = match agent {
        Agent::Leader => u1,
        Agent::Follower => u2,
    };
    let p = costate.interval_values();
    let g: Vec<DVector<f64>> = match agent {
        Agent::Leader => p.to_vec(),
        Agent::Follower => p
            .iter()
            .zip(own.values())
            .map(|(pk, uk)| pk + uk * prob.beta())
            .collect(),
    };
    Ok(projected_residual(
        agent,
        prob.partition(),
        prob.u_max(),
        grid.delta(),
        own.values(),
        &g,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::quadratic_problem;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn zero_point_is_zero() {
        let prob = quadratic_problem(&[0.0, 0.0], 1.0, 4);
        let z = DVector::zeros(2);
        for agent in [Agent::Leader, Agent::Follower] {
            assert_eq!(hamiltonian(agent, &z, &z, &z, &z, &prob).unwrap(), 0.0);
        }
    }

    #[test]
    fn follower_hand_value() {
        let prob = quadratic_problem(&[0.0, 0.0], 1.0, 4);
        let z = DVector::zeros(2);
        let h = hamiltonian(Agent::Follower, &v(&[1.0, 0.0]), &v(&[1.0, 0.0]), &z, &z, &prob).unwrap();
        assert!((h - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn leader_ignores_beta() {
        let prob = quadratic_problem(&[1.0, -1.0], 1.0, 4);
        let mut spec = prob.spec().clone();
        spec.beta = 37.0;
        let other = Problem::new(spec).unwrap();
        let (th, p, u1, u2) = (v(&[0.3, 0.1]), v(&[-1.0, 2.0]), v(&[0.2, 0.0]), v(&[0.0, 0.7]));
        let a = hamiltonian(Agent::Leader, &th, &p, &u1, &u2, &prob).unwrap();
        let b = hamiltonian(Agent::Leader, &th, &p, &u1, &u2, &other).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn augmented_hand_value_and_gamma_check() {
        let prob = quadratic_problem(&[1.0, -1.0], 1.0, 4);
        let (th, p) = (v(&[0.3, 0.1]), v(&[-1.0, 2.0]));
        let (u, ub, other) = (v(&[0.0, 1.0]), v(&[0.0, -1.0]), v(&[0.4, 0.0]));
        let h = hamiltonian(Agent::Follower, &th, &p, &other, &u, &prob).unwrap();
        let ht = augmented_hamiltonian(Agent::Follower, &th, &p, &ub, &u, &other, 0.5, &prob).unwrap();
        assert!((ht - h - 1.0).abs() < 1e-12);
        for bad in [1.0, -0.1, f64::NAN] {
            assert!(matches!(
                augmented_hamiltonian(Agent::Follower, &th, &p, &ub, &u, &other, bad, &prob),
                Err(Error::InvalidGamma(_))
            ));
        }
    }

    #[test]
    fn scalar_projection_hand_value() {
        let part = ControlPartition::new(vec![], vec![0]);
        let r = projected_residual(Agent::Follower, &part, 1.0, 1.0, &[v(&[0.5])], &[v(&[2.0])]);
        assert!((r.projected - 1.5).abs() < 1e-15);
        assert!((r.raw - 2.0).abs() < 1e-15);
    }

    #[test]
    fn stationary_follower_has_zero_residual() {
        let prob = quadratic_problem(&[1.0, -1.0], 1.0, 8);
        let grid = prob.grid();
        let pvals: Vec<DVector<f64>> = (0..=8).map(|k| v(&[0.3 * k as f64, 4.0 - k as f64])).collect();
        let adj = AdjointTrajectory::new(grid, Agent::Follower, pvals.clone());
        let u2 = ControlTrajectory::projected(
            grid,
            Agent::Follower,
            pvals[..8].iter().map(|p| -p / prob.beta()).collect(),
            prob.partition(),
            prob.u_max(),
        );
        let u1 = ControlTrajectory::zeros(grid, Agent::Leader, 2);
        let r = extremum_residual(&adj, &u1, &u2, &prob).unwrap();
        assert!(r.projected <= 1e-12, "{r:?}");

        let zero = AdjointTrajectory::new(grid, Agent::Leader, vec![DVector::zeros(2); 9]);
        let u1 = ControlTrajectory::projected(grid, Agent::Leader, vec![v(&[0.3, 0.0]); 8], prob.partition(), 1.0);
        assert_eq!(extremum_residual(&zero, &u1, &u2, &prob).unwrap().projected, 0.0);
    }

    proptest! {
        #[test]
        fn augmentation_is_proximal(
            th in prop::collection::vec(-3.0..3.0f64, 2),
            p in prop::collection::vec(-3.0..3.0f64, 2),
            u in -1.0..1.0f64,
            ub in -1.0..1.0f64,
            other in -1.0..1.0f64,
            gamma in 0.0..0.999f64,
            leader in any::<bool>(),
        ) {
            let prob = quadratic_problem(&[1.0, -1.0], 1.0, 4);
            let (agent, slot) = if leader { (Agent::Leader, 0) } else { (Agent::Follower, 1) };
            let own = |x: f64| { let mut e = DVector::zeros(2); e[slot] = x; e };
            let oth = |x: f64| { let mut e = DVector::zeros(2); e[1 - slot] = x; e };
            let (th, p) = (v(&th), v(&p));
            let (uu, bb, oo) = (own(u), own(ub), oth(other));
            let (u1, u2) = if leader { (uu.clone(), oo.clone()) } else { (oo.clone(), uu.clone()) };
            let h = hamiltonian(agent, &th, &p, &u1, &u2, &prob).unwrap();
            let ht = augmented_hamiltonian(agent, &th, &p, &bb, &uu, &oo, gamma, &prob).unwrap();
            prop_assert!((ht - h - 0.5 * gamma * (u - ub) * (u - ub)).abs() <= 1e-12);
        }
    }
}

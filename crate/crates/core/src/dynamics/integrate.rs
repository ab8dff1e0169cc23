//! Forward and backward integration of the controlled gradient flow
//! `θ̇ = −∇J₀(θ) + u₁(t) + u₂(t)`.
//!
//! Two backward passes are provided:
//!
//! * [`integrate_adjoint`] integrates the costate ODE `ṗ = −∂H/∂θ` with RK4
//!   from the exact terminal condition, interpolating θ linearly between
//!   nodes. It yields node values `p(t_k)`.
//! * [`interval_costate`] differentiates the discretized cost through the
//!   RK4 steps in reverse. It yields, per control interval, the costate that
//!   makes `δ·(p̄_k + ∂L/∂u)` the exact gradient of the discrete cost. All
//!   control updates use it.

use nalgebra::DVector;

use super::{Agent, AdjointTrajectory, ControlTrajectory, IntervalCostate, StateTrajectory, TimeGrid};
use crate::cost::node_weights;
use crate::error::{check_len, Error, Result};
use crate::problem::{LeastSquares, Problem};

/// Terminal part of a discretized cost.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Terminal<'a> {
    None,
    /// `sign · Φ(θ_N)`.
    Phi { valid: &'a LeastSquares, sign: f64 },
    /// `(weight/2)·‖target − θ_N‖²`.
    Anchor { target: &'a DVector<f64>, weight: f64 },
}

/// `Σ_k w_k (running/2)‖θ_k‖² + h Σ_j (control/2)‖u_j‖² + terminal(θ_N)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StageCost<'a> {
    pub running: f64,
    pub control: f64,
    pub terminal: Terminal<'a>,
}

impl<'a> StageCost<'a> {
    /// Cost of one agent on the full horizon.
    pub fn for_agent(agent: Agent, prob: &'a Problem) -> Self {
        match agent {
            Agent::Follower => StageCost {
                running: prob.alpha(),
                control: prob.beta(),
                terminal: Terminal::None,
            },
            Agent::Leader => StageCost {
                running: 1.0,
                control: 0.0,
                terminal: Terminal::Phi {
                    valid: prob.valid(),
                    sign: prob.spec().terminal_sign.value(),
                },
            },
        }
    }

    pub fn value(&self, states: &[DVector<f64>], controls: &[DVector<f64>], h: f64) -> Result<f64> {
        let n = states.len() - 1;
        let weights = node_weights(n, h);
        let running: f64 = weights
            .iter()
            .zip(states)
            .map(|(w, th)| w * th.norm_squared())
            .sum::<f64>()
            * (0.5 * self.running);
        let control = if self.control == 0.0 {
            0.0
        } else {
            0.5 * self.control * h * controls.iter().map(|u| u.norm_squared()).sum::<f64>()
        };
        Ok(running + control + self.terminal_value(&states[n])?)
    }

    pub fn terminal_value(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(match self.terminal {
            Terminal::None => 0.0,
            Terminal::Phi { valid, sign } => sign * valid.loss(theta)?,
            Terminal::Anchor { target, weight } => 0.5 * weight * (target - theta).norm_squared(),
        })
    }

    /// `∂cost/∂θ_k` holding all other nodes fixed.
    pub fn node_sensitivities(&self, states: &[DVector<f64>], h: f64) -> Result<Vec<DVector<f64>>> {
        let n = states.len() - 1;
        let weights = node_weights(n, h);
        let mut sens: Vec<DVector<f64>> = weights
            .iter()
            .zip(states)
            .map(|(w, th)| th * (w * self.running))
            .collect();
        match self.terminal {
            Terminal::None => {}
            Terminal::Phi { valid, sign } => sens[n] += valid.grad(&states[n])? * sign,
            Terminal::Anchor { target, weight } => sens[n] += (&states[n] - target) * weight,
        }
        Ok(sens)
    }
}

struct Workspace {
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    stage: DVector<f64>,
}

impl Workspace {
    fn new(p: usize) -> Self {
        Self {
            k1: DVector::zeros(p),
            k2: DVector::zeros(p),
            k3: DVector::zeros(p),
            k4: DVector::zeros(p),
            stage: DVector::zeros(p),
        }
    }
}

/// `out = −∇J₀(θ) + drive`.
#[inline]
fn velocity(loss: &LeastSquares, theta: &DVector<f64>, drive: &DVector<f64>, out: &mut DVector<f64>) {
    loss.grad_into(theta, out);
    out.neg_mut();
    *out += drive;
}

/// RK4 with the drive (sum of both controls) held constant on each step.
/// Returns `θ_0..θ_n` with `n = drive.len()`; `t0` only labels blow-up errors.
pub(crate) fn rk4_forward(
    loss: &LeastSquares,
    theta0: &DVector<f64>,
    h: f64,
    t0: f64,
    drive: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let p = theta0.len();
    let mut ws = Workspace::new(p);
    let mut states = Vec::with_capacity(drive.len() + 1);
    states.push(theta0.clone());
    for (j, d) in drive.iter().enumerate() {
        let theta = &states[j];
        velocity(loss, theta, d, &mut ws.k1);
        ws.stage.copy_from(theta);
        ws.stage.axpy(0.5 * h, &ws.k1, 1.0);
        velocity(loss, &ws.stage, d, &mut ws.k2);
        ws.stage.copy_from(theta);
        ws.stage.axpy(0.5 * h, &ws.k2, 1.0);
        velocity(loss, &ws.stage, d, &mut ws.k3);
        ws.stage.copy_from(theta);
        ws.stage.axpy(h, &ws.k3, 1.0);
        velocity(loss, &ws.stage, d, &mut ws.k4);

        let mut next = theta.clone();
        next.axpy(h / 6.0, &ws.k1, 1.0);
        next.axpy(h / 3.0, &ws.k2, 1.0);
        next.axpy(h / 3.0, &ws.k3, 1.0);
        next.axpy(h / 6.0, &ws.k4, 1.0);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::BlowUp {
                node: j + 1,
                t: t0 + h * (j + 1) as f64,
            });
        }
        states.push(next);
    }
    Ok(states)
}

/// Reverse-mode sweep through [`rk4_forward`].
///
/// `node_sens[k]` is the explicit sensitivity of the cost to `θ_k`. Returns
/// the total sensitivity to each drive value `d_j`. The Hessian of a
/// least-squares loss is constant, so stage states are not needed.
pub(crate) fn rk4_reverse(
    loss: &LeastSquares,
    h: f64,
    node_sens: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let n = node_sens.len() - 1;
    let p = node_sens[0].len();
    let mut lambda = node_sens[n].clone();
    let mut drive_sens = vec![DVector::zeros(p); n];
    let mut kb = [
        DVector::zeros(p),
        DVector::zeros(p),
        DVector::zeros(p),
        DVector::zeros(p),
    ];
    let mut yb = DVector::zeros(p);
    let mut theta_bar = DVector::zeros(p);
    for j in (0..n).rev() {
        // next = θ + h/6 k1 + h/3 k2 + h/3 k3 + h/6 k4
        for (slot, c) in kb.iter_mut().zip([h / 6.0, h / 3.0, h / 3.0, h / 6.0]) {
            slot.copy_from(&lambda);
            *slot *= c;
        }
        theta_bar.copy_from(&lambda);
        let ub = &mut drive_sens[j];
        // Stage i reads Y_i = θ + c_i·h·k_{i−1} with c = (0, 1/2, 1/2, 1).
        for (i, c_prev) in [(3usize, 1.0), (2, 0.5), (1, 0.5), (0, 0.0)] {
            loss.hvp_into(&kb[i], &mut yb);
            yb.neg_mut();
            *ub += &kb[i];
            theta_bar += &yb;
            if i > 0 {
                let (lo, hi) = kb.split_at_mut(i);
                let _ = hi;
                lo[i - 1].axpy(c_prev * h, &yb, 1.0);
            }
        }
        lambda.copy_from(&theta_bar);
        lambda += &node_sens[j];
    }
    drive_sens
}

fn drive(u1: &ControlTrajectory, u2: &ControlTrajectory) -> Vec<DVector<f64>> {
    u1.values()
        .iter()
        .zip(u2.values())
        .map(|(a, b)| a + b)
        .collect()
}

fn same_grid(context: &'static str, a: TimeGrid, b: TimeGrid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::InvalidProblem(format!("{context}: trajectories live on different grids")))
    }
}

/// Forward RK4 solve of the controlled gradient flow from `theta0`.
pub fn integrate_forward(
    theta0: &DVector<f64>,
    u1: &ControlTrajectory,
    u2: &ControlTrajectory,
    prob: &Problem,
) -> Result<StateTrajectory> {
    same_grid("integrate_forward", u1.grid(), u2.grid())?;
    check_len("theta0", prob.param_dim(), theta0.len())?;
    if u1.agent() != Agent::Leader || u2.agent() != Agent::Follower {
        return Err(Error::InvalidProblem(
            "integrate_forward expects (leader, follower) controls".into(),
        ));
    }
    let grid = u1.grid();
    let states = rk4_forward(prob.train(), theta0, grid.delta(), 0.0, &drive(u1, u2))?;
    StateTrajectory::new(grid, states)
}

/// Terminal costate of an agent: 0 for the follower, `sign·∇Φ(θ(T))` for the leader.
pub fn terminal_costate(agent: Agent, theta_t: &DVector<f64>, prob: &Problem) -> Result<DVector<f64>> {
    match agent {
        Agent::Follower => Ok(DVector::zeros(theta_t.len())),
        Agent::Leader => Ok(prob.grad_phi(theta_t)? * prob.spec().terminal_sign.value()),
    }
}

/// Backward RK4 solve of `ṗ = ∇²J₀(θ)p − wθ` from the agent's terminal
/// condition, with `w = α` (follower) or `1` (leader).
pub fn integrate_adjoint(
    agent: Agent,
    theta: &StateTrajectory,
    prob: &Problem,
) -> Result<AdjointTrajectory> {
    let grid = theta.grid();
    let n = grid.intervals();
    let h = grid.delta();
    let weight = match agent {
        Agent::Follower => prob.alpha(),
        Agent::Leader => 1.0,
    };
    let loss = prob.train();
    let p = prob.param_dim();

    // F(p, θ) = G p − wθ
    let rhs = |pv: &DVector<f64>, th: &DVector<f64>, out: &mut DVector<f64>| {
        loss.hvp_into(pv, out);
        out.axpy(-weight, th, 1.0);
    };

    let mut values = vec![DVector::zeros(p); n + 1];
    values[n] = terminal_costate(agent, theta.terminal(), prob)?;
    let (mut k1, mut k2, mut k3, mut k4) = (
        DVector::zeros(p),
        DVector::zeros(p),
        DVector::zeros(p),
        DVector::zeros(p),
    );
    let mut stage = DVector::zeros(p);
    for k in (0..n).rev() {
        let th_hi = theta.value(k + 1);
        let th_lo = theta.value(k);
        let th_mid = (th_lo + th_hi) * 0.5;
        let p_hi = values[k + 1].clone();
        rhs(&p_hi, th_hi, &mut k1);
        stage.copy_from(&p_hi);
        stage.axpy(-0.5 * h, &k1, 1.0);
        rhs(&stage, &th_mid, &mut k2);
        stage.copy_from(&p_hi);
        stage.axpy(-0.5 * h, &k2, 1.0);
        rhs(&stage, &th_mid, &mut k3);
        stage.copy_from(&p_hi);
        stage.axpy(-h, &k3, 1.0);
        rhs(&stage, th_lo, &mut k4);
        let mut p_lo = p_hi;
        p_lo.axpy(-h / 6.0, &k1, 1.0);
        p_lo.axpy(-h / 3.0, &k2, 1.0);
        p_lo.axpy(-h / 3.0, &k3, 1.0);
        p_lo.axpy(-h / 6.0, &k4, 1.0);
        if p_lo.iter().any(|x| !x.is_finite()) {
            return Err(Error::BlowUp {
                node: k,
                t: grid.node(k),
            });
        }
        values[k] = p_lo;
    }
    Ok(AdjointTrajectory::new(grid, agent, values))
}

/// Interval costates of an agent along `theta`, from reverse-mode
/// differentiation of the agent's discretized cost.
pub fn interval_costate(
    agent: Agent,
    theta: &StateTrajectory,
    prob: &Problem,
) -> Result<IntervalCostate> {
    let grid = theta.grid();
    let h = grid.delta();
    let cost = StageCost::for_agent(agent, prob);
    let sens = cost.node_sensitivities(theta.values(), h)?;
    let values = rk4_reverse(prob.train(), h, &sens)
        .into_iter()
        .map(|v| v / h)
        .collect();
    IntervalCostate::new(grid, agent, values)
}

/// Exact gradient of the agent's discretized cost with respect to each of
/// its control values: `δ·mask(p̄_k + c·u_k)` where `c` is the control weight.
pub fn control_gradient(
    costate: &IntervalCostate,
    control: &ControlTrajectory,
    prob: &Problem,
) -> Vec<DVector<f64>> {
    let agent = control.agent();
    let h = control.grid().delta();
    let c = match agent {
        Agent::Follower => prob.beta(),
        Agent::Leader => 0.0,
    };
    costate
        .values()
        .iter()
        .zip(control.values())
        .map(|(pk, uk)| {
            let mut g = pk + uk * c;
            prob.partition().mask_in_place(agent, &mut g);
            g * h
        })
        .collect()
}

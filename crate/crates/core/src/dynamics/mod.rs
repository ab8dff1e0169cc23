//! Time grids, trajectories, integrators and Hamiltonians.

mod grid;
mod hamiltonian;
mod integrate;
mod partition;
mod trajectory;

use serde::{Deserialize, Serialize};

pub use grid::TimeGrid;
pub use hamiltonian::{
    augmented_hamiltonian, extremum_residual, hamiltonian, CostateValues, Residual,
};
pub use integrate::{
    control_gradient, integrate_adjoint, integrate_forward, interval_costate, terminal_costate,
};
pub(crate) use integrate::{rk4_forward, rk4_reverse, StageCost, Terminal};
pub use partition::{Agent, ControlPartition};
pub(crate) use trajectory::clamp;
pub use trajectory::{AdjointTrajectory, ControlTrajectory, IntervalCostate, StateTrajectory};

/// Sign of the leader's terminal costate `p₁(T) = ±∇Φ(θ(T))`.
///
/// `Plus` makes the leader costate the sensitivity of `J₁ + Φ(θ(T))`, so the
/// leader descends that composite. `Minus` is the literal reading
/// `p₁(T) = −∇Φ`, under which the leader is pushed away from low Φ.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalSign {
    #[default]
    Plus,
    Minus,
}

impl TerminalSign {
    pub fn value(self) -> f64 {
        match self {
            TerminalSign::Plus => 1.0,
            TerminalSign::Minus => -1.0,
        }
    }
}

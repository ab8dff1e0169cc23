//! Ready-made problem instances built on the identity design.

use crate::dynamics::{ControlPartition, TerminalSign};
use crate::problem::{Dataset, ModelSpec, ProblemSpec};

/// `m = p` rows `√p·e_i` with labels `√p·targets[i]`, so that for the linear
/// model `(1/m)XᵀX = I` and the least-squares minimizer is `targets`.
pub fn identity_design(targets: &[f64]) -> Dataset {
    let p = targets.len();
    let s = (p as f64).sqrt();
    let rows: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| if i == j { s } else { 0.0 }).collect())
        .collect();
    let labels: Vec<f64> = targets.iter().map(|t| s * t).collect();
    Dataset::from_rows(&rows, &labels).expect("identity design is a valid dataset")
}

/// Convex quadratic instance: `∇J₀(θ) = θ − θ*`, `Φ` with the same minimizer,
/// `θ₀ = 0`, `α = β = 1`, `γ₁ = γ₂ = 0.5`, `u_max = 1`, default partition.
pub fn quadratic_spec(theta_star: &[f64], horizon: f64, intervals: usize) -> ProblemSpec {
    let p = theta_star.len();
    ProblemSpec {
        model: ModelSpec::linear(),
        train_set: identity_design(theta_star),
        valid_set: identity_design(theta_star),
        theta0: vec![0.0; p],
        horizon,
        intervals,
        alpha: 1.0,
        beta: 1.0,
        gamma1: 0.5,
        gamma2: 0.5,
        u_max: 1.0,
        partition: ControlPartition::split_default(p),
        z_target: 0.0,
        eps_tol: 1e-6,
        terminal_sign: TerminalSign::Plus,
    }
}

/// The reference instance: `p = 2`, `θ* = (1, −1)`, `T = 1`, `N = 50`,
/// `γ₁ = 0.9`, `u_max = 0.5`.
///
/// The leader pays nothing for control, so its optimum is bang-bang; the
/// tighter box makes it saturate on the whole horizon, which keeps the
/// leader iterations from stalling near a switching point.
pub fn reference_spec() -> ProblemSpec {
    ProblemSpec {
        gamma1: 0.9,
        u_max: 0.5,
        ..quadratic_spec(&[1.0, -1.0], 1.0, 50)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Problem;
    use nalgebra::DVector;

    #[test]
    fn reference_is_valid_and_normalized() {
        let prob = Problem::new(reference_spec()).unwrap();
        assert!((prob.train().gram() - nalgebra::DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
        let g = prob.train().grad(&DVector::zeros(2)).unwrap();
        assert!((g - DVector::from_vec(vec![-1.0, 1.0])).amax() < 1e-15);
        assert_eq!(prob.partition().leader_idx, vec![0]);
        assert_eq!(prob.partition().follower_idx, vec![1]);
    }
}

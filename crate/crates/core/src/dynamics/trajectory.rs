use std::path::Path;

use nalgebra::DVector;

use super::{Agent, ControlPartition, TimeGrid};
use crate::error::{check_len, Error, Result};

/// Piecewise-constant control of one agent: `values[k]` holds on
/// `[t_k, t_{k+1})`, `k = 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    grid: TimeGrid,
    agent: Agent,
    values: Vec<DVector<f64>>,
}

impl ControlTrajectory {
    pub fn zeros(grid: TimeGrid, agent: Agent, p: usize) -> Self {
        Self {
            grid,
            agent,
            values: vec![DVector::zeros(p); grid.intervals()],
        }
    }

    /// Builds a control from raw interval values, checking the agent mask
    /// and the box `|u_i| <= u_max`.
    pub fn new(
        grid: TimeGrid,
        agent: Agent,
        values: Vec<DVector<f64>>,
        partition: &ControlPartition,
        u_max: f64,
    ) -> Result<Self> {
        check_len("control intervals", grid.intervals(), values.len())?;
        let traj = Self {
            grid,
            agent,
            values,
        };
        traj.check(partition, u_max)?;
        Ok(traj)
    }

    /// Masked and clamped copy of arbitrary interval values.
    pub fn projected(
        grid: TimeGrid,
        agent: Agent,
        values: Vec<DVector<f64>>,
        partition: &ControlPartition,
        u_max: f64,
    ) -> Self {
        let values = values
            .into_iter()
            .map(|mut v| {
                partition.mask_in_place(agent, &mut v);
                v.apply(|x| *x = clamp(*x, u_max));
                v
            })
            .collect();
        Self {
            grid,
            agent,
            values,
        }
    }

    pub(crate) fn from_parts_unchecked(
        grid: TimeGrid,
        agent: Agent,
        values: Vec<DVector<f64>>,
    ) -> Self {
        Self {
            grid,
            agent,
            values,
        }
    }

    pub fn check(&self, partition: &ControlPartition, u_max: f64) -> Result<()> {
        for (k, v) in self.values.iter().enumerate() {
            if !partition.is_masked(self.agent, v) {
                return Err(Error::InvalidProblem(format!(
                    "{} control at interval {k} is nonzero outside its coordinates",
                    self.agent.name()
                )));
            }
            if v.iter().any(|x| !(x.abs() <= u_max)) {
                return Err(Error::InvalidProblem(format!(
                    "{} control at interval {k} leaves the box [-{u_max}, {u_max}]",
                    self.agent.name()
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn agent(&self) -> Agent {
        self.agent
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<DVector<f64>> {
        self.values
    }

    pub fn value(&self, k: usize) -> &DVector<f64> {
        &self.values[k]
    }

    /// Discrete L² norm `sqrt(δ Σ_k ‖u_k‖²)`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.delta() * self.values.iter().map(|v| v.norm_squared()).sum::<f64>()).sqrt()
    }

    /// Discrete L² distance to another control on the same grid.
    pub fn l2_distance(&self, other: &ControlTrajectory) -> f64 {
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_squared())
            .sum();
        (self.grid.delta() * sum).sqrt()
    }
}

#[inline]
pub(crate) fn clamp(x: f64, u_max: f64) -> f64 {
    x.clamp(-u_max, u_max)
}

/// Parameter trajectory `θ(t_k)`, `k = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    grid: TimeGrid,
    values: Vec<DVector<f64>>,
}

impl StateTrajectory {
    pub fn new(grid: TimeGrid, values: Vec<DVector<f64>>) -> Result<Self> {
        check_len("state nodes", grid.intervals() + 1, values.len())?;
        if let Some(node) = values.iter().position(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::BlowUp {
                node,
                t: grid.node(node),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn value(&self, k: usize) -> &DVector<f64> {
        &self.values[k]
    }

    pub fn initial(&self) -> &DVector<f64> {
        &self.values[0]
    }

    pub fn terminal(&self) -> &DVector<f64> {
        &self.values[self.grid.intervals()]
    }

    /// Writes `t, theta_0.., theta_{p-1}` with one row per node.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let p = self.values[0].len();
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        let mut header = vec!["t".to_string()];
        header.extend((0..p).map(|i| format!("theta_{i}")));
        writer.write_record(&header)?;
        for (k, v) in self.values.iter().enumerate() {
            let mut row = vec![format!("{:e}", self.grid.node(k))];
            row.extend(v.iter().map(|x| format!("{x:e}")));
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Costate `p(t_k)`, `k = 0..=N`, of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    grid: TimeGrid,
    agent: Agent,
    values: Vec<DVector<f64>>,
}

impl AdjointTrajectory {
    pub(crate) fn new(grid: TimeGrid, agent: Agent, values: Vec<DVector<f64>>) -> Self {
        debug_assert_eq!(values.len(), grid.intervals() + 1);
        Self {
            grid,
            agent,
            values,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn agent(&self) -> Agent {
        self.agent
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn value(&self, k: usize) -> &DVector<f64> {
        &self.values[k]
    }

    pub fn terminal(&self) -> &DVector<f64> {
        &self.values[self.grid.intervals()]
    }

    /// Writes `t, theta_.., p_..` with one row per node.
    pub fn write_csv(&self, path: impl AsRef<Path>, state: &StateTrajectory) -> Result<()> {
        check_len("adjoint dump", self.values.len(), state.values().len())?;
        let p = self.values[0].len();
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        let mut header = vec!["t".to_string()];
        header.extend((0..p).map(|i| format!("theta_{i}")));
        header.extend((0..p).map(|i| format!("p_{i}")));
        writer.write_record(&header)?;
        for (k, (pk, th)) in self.values.iter().zip(state.values()).enumerate() {
            let mut row = vec![format!("{:e}", self.grid.node(k))];
            row.extend(th.iter().map(|x| format!("{x:e}")));
            row.extend(pk.iter().map(|x| format!("{x:e}")));
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Costate seen by the control on each interval: `values[k]` is the interval
/// mean `(1/δ)∫_{t_k}^{t_{k+1}} p dt` of the discretized problem, obtained by
/// reverse-mode differentiation of the integrator. With it the exact gradient
/// of the discrete cost with respect to `u_k` is `δ·(values[k] + ∂L/∂u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalCostate {
    grid: TimeGrid,
    agent: Agent,
    values: Vec<DVector<f64>>,
}

impl IntervalCostate {
    pub fn new(grid: TimeGrid, agent: Agent, values: Vec<DVector<f64>>) -> Result<Self> {
        check_len("costate intervals", grid.intervals(), values.len())?;
        Ok(Self {
            grid,
            agent,
            values,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn agent(&self) -> Agent {
        self.agent
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn value(&self, k: usize) -> &DVector<f64> {
        &self.values[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 4).unwrap()
    }

    #[test]
    fn control_checks_mask_and_box() {
        let part = ControlPartition::new(vec![0], vec![1]);
        let ok = vec![DVector::from_vec(vec![0.5, 0.0]); 4];
        assert!(ControlTrajectory::new(grid(), Agent::Leader, ok.clone(), &part, 1.0).is_ok());
        assert!(ControlTrajectory::new(grid(), Agent::Follower, ok.clone(), &part, 1.0).is_err());
        assert!(ControlTrajectory::new(grid(), Agent::Leader, ok, &part, 0.25).is_err());
        let short = vec![DVector::zeros(2); 3];
        assert!(ControlTrajectory::new(grid(), Agent::Leader, short, &part, 1.0).is_err());
    }

    #[test]
    fn projection_masks_and_clamps() {
        let part = ControlPartition::new(vec![0], vec![1]);
        let raw = vec![DVector::from_vec(vec![3.0, -7.0]); 4];
        let u = ControlTrajectory::projected(grid(), Agent::Follower, raw, &part, 2.0);
        assert_eq!(u.value(2).as_slice(), &[0.0, -2.0]);
        u.check(&part, 2.0).unwrap();
    }

    #[test]
    fn l2_norm_of_constant_control() {
        let part = ControlPartition::new(vec![0], vec![1]);
        let raw = vec![DVector::from_vec(vec![0.0, 2.0]); 4];
        let u = ControlTrajectory::new(grid(), Agent::Follower, raw, &part, 2.0).unwrap();
        assert!((u.l2_norm() - 2.0).abs() < 1e-15);
        let z = ControlTrajectory::zeros(grid(), Agent::Follower, 2);
        assert!((u.l2_distance(&z) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn state_rejects_non_finite() {
        let mut values = vec![DVector::zeros(1); 5];
        values[3][0] = f64::NAN;
        match StateTrajectory::new(grid(), values) {
            Err(Error::BlowUp { node, .. }) => assert_eq!(node, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_dumps() {
        let dir = tempfile::tempdir().unwrap();
        let state = StateTrajectory::new(grid(), vec![DVector::from_vec(vec![1.0, 2.0]); 5]).unwrap();
        let adj = AdjointTrajectory::new(grid(), Agent::Leader, vec![DVector::zeros(2); 5]);
        state.write_csv(dir.path().join("s.csv")).unwrap();
        adj.write_csv(dir.path().join("a.csv"), &state).unwrap();
        let text = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,theta_0,theta_1,p_0,p_1");
        assert_eq!(lines.count(), 5);
    }
}

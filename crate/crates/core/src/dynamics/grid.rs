use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_k = T·(k/N)`, `k = 0..=N`.
///
/// Nodes are computed from the index, never accumulated, so `t_0 = 0` and
/// `t_N = T` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, intervals: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "horizon T = {horizon} must be positive"
            )));
        }
        if intervals == 0 {
            return Err(Error::InvalidProblem("grid needs at least one interval".into()));
        }
        Ok(Self { horizon, intervals })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Step `δ = T/N`.
    pub fn delta(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    /// Node time `t_k`.
    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k <= self.intervals);
        self.horizon * (k as f64 / self.intervals as f64)
    }

    /// Fraction `t_k / T`, computed as `k/N` so that both endpoints are exact.
    pub fn fraction(&self, k: usize) -> f64 {
        k as f64 / self.intervals as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.intervals).map(move |k| self.node(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_exact() {
        for (t, n) in [(0.1, 3), (1.0, 7), (2.5, 1000), (1e-3, 13)] {
            let g = TimeGrid::new(t, n).unwrap();
            assert_eq!(g.node(0), 0.0);
            assert_eq!(g.node(n), t);
            assert_eq!(g.fraction(n), 1.0);
            assert_eq!(g.nodes().count(), n + 1);
        }
    }

    #[test]
    fn spacing_is_uniform() {
        let g = TimeGrid::new(1.0, 64).unwrap();
        for k in 0..64 {
            assert_eq!(g.node(k + 1) - g.node(k), g.delta());
        }
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(-1.0, 4).is_err());
        assert!(TimeGrid::new(f64::NAN, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }
}

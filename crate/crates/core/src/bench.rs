//! Timing of the subinterval phase of the time-parallel solver.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_adjoint, integrate_forward, Agent, ControlTrajectory};
use crate::error::{Error, Result};
use crate::instances::quadratic_spec;
use crate::problem::{Problem, ProblemSpec};
use crate::solver::{intermediate_state, subinterval_phase, worker_pool, CoarseLayout, SolverOptions};

/// Worker count and speedup the subinterval phase is expected to reach.
pub const SPEEDUP_TARGET_WORKERS: usize = 4;
pub const SPEEDUP_TARGET: f64 = 2.0;

/// Bench CSV header.
pub const BENCH_COLUMNS: [&str; 5] = ["W", "N_c", "phase", "wall_time_s", "speedup_vs_W1"];

/// One bench CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    #[serde(rename = "W")]
    pub workers: usize,
    #[serde(rename = "N_c")]
    pub coarse_intervals: usize,
    pub phase: String,
    pub wall_time_s: f64,
    pub speedup_vs_w1: f64,
}

/// Convex quadratic instance with `p` parameters on `coarse · steps` fine
/// intervals over `[0, 1]`.
pub fn bench_spec(p: usize, coarse: usize, steps: usize) -> ProblemSpec {
    let theta_star: Vec<f64> = (0..p).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + i as f64 / p as f64)).collect();
    quadratic_spec(&theta_star, 1.0, coarse * steps)
}

/// Times both subinterval phases at the zero-control iterate for every `W`
/// in `workers`, keeping the fastest of `repeats` runs. `W = 1` is always
/// measured for the speedup column; it gets rows only when listed.
pub fn bench_phases(prob: &Problem, opts: &SolverOptions, workers: &[usize], repeats: usize) -> Result<Vec<BenchRow>> {
    if workers.is_empty() {
        return Err(Error::InvalidOptions("empty worker list".into()));
    }
    if let Some(w) = workers.iter().find(|w| **w == 0) {
        return Err(Error::InvalidOptions(format!("worker count {w} must be at least 1")));
    }
    let layout = CoarseLayout::new(prob.grid(), opts.coarse_intervals)?;
    let u1 = ControlTrajectory::zeros(prob.grid(), Agent::Leader, prob.param_dim());
    let u2 = ControlTrajectory::zeros(prob.grid(), Agent::Follower, prob.param_dim());
    let theta = integrate_forward(prob.theta0(), &u1, &u2, prob)?;
    let m2 = intermediate_state(&theta, &integrate_adjoint(Agent::Follower, &theta, prob)?, &layout)?;
    let m1 = intermediate_state(&theta, &integrate_adjoint(Agent::Leader, &theta, prob)?, &layout)?;

    let time = |w: usize, agent: Agent| -> Result<f64> {
        let pool = worker_pool(w)?;
        let (m, frozen, warm) = match agent {
            Agent::Follower => (&m2, &u1, &u2),
            Agent::Leader => (&m1, &u2, &u1),
        };
        let mut best = f64::INFINITY;
        for _ in 0..repeats.max(1) {
            let start = Instant::now();
            subinterval_phase(agent, m, frozen, warm, &layout, prob, opts, &pool)?;
            best = best.min(start.elapsed().as_secs_f64());
        }
        Ok(best)
    };

    let mut rows = Vec::new();
    for agent in [Agent::Follower, Agent::Leader] {
        let base = time(1, agent)?;
        for &w in workers {
            let t = if w == 1 { base } else { time(w, agent)? };
            rows.push(BenchRow {
                workers: w,
                coarse_intervals: layout.coarse_intervals(),
                phase: agent.name().to_string(),
                wall_time_s: t,
                speedup_vs_w1: if w == 1 { 1.0 } else { base / t },
            });
        }
    }
    Ok(rows)
}

/// Rows at [`SPEEDUP_TARGET_WORKERS`] whose speedup falls short of [`SPEEDUP_TARGET`].
pub fn speedup_shortfalls(rows: &[BenchRow]) -> Vec<&BenchRow> {
    rows.iter()
        .filter(|r| r.workers == SPEEDUP_TARGET_WORKERS && r.speedup_vs_w1 < SPEEDUP_TARGET)
        .collect()
}

pub fn write_bench_csv(rows: &[BenchRow], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(BENCH_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.workers.to_string(),
            r.coarse_intervals.to_string(),
            r.phase.clone(),
            r.wall_time_s.to_string(),
            r.speedup_vs_w1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_bench_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    write_bench_csv(rows, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_worker_speedup_is_one() {
        let prob = Problem::new(bench_spec(3, 4, 8)).unwrap();
        let opts = SolverOptions { coarse_intervals: Some(4), ..Default::default() };
        let rows = bench_phases(&prob, &opts, &[1], 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.speedup_vs_w1 == 1.0 && r.coarse_intervals == 4));
    }

    #[test]
    fn row_count_and_header() {
        let prob = Problem::new(bench_spec(2, 2, 4)).unwrap();
        let opts = SolverOptions { coarse_intervals: Some(2), ..Default::default() };
        let rows = bench_phases(&prob, &opts, &[1, 2, 3], 1).unwrap();
        assert_eq!(rows.len(), 6);
        let mut buf = Vec::new();
        write_bench_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "W,N_c,phase,wall_time_s,speedup_vs_W1");
        assert_eq!(text.lines().count(), 7);
        assert!(bench_phases(&prob, &opts, &[0], 1).is_err());
        assert!(bench_phases(&prob, &opts, &[], 1).is_err());
    }

    #[test]
    fn bench_instance_shape() {
        let spec = bench_spec(8, 64, 32);
        assert_eq!(spec.intervals, 2048);
        assert_eq!(spec.theta0.len(), 8);
        Problem::new(spec).unwrap();
    }
}

//! Fixtures for the criterion benches.

use hocl_core::bench::bench_spec;
use hocl_core::dynamics::{integrate_adjoint, integrate_forward, Agent, ControlTrajectory};
use hocl_core::instances::reference_spec;
use hocl_core::solver::{intermediate_state, subinterval_phase, worker_pool, CoarseLayout, IntermediateTrajectory, Segment};
use hocl_core::{Problem, Result, SolverOptions};

pub fn reference_problem() -> Problem {
    Problem::new(reference_spec()).expect("reference instance is valid")
}

/// Follower subinterval phase at the zero-control iterate, ready to rerun.
pub struct PhaseFixture {
    pub prob: Problem,
    pub opts: SolverOptions,
    layout: CoarseLayout,
    m2: IntermediateTrajectory,
    u1: ControlTrajectory,
    u2: ControlTrajectory,
    pool: rayon::ThreadPool,
}

impl PhaseFixture {
    /// `p` parameters, `coarse` subintervals of `steps` fine steps each.
    pub fn new(p: usize, coarse: usize, steps: usize, workers: usize) -> Result<Self> {
        let prob = Problem::new(bench_spec(p, coarse, steps))?;
        let opts = SolverOptions {
            coarse_intervals: Some(coarse),
            workers,
            ..Default::default()
        };
        let layout = CoarseLayout::new(prob.grid(), opts.coarse_intervals)?;
        let u1 = ControlTrajectory::zeros(prob.grid(), Agent::Leader, p);
        let u2 = ControlTrajectory::zeros(prob.grid(), Agent::Follower, p);
        let theta = integrate_forward(prob.theta0(), &u1, &u2, &prob)?;
        let m2 = intermediate_state(&theta, &integrate_adjoint(Agent::Follower, &theta, &prob)?, &layout)?;
        Ok(Self {
            pool: worker_pool(workers)?,
            prob,
            opts,
            layout,
            m2,
            u1,
            u2,
        })
    }

    pub fn run(&self) -> Result<Vec<Segment>> {
        subinterval_phase(Agent::Follower, &self.m2, &self.u1, &self.u2, &self.layout, &self.prob, &self.opts, &self.pool)
    }
}

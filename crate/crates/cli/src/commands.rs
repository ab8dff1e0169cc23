use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hocl_core::bench::{bench_phases, save_bench_csv, speedup_shortfalls, BenchRow, SPEEDUP_TARGET};
use hocl_core::dynamics::{control_gradient, interval_costate, Agent, ControlTrajectory};
use hocl_core::oracle::{discrete_cost, fd_gradient, FD_EPS, ORACLE_MAX_DIM, ORACLE_MAX_INTERVALS};
use hocl_core::solver::{follower_gradient_step, leader_gradient_step};
use hocl_core::{
    bootstrap_indices, integrate_forward, solve, synthetic_linear, Algorithm, Problem, SeedStream,
    SolveReport, SolverOptions,
};
use nalgebra::DVector;
use serde::Serialize;

use crate::config::RunConfig;

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Overrides the worker count from the config and from `--workers`.
pub const WORKERS_ENV: &str = "HOCL_WORKERS";

/// Largest per-node relative error accepted by `check-gradients`.
pub const GRADIENT_TOL: f64 = 1e-5;
/// Step of the one-step descent checks.
pub const DESCENT_STEP: f64 = 0.05;

pub const TRACE_COLUMNS: [&str; 7] = ["iter", "J1", "J2", "leader_residual", "follower_residual", "phi_gap", "wall_s"];
pub const DEFAULT_BENCH_WORKERS: [usize; 3] = [1, 2, 4];

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub algorithm: Option<Algorithm>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    /// Worker count: `HOCL_WORKERS`, then `--workers`, then the config.
    pub fn workers(&self, cfg: &RunConfig) -> Result<usize> {
        let env = std::env::var(WORKERS_ENV).ok().filter(|s| !s.trim().is_empty());
        let w = match env {
            Some(s) => s
                .trim()
                .parse()
                .with_context(|| format!("{WORKERS_ENV}={s} is not a worker count"))?,
            None => self.workers.unwrap_or_else(|| cfg.solver_options().workers),
        };
        if w == 0 {
            bail!("worker count must be at least 1");
        }
        Ok(w)
    }

    pub fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        match (&self.out, &cfg.out_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => cfg.resolve(o),
            (None, None) => PathBuf::from("out"),
        }
    }

    pub fn solver_options(&self, cfg: &RunConfig) -> Result<SolverOptions> {
        Ok(SolverOptions {
            workers: self.workers(cfg)?,
            ..cfg.solver_options()
        })
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

#[derive(Debug, Serialize)]
struct SplitRecord {
    data_seed: u64,
    split_seed: u64,
    with_replacement: bool,
    train_rows: Vec<usize>,
    valid_rows: Vec<usize>,
}

/// Writes `z0.csv`, `z1.csv`, `z2.csv`, `split.json` and a `config.json`
/// that points at the two splits.
pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let gen = cfg.generator.as_ref().context("config has no \"generator\" section")?;
    let data_seed = cfg.seed("data", 0);
    let split_seed = cfg.seed("split", 1);
    let z0 = synthetic_linear(&gen.theta_true, gen.m0, gen.noise, data_seed)?;
    let (train_rows, valid_rows) = bootstrap_indices(z0.len(), gen.m1, gen.m2, split_seed, gen.with_replacement)?;
    create_dir(out)?;
    z0.write_csv(out.join("z0.csv"))?;
    z0.select(&train_rows)?.write_csv(out.join("z1.csv"))?;
    z0.select(&valid_rows)?.write_csv(out.join("z2.csv"))?;
    let record = SplitRecord {
        data_seed,
        split_seed,
        with_replacement: gen.with_replacement,
        train_rows,
        valid_rows,
    };
    std::fs::write(out.join("split.json"), serde_json::to_string_pretty(&record)?)?;
    let run = serde_json::json!({
        "train_set": "z1.csv",
        "valid_set": "z2.csv",
        "dataset_header": true,
        "seeds": {"data": data_seed, "split": split_seed},
    });
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(&run)?)?;
    Ok(())
}

pub fn write_trace(report: &SolveReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_COLUMNS)?;
    for h in &report.residual_history {
        w.write_record([
            h.iter.to_string(),
            h.j1.to_string(),
            h.j2.to_string(),
            h.leader_residual.to_string(),
            h.follower_residual.to_string(),
            h.phi_gap.to_string(),
            h.wall_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the selected solver and writes `result.json` and `trace.csv`.
pub fn run_solve(cfg: &RunConfig, ov: &Overrides) -> Result<(SolveReport, PathBuf)> {
    let prob = cfg.problem()?;
    let opts = ov.solver_options(cfg)?;
    let algorithm = ov.algorithm.unwrap_or_else(|| cfg.algorithm());
    let mut report = solve(algorithm, &prob, &opts)?;
    report.seeds.extend(cfg.seeds.iter().map(|(k, v)| (k.clone(), *v)));
    let out = ov.out_dir(cfg);
    create_dir(&out)?;
    std::fs::write(out.join("result.json"), serde_json::to_string_pretty(&report)?)?;
    write_trace(&report, &out.join("trace.csv"))?;
    Ok((report, out))
}

pub fn cmd_solve(cfg: &RunConfig, ov: &Overrides) -> Result<i32> {
    let (report, out) = run_solve(cfg, ov)?;
    println!(
        "{}: {} after {} outer iterations, theta(T) = {:?}, leader residual {:.3e}, follower residual {:.3e} ({})",
        report.algorithm.name(),
        if report.converged { "converged" } else { "not converged" },
        report.outer_iters,
        report.theta_final,
        report.leader_residual,
        report.follower_residual,
        out.display(),
    );
    Ok(if report.converged { EXIT_CONVERGED } else { EXIT_NOT_CONVERGED })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

fn random_controls(prob: &Problem, seed: u64) -> (ControlTrajectory, ControlTrajectory) {
    let mut rng = SeedStream::new(seed);
    let (grid, p, s) = (prob.grid(), prob.param_dim(), 0.5 * prob.u_max());
    let mut draw = |agent| {
        let values = (0..grid.intervals())
            .map(|_| DVector::from_fn(p, |_, _| rng.uniform_in(-s, s)))
            .collect();
        ControlTrajectory::projected(grid, agent, values, prob.partition(), prob.u_max())
    };
    (draw(Agent::Leader), draw(Agent::Follower))
}

/// Largest per-node relative error between the adjoint gradient of `agent`'s
/// discrete cost and central finite differences.
pub fn adjoint_fd_error(agent: Agent, prob: &Problem, u1: &ControlTrajectory, u2: &ControlTrajectory) -> Result<f64> {
    let theta = integrate_forward(prob.theta0(), u1, u2, prob)?;
    let (own, other) = match agent {
        Agent::Leader => (u1, u2),
        Agent::Follower => (u2, u1),
    };
    let analytic = control_gradient(&interval_costate(agent, &theta, prob)?, own, prob);
    let fd = fd_gradient(|u| discrete_cost(agent, prob, u.values(), other), own, prob.partition(), FD_EPS)?;
    let scale = fd.iter().map(|g| g.norm()).fold(0.0, f64::max);
    Ok(analytic
        .iter()
        .zip(&fd)
        .map(|(a, f)| (a - f).norm() / f.norm().max(1e-6 * scale).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max))
}

/// Adjoint-vs-finite-difference checks and one-step descent checks of the
/// configured update direction.
pub fn check_gradients(cfg: &RunConfig) -> Result<Vec<CheckRow>> {
    let prob = cfg.problem()?;
    let (p, n) = (prob.param_dim(), prob.grid().intervals());
    if p > ORACLE_MAX_DIM || n > ORACLE_MAX_INTERVALS {
        bail!("oracle scale: p = {p}, N = {n} exceeds p <= {ORACLE_MAX_DIM}, N <= {ORACLE_MAX_INTERVALS}");
    }
    let sign = cfg.solver_options().step_sign;
    let (u1, u2) = random_controls(&prob, cfg.seed("check", 0));
    let theta = integrate_forward(prob.theta0(), &u1, &u2, &prob)?;
    let mut rows = Vec::new();
    for agent in [Agent::Follower, Agent::Leader] {
        let err = adjoint_fd_error(agent, &prob, &u1, &u2)?;
        rows.push(CheckRow {
            name: format!("{}_gradient_vs_fd", agent.name()),
            value: err,
            limit: GRADIENT_TOL,
            pass: err <= GRADIENT_TOL,
        });
    }
    for agent in [Agent::Follower, Agent::Leader] {
        let costate = interval_costate(agent, &theta, &prob)?;
        let (before, after) = match agent {
            Agent::Follower => {
                let next = follower_gradient_step(&u2, &costate, DESCENT_STEP, sign, &prob);
                (discrete_cost(agent, &prob, u2.values(), &u1)?, discrete_cost(agent, &prob, next.values(), &u1)?)
            }
            Agent::Leader => {
                let next = leader_gradient_step(&u1, &costate, DESCENT_STEP, sign, &prob);
                (discrete_cost(agent, &prob, u1.values(), &u2)?, discrete_cost(agent, &prob, next.values(), &u2)?)
            }
        };
        rows.push(CheckRow {
            name: format!("{}_descent", agent.name()),
            value: after - before,
            limit: 0.0,
            pass: after < before,
        });
    }
    Ok(rows)
}

pub fn print_check_table(rows: &[CheckRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "{:<26} {:>12} {:>10}  result", "check", "value", "limit")?;
    for r in rows {
        writeln!(
            out,
            "{:<26} {:>12.3e} {:>10.1e}  {}",
            r.name,
            r.value,
            r.limit,
            if r.pass { "PASS" } else { "FAIL" }
        )?;
    }
    Ok(())
}

pub fn cmd_check_gradients(cfg: &RunConfig) -> Result<i32> {
    let rows = check_gradients(cfg)?;
    print_check_table(&rows, std::io::stdout().lock())?;
    Ok(if rows.iter().all(|r| r.pass) { EXIT_CONVERGED } else { EXIT_ERROR })
}

/// Times the subinterval phases for each worker count and writes `bench.csv`.
pub fn run_bench(cfg: &RunConfig, ov: &Overrides) -> Result<(Vec<BenchRow>, PathBuf)> {
    let algorithm = ov.algorithm.unwrap_or(Algorithm::Parallel);
    if algorithm != Algorithm::Parallel {
        bail!("bench needs algorithm = parallel, got {}", algorithm.name());
    }
    let prob = cfg.problem()?;
    let workers = match (ov.workers, &cfg.bench_workers) {
        (Some(w), _) => vec![w],
        (None, Some(list)) => list.clone(),
        (None, None) => DEFAULT_BENCH_WORKERS.to_vec(),
    };
    let rows = bench_phases(&prob, &cfg.solver_options(), &workers, cfg.bench_repeats.unwrap_or(3))?;
    let out = ov.out_dir(cfg);
    create_dir(&out)?;
    let path = out.join("bench.csv");
    save_bench_csv(&rows, &path)?;
    Ok((rows, path))
}

pub fn cmd_bench(cfg: &RunConfig, ov: &Overrides) -> Result<i32> {
    let (rows, path) = run_bench(cfg, ov)?;
    for r in &rows {
        println!(
            "W={} N_c={} {:<8} {:.4}s speedup {:.2}",
            r.workers, r.coarse_intervals, r.phase, r.wall_time_s, r.speedup_vs_w1
        );
    }
    for r in speedup_shortfalls(&rows) {
        eprintln!(
            "warning: {} phase speedup {:.2} at W={} is below {SPEEDUP_TARGET}",
            r.phase, r.speedup_vs_w1, r.workers
        );
    }
    println!("wrote {}", path.display());
    Ok(EXIT_CONVERGED)
}

//! JSON run configuration with flat keys.
//!
//! Problem fields missing from the file fall back to the reference instance.
//! Dataset entries are either inline `{features, labels}` objects or CSV
//! paths, resolved against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hocl_core::dynamics::{ControlPartition, TerminalSign};
use hocl_core::instances::reference_spec;
use hocl_core::{Algorithm, Dataset, ModelSpec, Problem, ProblemSpec, SolverOptions, StepSign};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    Path(PathBuf),
    Inline(Dataset),
}

/// Synthetic data for `gen-data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    /// True parameter; its length is the feature dimension `d`.
    pub theta_true: Vec<f64>,
    pub m0: usize,
    pub m1: usize,
    pub m2: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub with_replacement: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelSpec>,
    pub train_set: Option<DatasetSource>,
    pub valid_set: Option<DatasetSource>,
    /// CSV dataset files carry a header row.
    #[serde(default)]
    pub dataset_header: bool,
    pub theta0: Option<Vec<f64>>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    #[serde(rename = "N")]
    pub intervals: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub u_max: Option<f64>,
    pub partition: Option<ControlPartition>,
    pub z_target: Option<f64>,
    pub eps_tol: Option<f64>,
    pub terminal_sign: Option<TerminalSign>,

    pub algorithm: Option<Algorithm>,
    pub inner_iters: Option<usize>,
    pub max_outer: Option<usize>,
    pub sub_iters: Option<usize>,
    pub sub_tol: Option<f64>,
    pub lambda: Option<f64>,
    pub workers: Option<usize>,
    pub coarse_intervals: Option<usize>,
    pub step_sign: Option<StepSign>,

    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    pub out_dir: Option<PathBuf>,
    pub generator: Option<GenSpec>,
    pub bench_workers: Option<Vec<usize>>,
    pub bench_repeats: Option<usize>,

    #[serde(skip)]
    base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.check_paths()?;
        Ok(cfg)
    }

    /// Relative paths resolve against `dir`.
    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    fn check_paths(&self) -> Result<()> {
        for src in [&self.train_set, &self.valid_set].into_iter().flatten() {
            if let DatasetSource::Path(p) = src {
                let full = self.resolve(p);
                if !full.is_file() {
                    bail!("dataset file {} not found", full.display());
                }
            }
        }
        Ok(())
    }

    fn dataset(&self, src: &DatasetSource) -> Result<Dataset> {
        match src {
            DatasetSource::Inline(z) => Ok(z.clone()),
            DatasetSource::Path(p) => {
                let full = self.resolve(p);
                Dataset::from_csv(&full, self.dataset_header)
                    .with_context(|| format!("loading dataset {}", full.display()))
            }
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm.unwrap_or(Algorithm::Msa)
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let base = reference_spec();
        let custom_data = self.train_set.is_some() || self.valid_set.is_some();
        let train_set = match &self.train_set {
            Some(s) => self.dataset(s)?,
            None => base.train_set.clone(),
        };
        let valid_set = match &self.valid_set {
            Some(s) => self.dataset(s)?,
            None => base.valid_set.clone(),
        };
        let model = self.model.clone().unwrap_or(base.model.clone());
        let p = model.param_dim(train_set.dim());
        let fallback = |v: Option<f64>, b: f64| v.unwrap_or(b);
        Ok(ProblemSpec {
            theta0: match &self.theta0 {
                Some(t) => t.clone(),
                None if custom_data || p != base.theta0.len() => vec![0.0; p],
                None => base.theta0.clone(),
            },
            partition: match &self.partition {
                Some(part) => part.clone(),
                None => ControlPartition::split_default(p),
            },
            model,
            train_set,
            valid_set,
            horizon: fallback(self.horizon, base.horizon),
            intervals: self.intervals.unwrap_or(base.intervals),
            alpha: fallback(self.alpha, base.alpha),
            beta: fallback(self.beta, base.beta),
            gamma1: fallback(self.gamma1, base.gamma1),
            gamma2: fallback(self.gamma2, base.gamma2),
            u_max: fallback(self.u_max, base.u_max),
            z_target: fallback(self.z_target, base.z_target),
            eps_tol: fallback(self.eps_tol, base.eps_tol),
            terminal_sign: self.terminal_sign.unwrap_or(base.terminal_sign),
        })
    }

    pub fn problem(&self) -> Result<Problem> {
        Ok(Problem::new(self.problem_spec()?)?)
    }

    pub fn solver_options(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            inner_iters: self.inner_iters.unwrap_or(d.inner_iters),
            max_outer: self.max_outer.unwrap_or(d.max_outer),
            sub_iters: self.sub_iters.unwrap_or(d.sub_iters),
            sub_tol: self.sub_tol.unwrap_or(d.sub_tol),
            lambda: self.lambda.unwrap_or(d.lambda),
            workers: self.workers.unwrap_or(d.workers),
            coarse_intervals: self.coarse_intervals.or(d.coarse_intervals),
            step_sign: self.step_sign.unwrap_or(d.step_sign),
        }
    }

    pub fn seed(&self, name: &str, default: u64) -> u64 {
        self.seeds.get(name).copied().unwrap_or(default)
    }
}

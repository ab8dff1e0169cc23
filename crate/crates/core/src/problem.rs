//! Learning problem: datasets, linear-in-parameters hypothesis models, the
//! squared-error training loss and the validation map used by the leader.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlPartition, TerminalSign, TimeGrid};
use crate::error::{check_len, Error, Result};
use crate::rng::SeedStream;

/// Labelled samples: `m` feature rows of width `d` and `m` labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset", into = "RawDataset")]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = Error;

    fn try_from(raw: RawDataset) -> Result<Self> {
        Dataset::from_rows(&raw.features, &raw.labels)
    }
}

impl From<Dataset> for RawDataset {
    fn from(z: Dataset) -> Self {
        RawDataset {
            features: (0..z.len())
                .map(|i| z.features.row(i).iter().copied().collect())
                .collect(),
            labels: z.labels.iter().copied().collect(),
        }
    }
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::InvalidDataset("dataset has no rows".into()));
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidDataset("dataset has no feature columns".into()));
        }
        if labels.len() != features.nrows() {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} rows",
                labels.len(),
                features.nrows()
            )));
        }
        if features.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite entry".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: &[f64]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::InvalidDataset(format!(
                "row {i} has {} entries, expected {d}",
                row.len()
            )));
        }
        let features = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(features, DVector::from_column_slice(labels))
    }

    /// Number of samples `m`.
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature width `d`.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    /// Rows selected by index, in the given order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidDataset(format!("row index {bad} out of range")));
        }
        let features = DMatrix::from_fn(indices.len(), self.dim(), |i, j| {
            self.features[(indices[i], j)]
        });
        let labels = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.labels[i]));
        Self::new(features, labels)
    }

    /// Reads a CSV file whose first `d` columns are features and whose last
    /// column is the label.
    pub fn from_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Self> {
        let reader = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .from_path(path.as_ref())?;
        Self::read_csv(reader)
    }

    pub fn from_csv_reader<R: std::io::Read>(input: R, has_header: bool) -> Result<Self> {
        let reader = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .from_reader(input);
        Self::read_csv(reader)
    }

    fn read_csv<R: std::io::Read>(mut reader: csv::Reader<R>) -> Result<Self> {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() < 2 {
                return Err(Error::InvalidDataset(format!(
                    "record {line} needs at least one feature and a label"
                )));
            }
            let values = record
                .iter()
                .map(|field| {
                    field.parse::<f64>().map_err(|_| {
                        Error::InvalidDataset(format!("record {line}: cannot parse `{field}`"))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let (label, features) = values.split_last().expect("record has entries");
            labels.push(*label);
            rows.push(features.to_vec());
        }
        Self::from_rows(&rows, &labels)
    }

    /// Writes the dataset as CSV with a `x0,..,x{d-1},y` header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        writer.write_record(&header)?;
        for i in 0..self.len() {
            let mut record: Vec<String> = self
                .features
                .row(i)
                .iter()
                .map(|v| format!("{v:e}"))
                .collect();
            record.push(format!("{:e}", self.labels[i]));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Draws a training and a validation set from `z0` by bootstrapping.
///
/// Uses [`SeedStream`] seeded with `seed`. Without replacement the first
/// `m1 + m2` positions of a partial Fisher-Yates shuffle (position `i` swaps
/// with `i + index(m0 - i)`) give the training rows followed by the
/// validation rows. With replacement, `m1` and then `m2` draws of `index(m0)`.
pub fn bootstrap_split(
    z0: &Dataset,
    m1: usize,
    m2: usize,
    seed: u64,
    with_replacement: bool,
) -> Result<(Dataset, Dataset)> {
    let (first, second) = bootstrap_indices(z0.len(), m1, m2, seed, with_replacement)?;
    Ok((z0.select(&first)?, z0.select(&second)?))
}

/// Row indices drawn by [`bootstrap_split`].
pub fn bootstrap_indices(
    m0: usize,
    m1: usize,
    m2: usize,
    seed: u64,
    with_replacement: bool,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if m1 == 0 || m2 == 0 {
        return Err(Error::EmptySplit);
    }
    let mut rng = SeedStream::new(seed);
    if with_replacement {
        let first = (0..m1).map(|_| rng.index(m0)).collect();
        let second = (0..m2).map(|_| rng.index(m0)).collect();
        return Ok((first, second));
    }
    if m1 + m2 > m0 {
        return Err(Error::InsufficientSamples {
            requested: m1 + m2,
            available: m0,
        });
    }
    let mut perm: Vec<usize> = (0..m0).collect();
    for i in 0..m1 + m2 {
        let j = i + rng.index(m0 - i);
        perm.swap(i, j);
    }
    Ok((perm[..m1].to_vec(), perm[m1..m1 + m2].to_vec()))
}

/// `m0` samples `x ~ U(−1, 1)^d`, `y = θ·x + noise·ξ` with `ξ ~ N(0, 1)`,
/// where `d = theta_true.len()`. Features then the noise draw, row by row.
pub fn synthetic_linear(theta_true: &[f64], m0: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if theta_true.is_empty() || m0 == 0 {
        return Err(Error::InvalidDataset("generator needs d >= 1 and m0 >= 1".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidDataset(format!("noise level {noise} must be finite and >= 0")));
    }
    let mut rng = SeedStream::new(seed);
    let mut rows = Vec::with_capacity(m0);
    let mut labels = Vec::with_capacity(m0);
    for _ in 0..m0 {
        let x: Vec<f64> = theta_true.iter().map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let xi: f64 = StandardNormal.sample(rng.rng());
        labels.push(x.iter().zip(theta_true).map(|(a, b)| a * b).sum::<f64>() + noise * xi);
        rows.push(x);
    }
    Dataset::from_rows(&rows, &labels)
}

/// One fixed basis function of the raw features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisFn {
    Constant,
    Feature(usize),
    Power(usize, i32),
    Product(usize, usize),
    Sin(usize),
    Cos(usize),
}

impl BasisFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            BasisFn::Constant => 1.0,
            BasisFn::Feature(i) => x[i],
            BasisFn::Power(i, k) => x[i].powi(k),
            BasisFn::Product(i, j) => x[i] * x[j],
            BasisFn::Sin(i) => x[i].sin(),
            BasisFn::Cos(i) => x[i].cos(),
        }
    }

    fn max_feature(&self) -> Option<usize> {
        match *self {
            BasisFn::Constant => None,
            BasisFn::Feature(i)
            | BasisFn::Power(i, _)
            | BasisFn::Sin(i)
            | BasisFn::Cos(i) => Some(i),
            BasisFn::Product(i, j) => Some(i.max(j)),
        }
    }
}

fn parse_feature(s: &str) -> Option<usize> {
    s.strip_prefix('x')?.parse().ok()
}

impl FromStr for BasisFn {
    type Err = Error;

    /// Accepts `1`, `xI`, `xI^K`, `xI*xJ`, `sin(xI)` and `cos(xI)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let unknown = || Error::UnknownBasis(s.to_string());
        if s == "1" {
            return Ok(BasisFn::Constant);
        }
        if let Some(inner) = s.strip_prefix("sin(").and_then(|r| r.strip_suffix(')')) {
            return parse_feature(inner).map(BasisFn::Sin).ok_or_else(unknown);
        }
        if let Some(inner) = s.strip_prefix("cos(").and_then(|r| r.strip_suffix(')')) {
            return parse_feature(inner).map(BasisFn::Cos).ok_or_else(unknown);
        }
        if let Some((base, exp)) = s.split_once('^') {
            let i = parse_feature(base).ok_or_else(unknown)?;
            let k = exp.parse().map_err(|_| unknown())?;
            return Ok(BasisFn::Power(i, k));
        }
        if let Some((a, b)) = s.split_once('*') {
            let i = parse_feature(a).ok_or_else(unknown)?;
            let j = parse_feature(b).ok_or_else(unknown)?;
            return Ok(BasisFn::Product(i, j));
        }
        parse_feature(s).map(BasisFn::Feature).ok_or_else(unknown)
    }
}

impl fmt::Display for BasisFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BasisFn::Constant => write!(f, "1"),
            BasisFn::Feature(i) => write!(f, "x{i}"),
            BasisFn::Power(i, k) => write!(f, "x{i}^{k}"),
            BasisFn::Product(i, j) => write!(f, "x{i}*x{j}"),
            BasisFn::Sin(i) => write!(f, "sin(x{i})"),
            BasisFn::Cos(i) => write!(f, "cos(x{i})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Linear,
    FixedBasis,
}

/// Hypothesis class `h_θ(x) = Σ_j θ_j φ_j(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Basis identifiers, used only by [`ModelKind::FixedBasis`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub basis: Vec<String>,
}

impl ModelSpec {
    pub fn linear() -> Self {
        Self {
            kind: ModelKind::Linear,
            basis: Vec::new(),
        }
    }

    pub fn fixed_basis<S: Into<String>>(basis: impl IntoIterator<Item = S>) -> Self {
        Self {
            kind: ModelKind::FixedBasis,
            basis: basis.into_iter().map(Into::into).collect(),
        }
    }

    /// Parameter dimension `p` for features of width `d`.
    pub fn param_dim(&self, d: usize) -> usize {
        match self.kind {
            ModelKind::Linear => d,
            ModelKind::FixedBasis => self.basis.len(),
        }
    }

    fn basis_fns(&self, d: usize) -> Result<Vec<BasisFn>> {
        match self.kind {
            ModelKind::Linear => Ok((0..d).map(BasisFn::Feature).collect()),
            ModelKind::FixedBasis => {
                if self.basis.is_empty() {
                    return Err(Error::InvalidProblem("fixed-basis model has no basis".into()));
                }
                let fns = self
                    .basis
                    .iter()
                    .map(|s| s.parse())
                    .collect::<Result<Vec<BasisFn>>>()?;
                if let Some(i) = fns.iter().filter_map(BasisFn::max_feature).find(|&i| i >= d) {
                    return Err(Error::InvalidProblem(format!(
                        "basis refers to feature x{i} but data has {d} columns"
                    )));
                }
                Ok(fns)
            }
        }
    }

    /// Design matrix `A` with `A[i, j] = φ_j(x_i)`.
    pub fn design(&self, z: &Dataset) -> Result<DMatrix<f64>> {
        let fns = self.basis_fns(z.dim())?;
        let mut row = vec![0.0; z.dim()];
        let mut a = DMatrix::zeros(z.len(), fns.len());
        for i in 0..z.len() {
            row.iter_mut()
                .zip(z.features().row(i).iter())
                .for_each(|(r, v)| *r = *v);
            for (j, f) in fns.iter().enumerate() {
                a[(i, j)] = f.eval(&row);
            }
        }
        Ok(a)
    }
}

/// Squared-error loss `J₀(θ) = (1/m) Σ ½(h_θ(x_i) − y_i)²` of one dataset
/// under a linear-in-parameters model.
///
/// The normal-equation pieces `G = AᵀA/m` and `b = Aᵀy/m` are cached so the
/// gradient `Gθ − b` and Hessian product `Gv` cost `O(p²)`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    design: DMatrix<f64>,
    labels: DVector<f64>,
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl LeastSquares {
    pub fn new(model: &ModelSpec, z: &Dataset) -> Result<Self> {
        let design = model.design(z)?;
        let m = z.len() as f64;
        let gram = design.tr_mul(&design) / m;
        let rhs = design.tr_mul(z.labels()) / m;
        Ok(Self {
            design,
            labels: z.labels().clone(),
            gram,
            rhs,
        })
    }

    pub fn param_dim(&self) -> usize {
        self.design.ncols()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn loss(&self, theta: &DVector<f64>) -> Result<f64> {
        check_len("loss", self.param_dim(), theta.len())?;
        let residual = &self.design * theta - &self.labels;
        Ok(0.5 * residual.norm_squared() / self.labels.len() as f64)
    }

    pub fn grad(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("gradient", self.param_dim(), theta.len())?;
        let mut out = DVector::zeros(theta.len());
        self.grad_into(theta, &mut out);
        Ok(out)
    }

    pub fn hvp(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("hessian-vector product", self.param_dim(), v.len())?;
        Ok(&self.gram * v)
    }

    /// `out = Gθ − b` without allocating.
    #[inline]
    pub(crate) fn grad_into(&self, theta: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, &self.gram, theta, 0.0);
        *out -= &self.rhs;
    }

    /// `out = G v` without allocating; the Hessian is constant in θ.
    #[inline]
    pub(crate) fn hvp_into(&self, v: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, &self.gram, v, 0.0);
    }
}

/// Training loss `J₀(θ, z)`.
pub fn loss_j0(model: &ModelSpec, theta: &DVector<f64>, z: &Dataset) -> Result<f64> {
    LeastSquares::new(model, z)?.loss(theta)
}

/// Gradient `(1/m) Aᵀ(Aθ − y)`.
pub fn grad_j0(model: &ModelSpec, theta: &DVector<f64>, z: &Dataset) -> Result<DVector<f64>> {
    let design = model.design(z)?;
    check_len("gradient", design.ncols(), theta.len())?;
    let residual = &design * theta - z.labels();
    Ok(design.tr_mul(&residual) / z.len() as f64)
}

/// Hessian-vector product `(1/m) AᵀA v`.
pub fn hvp_j0(
    model: &ModelSpec,
    theta: &DVector<f64>,
    v: &DVector<f64>,
    z: &Dataset,
) -> Result<DVector<f64>> {
    let design = model.design(z)?;
    check_len("hessian-vector product", design.ncols(), theta.len())?;
    check_len("hessian-vector product", design.ncols(), v.len())?;
    Ok(design.tr_mul(&(&design * v)) / z.len() as f64)
}

/// Validation map `Φ(θ, z₂)`: the training loss evaluated on the validation set.
pub fn phi(model: &ModelSpec, theta: &DVector<f64>, z2: &Dataset) -> Result<f64> {
    loss_j0(model, theta, z2)
}

pub fn grad_phi(model: &ModelSpec, theta: &DVector<f64>, z2: &Dataset) -> Result<DVector<f64>> {
    grad_j0(model, theta, z2)
}

/// Full problem definition, as read from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub model: ModelSpec,
    pub train_set: Dataset,
    pub valid_set: Dataset,
    pub theta0: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub intervals: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub u_max: f64,
    pub partition: ControlPartition,
    pub z_target: f64,
    pub eps_tol: f64,
    /// Sign of the leader's terminal costate relative to `∇Φ`.
    #[serde(default)]
    pub terminal_sign: TerminalSign,
}

/// A validated [`ProblemSpec`] with its losses compiled.
#[derive(Debug, Clone)]
pub struct Problem {
    spec: ProblemSpec,
    theta0: DVector<f64>,
    train: LeastSquares,
    valid: LeastSquares,
    grid: TimeGrid,
}

impl Problem {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidProblem(msg));
        if spec.train_set.dim() != spec.valid_set.dim() {
            return invalid(format!(
                "training data has {} features, validation data {}",
                spec.train_set.dim(),
                spec.valid_set.dim()
            ));
        }
        let p = spec.model.param_dim(spec.train_set.dim());
        if p == 0 {
            return invalid("parameter dimension is zero".into());
        }
        check_len("theta0", p, spec.theta0.len())?;
        if spec.theta0.iter().any(|v| !v.is_finite()) {
            return invalid("theta0 has non-finite entries".into());
        }
        if !(spec.alpha > 0.0) || !(spec.beta > 0.0) {
            return invalid(format!(
                "alpha and beta must be positive (alpha = {}, beta = {})",
                spec.alpha, spec.beta
            ));
        }
        for gamma in [spec.gamma1, spec.gamma2] {
            if !(0.0..1.0).contains(&gamma) {
                return Err(Error::InvalidGamma(gamma));
            }
        }
        if !(spec.u_max >= 0.0) || !spec.u_max.is_finite() {
            return invalid(format!("u_max = {} must be finite and >= 0", spec.u_max));
        }
        if !(spec.eps_tol > 0.0) {
            return invalid(format!("eps_tol = {} must be positive", spec.eps_tol));
        }
        if !spec.z_target.is_finite() {
            return invalid("z_target must be finite".into());
        }
        spec.partition.validate(p)?;
        let grid = TimeGrid::new(spec.horizon, spec.intervals)?;
        let train = LeastSquares::new(&spec.model, &spec.train_set)?;
        let valid = LeastSquares::new(&spec.model, &spec.valid_set)?;
        Ok(Self {
            theta0: DVector::from_column_slice(&spec.theta0),
            spec,
            train,
            valid,
            grid,
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn param_dim(&self) -> usize {
        self.theta0.len()
    }

    pub fn theta0(&self) -> &DVector<f64> {
        &self.theta0
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn partition(&self) -> &ControlPartition {
        &self.spec.partition
    }

    /// Training loss on 𝒵⁽¹⁾, which drives the gradient flow.
    pub fn train(&self) -> &LeastSquares {
        &self.train
    }

    /// Validation loss on 𝒵⁽²⁾, i.e. Φ.
    pub fn valid(&self) -> &LeastSquares {
        &self.valid
    }

    pub fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    pub fn beta(&self) -> f64 {
        self.spec.beta
    }

    pub fn u_max(&self) -> f64 {
        self.spec.u_max
    }

    pub fn phi(&self, theta: &DVector<f64>) -> Result<f64> {
        self.valid.loss(theta)
    }

    pub fn grad_phi(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.valid.grad(theta)
    }

    /// Copy of this problem on a different horizon/grid.
    pub fn with_grid(&self, horizon: f64, intervals: usize) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.horizon = horizon;
        spec.intervals = intervals;
        Problem::new(spec)
    }
}

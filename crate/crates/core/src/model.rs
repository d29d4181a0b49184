//! The switched Ornstein-Uhlenbeck model: a finite-state generator `A`
//! modulating drift `λ(x)` and volatility `σ(x)` of
//! `dY = -λ(X) Y dt + σ(X) dB`.
//!
//! A [`ModelSpec`] is only ever constructed through [`build_model`], so every
//! value in circulation satisfies the standing assumptions (valid generator,
//! positive jump rates, irreducible jump chain, positive volatilities).

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for generator row sums and stochasticity checks.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Drift coefficients with magnitude below this are snapped to exactly zero.
pub const LAMBDA_SNAP: f64 = 1e-14;

/// Residual bound accepted for `‖μA‖∞`.
pub const INVARIANT_RESIDUAL_TOL: f64 = 1e-10;

/// A single violated standing assumption, reported with the offending field.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelIssue {
    TooFewStates { d: usize },
    DimensionMismatch { field: &'static str, expected: usize, found: usize },
    NonSquareGenerator { row: usize, len: usize, expected: usize },
    NonFinite { field: &'static str, index: usize },
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    RowSumNonZero { row: usize, sum: f64 },
    NonPositiveSigma { state: usize, value: f64 },
    ZeroJumpRate { state: usize },
    NotIrreducible { unreachable_from: usize, target: usize },
}

impl fmt::Display for ModelIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelIssue::TooFewStates { d } => write!(f, "d: need at least 2 states, got {d}"),
            ModelIssue::DimensionMismatch { field, expected, found } => {
                write!(f, "{field}: expected length {expected}, found {found}")
            }
            ModelIssue::NonSquareGenerator { row, len, expected } => {
                write!(f, "generator[{row}]: row has {len} entries, expected {expected}")
            }
            ModelIssue::NonFinite { field, index } => {
                write!(f, "{field}[{index}]: value is not finite")
            }
            ModelIssue::NegativeOffDiagonal { row, col, value } => {
                write!(f, "generator[{row}][{col}]: off-diagonal rate {value} is negative")
            }
            ModelIssue::RowSumNonZero { row, sum } => {
                write!(f, "generator[{row}]: row sums to {sum:e}, expected 0")
            }
            ModelIssue::NonPositiveSigma { state, value } => {
                write!(f, "sigma[{state}]: volatility {value} must be > 0")
            }
            ModelIssue::ZeroJumpRate { state } => {
                write!(f, "generator[{state}][{state}]: jump rate a({state}) must be > 0")
            }
            ModelIssue::NotIrreducible { unreachable_from, target } => write!(
                f,
                "generator: state {target} is not reachable from state {unreachable_from} (chain not irreducible)"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model: {}", join_issues(.0))]
    Invalid(Vec<ModelIssue>),
    #[error("generator is numerically rank-deficient beyond its one-dimensional kernel")]
    SingularSolve,
    #[error("invariant measure residual ‖μA‖∞ = {0:e} exceeds tolerance")]
    InvariantResidual(f64),
    #[error("model file: {0}")]
    Parse(String),
    #[error("model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn join_issues(issues: &[ModelIssue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// On-disk JSON form of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub d: usize,
    pub generator: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// A validated switched-OU model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    generator: DMatrix<f64>,
    lambda: Vec<f64>,
    sigma: Vec<f64>,
}

/// Derived data of the switching chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainQuantities {
    pub jump_rates: Vec<f64>,
    pub embedded: DMatrix<f64>,
    pub invariant: Vec<f64>,
}

impl ModelSpec {
    pub fn d(&self) -> usize {
        self.lambda.len()
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn jump_rate(&self, x: usize) -> f64 {
        -self.generator[(x, x)]
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sigma2_min(&self) -> f64 {
        self.sigma.iter().map(|s| s * s).fold(f64::INFINITY, f64::min)
    }

    pub fn sigma2_max(&self) -> f64 {
        self.sigma.iter().map(|s| s * s).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Λ = diag(λ)`.
    pub fn drift_diagonal(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.lambda))
    }

    pub fn to_file(&self) -> ModelFile {
        let d = self.d();
        ModelFile {
            d,
            generator: (0..d).map(|i| self.generator.row(i).iter().copied().collect()).collect(),
            lambda: self.lambda.clone(),
            sigma: self.sigma.clone(),
        }
    }

    /// Applies a relabeling: state `i` of the result is state `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<ModelSpec, ModelError> {
        let d = self.d();
        let gen = DMatrix::from_fn(d, d, |i, j| self.generator[(perm[i], perm[j])]);
        let rows = (0..d).map(|i| gen.row(i).iter().copied().collect()).collect();
        build_model(
            d,
            rows,
            perm.iter().map(|&i| self.lambda[i]).collect(),
            perm.iter().map(|&i| self.sigma[i]).collect(),
        )
    }
}

impl TryFrom<ModelFile> for ModelSpec {
    type Error = ModelError;

    fn try_from(file: ModelFile) -> Result<Self, Self::Error> {
        build_model(file.d, file.generator, file.lambda, file.sigma)
    }
}

/// Validates raw inputs and returns a [`ModelSpec`], or every violated
/// invariant at once.
pub fn build_model(
    d: usize,
    generator: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    sigma: Vec<f64>,
) -> Result<ModelSpec, ModelError> {
    let mut issues = Vec::new();
    if d < 2 {
        issues.push(ModelIssue::TooFewStates { d });
    }
    if generator.len() != d {
        issues.push(ModelIssue::DimensionMismatch { field: "generator", expected: d, found: generator.len() });
    }
    for (row, r) in generator.iter().enumerate() {
        if r.len() != d {
            issues.push(ModelIssue::NonSquareGenerator { row, len: r.len(), expected: d });
        }
    }
    if lambda.len() != d {
        issues.push(ModelIssue::DimensionMismatch { field: "lambda", expected: d, found: lambda.len() });
    }
    if sigma.len() != d {
        issues.push(ModelIssue::DimensionMismatch { field: "sigma", expected: d, found: sigma.len() });
    }
    if !issues.is_empty() {
        return Err(ModelError::Invalid(issues));
    }

    for (field, values) in [("lambda", &lambda), ("sigma", &sigma)] {
        for (index, v) in values.iter().enumerate() {
            if !v.is_finite() {
                issues.push(ModelIssue::NonFinite { field, index });
            }
        }
    }
    for (i, row) in generator.iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            issues.push(ModelIssue::NonFinite { field: "generator", index: i });
            continue;
        }
        for (j, &v) in row.iter().enumerate() {
            if i != j && v < 0.0 {
                issues.push(ModelIssue::NegativeOffDiagonal { row: i, col: j, value: v });
            }
        }
        let sum: f64 = row.iter().sum();
        if sum.abs() > ROW_SUM_TOL {
            issues.push(ModelIssue::RowSumNonZero { row: i, sum });
        }
        if !(row[i] < 0.0) {
            issues.push(ModelIssue::ZeroJumpRate { state: i });
        }
    }
    for (state, &s) in sigma.iter().enumerate() {
        if !(s > 0.0) {
            issues.push(ModelIssue::NonPositiveSigma { state, value: s });
        }
    }
    if let Some((from, target)) = first_unreachable(&generator) {
        issues.push(ModelIssue::NotIrreducible { unreachable_from: from, target });
    }
    if !issues.is_empty() {
        return Err(ModelError::Invalid(issues));
    }

    let lambda = lambda
        .into_iter()
        .enumerate()
        .map(|(x, l)| {
            if l != 0.0 && l.abs() < LAMBDA_SNAP {
                log::warn!("lambda[{x}] = {l:e} snapped to 0");
                0.0
            } else {
                l
            }
        })
        .collect();
    let flat: Vec<f64> = generator.iter().flatten().copied().collect();
    Ok(ModelSpec { generator: DMatrix::from_row_slice(d, d, &flat), lambda, sigma })
}

/// Strong connectivity of the graph with an edge `i -> j` whenever
/// `A(i, j) > 0`. Returns a witness pair `(from, to)` on failure.
fn first_unreachable(generator: &[Vec<f64>]) -> Option<(usize, usize)> {
    let d = generator.len();
    let reach = |start: usize, forward: bool| {
        let mut seen = vec![false; d];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..d {
                let w = if forward { generator[i][j] } else { generator[j][i] };
                if i != j && w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    };
    if let Some(t) = reach(0, true).iter().position(|s| !s) {
        return Some((0, t));
    }
    reach(0, false).iter().position(|s| !s).map(|s| (s, 0))
}

/// Jump rates, embedded jump chain and invariant probability of `X`.
///
/// `μ` solves the augmented system `Aᵀμ = 0` with the last equation replaced
/// by `Σμ = 1`.
pub fn chain_quantities(model: &ModelSpec) -> Result<ChainQuantities, ModelError> {
    let d = model.d();
    let a = model.generator();
    let jump_rates: Vec<f64> = (0..d).map(|x| model.jump_rate(x)).collect();
    let embedded = DMatrix::from_fn(d, d, |i, j| if i == j { 0.0 } else { a[(i, j)] / jump_rates[i] });

    let mut system = a.transpose();
    for j in 0..d {
        system[(d - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(d);
    rhs[d - 1] = 1.0;
    // Hadamard bound: |det| <= product of row norms.
    let hadamard: f64 = system.row_iter().map(|r| r.norm()).product();
    let lu = system.lu();
    if lu.determinant().abs() <= 1e-12 * hadamard {
        return Err(ModelError::SingularSolve);
    }
    let mu = lu.solve(&rhs).ok_or(ModelError::SingularSolve)?;
    if mu.iter().any(|m| !m.is_finite()) {
        return Err(ModelError::SingularSolve);
    }
    let mut invariant: Vec<f64> = mu.iter().map(|&m| if m < 0.0 && m > -1e-12 { 0.0 } else { m }).collect();
    if invariant.iter().any(|&m| m < 0.0) {
        return Err(ModelError::SingularSolve);
    }
    let total: f64 = invariant.iter().sum();
    invariant.iter_mut().for_each(|m| *m /= total);

    let residual = (DVector::from_column_slice(&invariant).transpose() * a).amax();
    if residual > INVARIANT_RESIDUAL_TOL {
        return Err(ModelError::InvariantResidual(residual));
    }
    Ok(ChainQuantities { jump_rates, embedded, invariant })
}

/// `Σ_x λ(x) μ(x)`; the diffusion is ergodic iff this is positive.
pub fn ergodicity_margin(model: &ModelSpec) -> Result<f64, ModelError> {
    let chain = chain_quantities(model)?;
    Ok(model.lambda().iter().zip(&chain.invariant).map(|(l, m)| l * m).sum())
}

pub fn parse_model_json(text: &str) -> Result<ModelSpec, ModelError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    ModelSpec::try_from(file)
}

pub fn load_model(path: &Path) -> Result<ModelSpec, ModelError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    parse_model_json(&text)
}

/// Reference models used by the examples and the validation suite.
pub mod builtin {
    use super::{build_model, ModelSpec};

    fn symmetric_pair(lambda: [f64; 2], sigma: [f64; 2]) -> ModelSpec {
        build_model(2, vec![vec![-1.0, 1.0], vec![1.0, -1.0]], lambda.to_vec(), sigma.to_vec())
            .expect("built-in model is valid")
    }

    /// Heavy-tailed two-state model: λ = (-1, 2), κ = 1/2.
    pub fn model_a() -> ModelSpec {
        symmetric_pair([-1.0, 2.0], [1.0, 1.0])
    }

    /// Two-state degenerate model: λ = (2, 0), exponential-like tails.
    pub fn model_b() -> ModelSpec {
        symmetric_pair([2.0, 0.0], [1.0, 1.0])
    }

    /// Three states, one attractive and two neutral: v_c = 1.
    pub fn model_c3() -> ModelSpec {
        build_model(
            3,
            vec![vec![-1.0, 1.0, 0.0], vec![0.5, -1.0, 0.5], vec![0.5, 0.5, -1.0]],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 1.0, 1.0],
        )
        .expect("built-in model is valid")
    }

    /// Constant coefficients λ = 1, σ = 1: a plain OU process, ν = N(0, 1/2).
    pub fn constant_ou() -> ModelSpec {
        symmetric_pair([1.0, 1.0], [1.0, 1.0])
    }

    /// Gaussian-like regime with distinct drifts λ = (1, 2), σ = (1, 1).
    pub fn gaussian_pair() -> ModelSpec {
        symmetric_pair([1.0, 2.0], [1.0, 1.0])
    }

    pub fn by_name(name: &str) -> Option<ModelSpec> {
        match name {
            "A" | "model_a" => Some(model_a()),
            "B" | "model_b" => Some(model_b()),
            "C3" | "model_c3" => Some(model_c3()),
            "constant" | "constant_ou" => Some(constant_ou()),
            "gaussian" | "gaussian_pair" => Some(gaussian_pair()),
            _ => None,
        }
    }
}

//! Spectral quantities governing the tails and the convergence rates of the
//! stationary law `ν` of `Y`.
//!
//! The central object is `A_p = A - pΛ` and its gap
//! `η_p = -max Re spec(A_p)`. Depending on `λ_min = min λ(x)` the stationary
//! law has polynomial tails (critical moment `κ`, the zero of `η_p`),
//! exponential-like tails (critical Laplace abscissa `v_c`, from the
//! tilted jump chain restricted to the neutral states) or Gaussian-like
//! tails (scale `ᾱ = max σ²/λ`).

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::io::{json_f64, serialize_extended_f64};
use crate::linalg;
use crate::model::{chain_quantities, ergodicity_margin, ModelError, ModelSpec};

/// Absolute bisection tolerance for `κ` and `v_c`.
pub const BISECTION_TOL: f64 = 1e-10;
pub const BISECTION_MAX_ITER: usize = 200;
/// Largest accepted `‖tA_p‖₁` for the Feynman-Kac matrix.
pub const EXPM_MAX_NORM: f64 = 50.0;
pub const DEFAULT_GRID_POINTS: usize = 101;
/// Upper end of the default `η_p` grid outside the polynomial regime.
pub const DEFAULT_GRID_END: f64 = 10.0;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("eigenvalue iteration did not converge at p = {p} for matrix {matrix}")]
    EigenFailure { p: f64, matrix: String },
    #[error("model is not ergodic (Σλμ = {margin})")]
    NotErgodic { margin: f64 },
    #[error("η_p does not change sign on (0, {p_max}]")]
    BracketFailure { p_max: f64 },
    #[error("bisection did not reach tolerance in {BISECTION_MAX_ITER} iterations")]
    NonConvergence,
    #[error("a(x) + pλ(x) = {value} ≤ 0 at state {state} for p = {p}")]
    PoleAtP { p: f64, state: usize, value: f64 },
    #[error("matrix has a negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("model is not in the exponential-like regime (need min λ = 0)")]
    NotExponentialRegime,
    #[error("v² = {v2} is outside the admissible domain v² < 1/β̄ = {limit}")]
    OutOfDomain { v2: f64, limit: f64 },
    #[error("model is not in the Gaussian-like regime (need min λ > 0)")]
    NotGaussianRegime,
    #[error("closed form needs two states with one λ > 0 and the other λ = 0")]
    NotTwoStateDegenerate,
    #[error("state {0} is not a neutral (λ = 0) state")]
    NotNeutralState(usize),
    #[error("‖tA_p‖₁ = {norm} exceeds the supported range {EXPM_MAX_NORM}")]
    Range { norm: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

type Result<T> = std::result::Result<T, SpectralError>;

/// `η_p` sampled on an increasing grid of `p ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl EtaCurve {
    pub fn to_csv(&self) -> String {
        let mut csv = crate::io::CsvBuilder::new(&["p", "eta"]);
        for (p, e) in self.grid.iter().zip(&self.values) {
            csv.row(&[crate::io::Cell::F(*p), crate::io::Cell::F(*e)]);
        }
        csv.finish()
    }

    /// Largest second difference (`≤ 0` up to rounding for a concave curve
    /// on a uniform grid).
    pub fn max_second_difference(&self) -> f64 {
        self.values.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Polynomial,
    ExponentialLike,
    GaussianLike,
    NonErgodic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub ergodicity_margin: f64,
    /// `+∞` outside the polynomial regime; absent for a non-ergodic model.
    #[serde(serialize_with = "serialize_opt_extended")]
    pub kappa: Option<f64>,
    pub v_c: Option<f64>,
    /// `false` when `ρ(P_v^(N))` stays below 1 on the whole admissible domain.
    pub boundary_attained: Option<bool>,
    pub alpha_bar: Option<f64>,
    pub eta_curve: EtaCurve,
}

fn serialize_opt_extended<S: serde::Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&x.map(json_f64), s)
}

/// Partition of the states when `λ ≥ 0`: attractive `M`, neutral `N`, and
/// the entry points `F ⊆ M` reachable from `N` in one jump.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialStructure {
    pub m_set: Vec<usize>,
    pub n_set: Vec<usize>,
    pub f_set: Vec<usize>,
    /// `β(x) = σ(x)²/(2a(x))`, aligned with `n_set`.
    pub beta: Vec<f64>,
    pub beta_bar: f64,
}

impl ExponentialStructure {
    /// Largest `|v|` in the admissible domain `v² < 1/β̄`.
    pub fn v_max(&self) -> f64 {
        self.beta_bar.recip().sqrt()
    }

    pub fn position_in_n(&self, x: usize) -> Option<usize> {
        self.n_set.iter().position(|&n| n == x)
    }

    pub fn is_in_m(&self, x: usize) -> bool {
        self.m_set.contains(&x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalLaplace {
    pub v_c: f64,
    pub boundary_attained: bool,
}

/// `A_p = A - pΛ`.
pub fn tilted_generator(model: &ModelSpec, p: f64) -> DMatrix<f64> {
    model.generator() - model.drift_diagonal() * p
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 0.0 {
        Ok(())
    } else {
        Err(SpectralError::InvalidArgument(format!("p must be finite and ≥ 0, got {p}")))
    }
}

/// `η_p = -max{Re γ : γ ∈ spec(A - pΛ)}`.
pub fn eta(model: &ModelSpec, p: f64) -> Result<f64> {
    check_p(p)?;
    let ap = tilted_generator(model, p);
    linalg::spectral_abscissa(&ap)
        .map(|s| -s)
        .ok_or_else(|| SpectralError::EigenFailure { p, matrix: format!("{ap:?}") })
}

/// `η'_0 = Σ λ(x)μ(x)`.
pub fn eta_derivative_at_zero(model: &ModelSpec) -> Result<f64> {
    Ok(ergodicity_margin(model)?)
}

/// `min{-a(x)/λ(x) : λ(x) < 0}`, or `None` when `λ ≥ 0`.
pub fn kappa_upper_bound(model: &ModelSpec) -> Option<f64> {
    model
        .lambda()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l < 0.0)
        .map(|(x, &l)| -model.jump_rate(x) / l)
        .reduce(f64::min)
}

/// Critical moment `κ = sup{p ≥ 0 : η_p > 0}`; `+∞` when `λ_min ≥ 0`.
pub fn kappa(model: &ModelSpec) -> Result<f64> {
    let margin = ergodicity_margin(model)?;
    if margin <= 0.0 {
        return Err(SpectralError::NotErgodic { margin });
    }
    let Some(p_max) = kappa_upper_bound(model) else {
        return Ok(f64::INFINITY);
    };
    if eta(model, p_max)? > 0.0 {
        return Err(SpectralError::BracketFailure { p_max });
    }
    // η is concave with η_0 = 0 and η'_0 > 0: positive exactly on (0, κ).
    let (mut lo, mut hi) = (0.0, p_max);
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_TOL {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        if eta(model, mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(SpectralError::NonConvergence)
}

/// `M_p(x, x̃) = a(x)/(a(x) + pλ(x)) · P(x, x̃)`.
pub fn m_matrix(model: &ModelSpec, p: f64) -> Result<DMatrix<f64>> {
    let chain = chain_quantities(model)?;
    let d = model.d();
    let mut factors = Vec::with_capacity(d);
    for x in 0..d {
        let denom = chain.jump_rates[x] + p * model.lambda()[x];
        if !(denom > 0.0) {
            return Err(SpectralError::PoleAtP { p, state: x, value: denom });
        }
        factors.push(chain.jump_rates[x] / denom);
    }
    Ok(DMatrix::from_fn(d, d, |i, j| factors[i] * chain.embedded[(i, j)]))
}

/// Perron root of a nonnegative square matrix.
pub fn spectral_radius(mat: &DMatrix<f64>) -> Result<f64> {
    for ((row, col), &value) in mat.iter().enumerate().map(|(k, v)| ((k % mat.nrows(), k / mat.nrows()), v)) {
        if value < 0.0 {
            return Err(SpectralError::NegativeEntry { row, col, value });
        }
    }
    if mat.is_empty() {
        return Ok(0.0);
    }
    linalg::max_modulus(mat).ok_or_else(|| SpectralError::EigenFailure { p: f64::NAN, matrix: format!("{mat:?}") })
}

pub fn exponential_structure(model: &ModelSpec) -> Result<ExponentialStructure> {
    if model.lambda_min() != 0.0 {
        return Err(SpectralError::NotExponentialRegime);
    }
    let chain = chain_quantities(model)?;
    let d = model.d();
    let (n_set, m_set): (Vec<usize>, Vec<usize>) = (0..d).partition(|&x| model.lambda()[x] == 0.0);
    let f_set = m_set.iter().copied().filter(|&x| n_set.iter().any(|&y| chain.embedded[(y, x)] > 0.0)).collect();
    let beta: Vec<f64> = n_set.iter().map(|&x| model.sigma()[x].powi(2) / (2.0 * chain.jump_rates[x])).collect();
    let beta_bar = beta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ExponentialStructure { m_set, n_set, f_set, beta, beta_bar })
}

fn check_domain(structure: &ExponentialStructure, v: f64) -> Result<()> {
    let v2 = v * v;
    if !(v2 * structure.beta_bar < 1.0) {
        return Err(SpectralError::OutOfDomain { v2, limit: structure.beta_bar.recip() });
    }
    Ok(())
}

/// `P_v^(N)(x, x̃) = P(x, x̃)/(1 - β(x)v²)` on `N × N`.
pub fn p_v_matrix(structure: &ExponentialStructure, embedded: &DMatrix<f64>, v: f64) -> Result<DMatrix<f64>> {
    check_domain(structure, v)?;
    let n = &structure.n_set;
    let v2 = v * v;
    Ok(DMatrix::from_fn(n.len(), n.len(), |i, j| embedded[(n[i], n[j])] / (1.0 - structure.beta[i] * v2)))
}

/// `v_c = sup{v > 0 : ρ(P_v^(N)) < 1}`, taken over the admissible domain.
pub fn critical_laplace(model: &ModelSpec) -> Result<CriticalLaplace> {
    let structure = exponential_structure(model)?;
    let embedded = chain_quantities(model)?.embedded;
    let rho = |v: f64| -> Result<f64> { spectral_radius(&p_v_matrix(&structure, &embedded, v)?) };

    let v_max = structure.v_max();
    let v_hi = v_max * (1.0 - 1e-12);
    if rho(v_hi)? < 1.0 {
        return Ok(CriticalLaplace { v_c: v_max, boundary_attained: false });
    }
    // ρ(P_v^(N)) is nondecreasing in |v| and below 1 at v = 0.
    let (mut lo, mut hi) = (0.0, v_hi);
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_TOL {
            return Ok(CriticalLaplace { v_c: 0.5 * (lo + hi), boundary_attained: true });
        }
        let mid = 0.5 * (lo + hi);
        if rho(mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(SpectralError::NonConvergence)
}

/// `E[exp(v I_x0)]` for the Brownian integral accumulated during one sojourn
/// in `N` started at `x0`, or `+∞` when `ρ(P_v^(N)) ≥ 1`.
///
/// Closed form of the Neumann series: `δ_x0 (I - P_v^(N))⁻¹ φ` with
/// `φ(x) = P(x, M)/(1 - β(x)v²)`.
pub fn laplace_of_ix(structure: &ExponentialStructure, embedded: &DMatrix<f64>, v: f64, x0: usize) -> Result<f64> {
    let pos = structure.position_in_n(x0).ok_or(SpectralError::NotNeutralState(x0))?;
    let pv = p_v_matrix(structure, embedded, v)?;
    if spectral_radius(&pv)? >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let v2 = v * v;
    let phi = DVector::from_iterator(
        structure.n_set.len(),
        structure.n_set.iter().zip(&structure.beta).map(|(&x, &b)| {
            let to_m: f64 = structure.m_set.iter().map(|&m| embedded[(x, m)]).sum();
            to_m / (1.0 - b * v2)
        }),
    );
    let k = structure.n_set.len();
    let system = DMatrix::<f64>::identity(k, k) - pv;
    let sol = system
        .lu()
        .solve(&phi)
        .ok_or_else(|| SpectralError::InvalidArgument("I - P_v^(N) is singular".into()))?;
    Ok(sol[pos])
}

/// Gaussian sandwich of the stationary Laplace transform:
/// `(exp(σ_min²v²/(4λ_max)), exp(σ_max²v²/(4λ_min)))`.
pub fn gaussian_bounds(model: &ModelSpec, v: f64) -> Result<(f64, f64)> {
    let l_min = model.lambda_min();
    if !(l_min > 0.0) {
        return Err(SpectralError::NotGaussianRegime);
    }
    let v2 = v * v;
    Ok(((model.sigma2_min() * v2 / (4.0 * model.lambda_max())).exp(), (model.sigma2_max() * v2 / (4.0 * l_min)).exp()))
}

/// `ᾱ = max σ(x)²/λ(x)`; `e^{δy²}` is ν-integrable iff `δ < 1/ᾱ`.
pub fn alpha_bar(model: &ModelSpec) -> Result<f64> {
    if !(model.lambda_min() > 0.0) {
        return Err(SpectralError::NotGaussianRegime);
    }
    Ok(model.sigma().iter().zip(model.lambda()).map(|(s, l)| s * s / l).fold(f64::NEG_INFINITY, f64::max))
}

struct TwoState {
    mu_pos: f64,
    a_pos: f64,
    lambda: f64,
    sigma_pos: f64,
    beta: f64,
}

fn two_state(model: &ModelSpec) -> Result<TwoState> {
    if model.d() != 2 {
        return Err(SpectralError::NotTwoStateDegenerate);
    }
    let l = model.lambda();
    let (pos, zero) = match (l[0] > 0.0 && l[1] == 0.0, l[1] > 0.0 && l[0] == 0.0) {
        (true, _) => (0, 1),
        (_, true) => (1, 0),
        _ => return Err(SpectralError::NotTwoStateDegenerate),
    };
    let chain = chain_quantities(model)?;
    Ok(TwoState {
        mu_pos: chain.invariant[pos],
        a_pos: chain.jump_rates[pos],
        lambda: l[pos],
        sigma_pos: model.sigma()[pos],
        beta: model.sigma()[zero].powi(2) / (2.0 * chain.jump_rates[zero]),
    })
}

/// Two-state closed form as usually quoted, for one state with `λ > 0` and
/// one with `λ = 0`:
///
/// ```text
/// (1 - μβv²)/(1 - βv²) · (1 - βv²)^{-(1 + a/λ)} · exp(σ²v²/(4λ))
/// ```
///
/// (`μ, a, λ, σ` of the attractive state, `β` of the neutral one), `+∞` for
/// `βv² ≥ 1`. The exponent `1 + a/λ` does not match the stationary moments;
/// see [`two_state_laplace_corrected`].
pub fn two_state_laplace(model: &ModelSpec, v: f64) -> Result<f64> {
    let s = two_state(model)?;
    let bv2 = s.beta * v * v;
    if bv2 >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let first = (1.0 - s.mu_pos * bv2) / (1.0 - bv2);
    let second = (1.0 - bv2).recip().powf(1.0 + s.a_pos / s.lambda);
    let third = (s.sigma_pos.powi(2) * v * v / (4.0 * s.lambda)).exp();
    Ok(first * second * third)
}

/// Stationary Laplace transform of the two-state degenerate model,
///
/// ```text
/// (1 - μβv²)/(1 - βv²) · (1 - βv²)^{-a/(2λ)} · exp(σ²v²/(4λ))
/// ```
///
/// Solving the renewal equation over one sojourn in the attractive state
/// keeps the neutral-state factor `1/(1 - βv²u²)` at the decayed argument
/// `vu`, `u = e^{-λT}`; this gives `(log L₁)' = σ²v/(2λ) + (a/λ)βv/(1 - βv²)`
/// for the transform `L₁` started in the attractive state.
pub fn two_state_laplace_corrected(model: &ModelSpec, v: f64) -> Result<f64> {
    let s = two_state(model)?;
    let bv2 = s.beta * v * v;
    if bv2 >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let first = (1.0 - s.mu_pos * bv2) / (1.0 - bv2);
    let second = (1.0 - bv2).powf(-s.a_pos / (2.0 * s.lambda));
    let third = (s.sigma_pos.powi(2) * v * v / (4.0 * s.lambda)).exp();
    Ok(first * second * third)
}

/// `e^{t(A - pΛ)}`, whose row `x` summed gives `E_x[exp(-p∫₀ᵗλ(X_u)du)]`.
pub fn feynman_kac_matrix(model: &ModelSpec, p: f64, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0 && t.is_finite()) || !p.is_finite() {
        return Err(SpectralError::InvalidArgument(format!("need finite p and t ≥ 0, got p = {p}, t = {t}")));
    }
    let scaled = tilted_generator(model, p) * t;
    let norm = linalg::norm1(&scaled);
    if norm > EXPM_MAX_NORM {
        return Err(SpectralError::Range { norm });
    }
    linalg::expm(&scaled).ok_or_else(|| SpectralError::EigenFailure { p, matrix: format!("{scaled:?}") })
}

pub fn eta_curve(model: &ModelSpec, grid: &[f64]) -> Result<EtaCurve> {
    let values = grid.iter().map(|&p| eta(model, p)).collect::<Result<Vec<_>>>()?;
    Ok(EtaCurve { grid: grid.to_vec(), values })
}

/// 101 uniform points on `[0, p_max]` when `λ_min < 0` and the model is
/// ergodic, on `[0, 10]` otherwise.
pub fn default_eta_grid(model: &ModelSpec) -> Result<Vec<f64>> {
    let ergodic = ergodicity_margin(model)? > 0.0;
    let end = match kappa_upper_bound(model) {
        Some(p_max) if ergodic => p_max,
        _ => DEFAULT_GRID_END,
    };
    let n = DEFAULT_GRID_POINTS;
    Ok((0..n).map(|i| end * i as f64 / (n - 1) as f64).collect())
}

/// Tail regime of the stationary law, with its critical quantity.
pub fn classify(model: &ModelSpec) -> Result<RegimeReport> {
    let margin = ergodicity_margin(model)?;
    let eta_curve = eta_curve(model, &default_eta_grid(model)?)?;
    let mut report = RegimeReport {
        regime: Regime::NonErgodic,
        ergodicity_margin: margin,
        kappa: None,
        v_c: None,
        boundary_attained: None,
        alpha_bar: None,
        eta_curve,
    };
    if margin <= 0.0 {
        return Ok(report);
    }
    let l_min = model.lambda_min();
    if l_min < 0.0 {
        report.regime = Regime::Polynomial;
        report.kappa = Some(kappa(model)?);
    } else if l_min == 0.0 {
        let crit = critical_laplace(model)?;
        report.regime = Regime::ExponentialLike;
        report.kappa = Some(f64::INFINITY);
        report.v_c = Some(crit.v_c);
        report.boundary_attained = Some(crit.boundary_attained);
    } else {
        report.regime = Regime::GaussianLike;
        report.kappa = Some(f64::INFINITY);
        report.alpha_bar = Some(alpha_bar(model)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, builtin};
    use approx::assert_abs_diff_eq;

    /// Model A: A_p has characteristic polynomial x² + (2+p)x + (p - 2p²),
    /// discriminant 4 + 9p².
    fn model_a_eta_oracle(p: f64) -> f64 {
        ((2.0 + p) - (4.0 + 9.0 * p * p).sqrt()) / 2.0
    }

    fn constant(c: f64) -> ModelSpec {
        build_model(3, vec![vec![-2.0, 1.0, 1.0], vec![1.0, -1.0, 0.0], vec![3.0, 0.0, -3.0]], vec![c; 3], vec![1.0; 3])
            .unwrap()
    }

    #[test]
    fn eta_constant_drift() {
        for p in [0.0, 0.3, 2.0, 7.5] {
            assert_abs_diff_eq!(eta(&constant(1.3), p).unwrap(), 1.3 * p, epsilon = 1e-12);
        }
    }

    #[test]
    fn eta_model_a_closed_form() {
        let a = builtin::model_a();
        assert_abs_diff_eq!(eta(&a, 0.5).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eta(&a, 0.25).unwrap(), model_a_eta_oracle(0.25), epsilon = 1e-14);
        assert_abs_diff_eq!(eta(&a, 0.25).unwrap(), 0.057, epsilon = 1e-5);
        for i in 0..=20 {
            let p = i as f64 * 0.05;
            assert_abs_diff_eq!(eta(&a, p).unwrap(), model_a_eta_oracle(p), epsilon = 1e-13);
        }
    }

    #[test]
    fn eta_rejects_negative_p() {
        assert!(matches!(eta(&builtin::model_a(), -0.1), Err(SpectralError::InvalidArgument(_))));
    }

    #[test]
    fn eta_derivative_matches_richardson() {
        for m in [builtin::model_a(), constant(0.7), builtin::model_b()] {
            let d1 = |h: f64| eta(&m, h).unwrap() / h;
            let h = 1e-5;
            let richardson = 2.0 * d1(h / 2.0) - d1(h);
            assert_abs_diff_eq!(eta_derivative_at_zero(&m).unwrap(), richardson, epsilon = 1e-6);
        }
        let sym = build_model(2, vec![vec![-1.0, 1.0], vec![1.0, -1.0]], vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(eta_derivative_at_zero(&sym).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn kappa_examples() {
        assert_abs_diff_eq!(kappa(&builtin::model_a()).unwrap(), 0.5, epsilon = 1e-9);
        assert_eq!(kappa(&builtin::model_b()).unwrap(), f64::INFINITY);
        assert_eq!(kappa(&constant(1.0)).unwrap(), f64::INFINITY);
        let non_ergodic = build_model(2, vec![vec![-1.0, 1.0], vec![1.0, -1.0]], vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(kappa(&non_ergodic), Err(SpectralError::NotErgodic { .. })));
    }

    #[test]
    fn m_matrix_examples() {
        let a = builtin::model_a();
        let p = chain_quantities(&a).unwrap().embedded;
        assert_eq!(m_matrix(&a, 0.0).unwrap(), p);
        let m = m_matrix(&a, 0.5).unwrap();
        assert_abs_diff_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.5, 0.0]), epsilon = 1e-15);
        assert_abs_diff_eq!(spectral_radius(&m).unwrap(), 1.0, epsilon = 1e-14);
        assert!(matches!(m_matrix(&a, 1.0), Err(SpectralError::PoleAtP { state: 0, .. })));
    }

    #[test]
    fn spectral_radius_examples() {
        assert_abs_diff_eq!(spectral_radius(&DMatrix::identity(4, 4)).unwrap(), 1.0, epsilon = 1e-14);
        let p = chain_quantities(&builtin::model_c3()).unwrap().embedded;
        assert_abs_diff_eq!(spectral_radius(&p).unwrap(), 1.0, epsilon = 1e-12);
        let neg = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(matches!(spectral_radius(&neg), Err(SpectralError::NegativeEntry { row: 0, col: 1, .. })));
    }

    #[test]
    fn exponential_structure_examples() {
        let s = exponential_structure(&builtin::model_b()).unwrap();
        assert_eq!((s.m_set.clone(), s.n_set.clone(), s.f_set.clone()), (vec![0], vec![1], vec![0]));
        assert_abs_diff_eq!(s.beta_bar, 0.5);
        let s = exponential_structure(&builtin::model_c3()).unwrap();
        assert_eq!((s.m_set.clone(), s.n_set.clone(), s.f_set.clone()), (vec![0], vec![1, 2], vec![0]));
        assert_eq!(s.beta, vec![0.5, 0.5]);
        assert!(matches!(exponential_structure(&constant(1.0)), Err(SpectralError::NotExponentialRegime)));
        assert!(matches!(exponential_structure(&builtin::model_a()), Err(SpectralError::NotExponentialRegime)));
    }

    #[test]
    fn p_v_matrix_examples() {
        let b = builtin::model_b();
        let s = exponential_structure(&b).unwrap();
        let p = chain_quantities(&b).unwrap().embedded;
        assert_eq!(p_v_matrix(&s, &p, 1.3).unwrap(), DMatrix::from_element(1, 1, 0.0));
        assert!(matches!(p_v_matrix(&s, &p, 2f64.sqrt()), Err(SpectralError::OutOfDomain { .. })));

        let c3 = builtin::model_c3();
        let s = exponential_structure(&c3).unwrap();
        let p = chain_quantities(&c3).unwrap().embedded;
        let v: f64 = 0.8;
        let c = 1.0 / (1.0 - v * v / 2.0);
        assert_abs_diff_eq!(
            p_v_matrix(&s, &p, v).unwrap(),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.5 * c, 0.5 * c, 0.0]),
            epsilon = 1e-15
        );
        assert_eq!(p_v_matrix(&s, &p, 0.0).unwrap(), p.view((1, 1), (2, 2)).into_owned());
    }

    #[test]
    fn critical_laplace_examples() {
        let b = critical_laplace(&builtin::model_b()).unwrap();
        assert_abs_diff_eq!(b.v_c, 2f64.sqrt(), epsilon = 1e-8);
        assert!(!b.boundary_attained);
        let c3 = critical_laplace(&builtin::model_c3()).unwrap();
        assert_abs_diff_eq!(c3.v_c, 1.0, epsilon = 1e-9);
        assert!(c3.boundary_attained);
        // σ doubled on N: β = 2, (1/2)/(1 - 2v²) = 1  =>  v_c = 1/2.
        let wide = build_model(
            3,
            vec![vec![-1.0, 1.0, 0.0], vec![0.5, -1.0, 0.5], vec![0.5, 0.5, -1.0]],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 2.0, 2.0],
        )
        .unwrap();
        assert_abs_diff_eq!(critical_laplace(&wide).unwrap().v_c, 0.5, epsilon = 1e-9);
        assert!(matches!(critical_laplace(&builtin::model_a()), Err(SpectralError::NotExponentialRegime)));
    }

    #[test]
    fn laplace_of_ix_examples() {
        let b = builtin::model_b();
        let s = exponential_structure(&b).unwrap();
        let p = chain_quantities(&b).unwrap().embedded;
        for v in [0.0, 0.5, 1.0, -1.2] {
            // Symmetric Laplace law: 2a/(2a - σ²v²).
            assert_abs_diff_eq!(laplace_of_ix(&s, &p, v, 1).unwrap(), 2.0 / (2.0 - v * v), epsilon = 1e-14);
        }
        assert!(matches!(laplace_of_ix(&s, &p, 0.5, 0), Err(SpectralError::NotNeutralState(0))));

        let c3 = builtin::model_c3();
        let s = exponential_structure(&c3).unwrap();
        let p = chain_quantities(&c3).unwrap().embedded;
        assert_abs_diff_eq!(laplace_of_ix(&s, &p, 0.5, 1).unwrap(), 4.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(laplace_of_ix(&s, &p, 0.0, 2).unwrap(), 1.0, epsilon = 1e-14);
        assert_eq!(laplace_of_ix(&s, &p, 1.1, 1).unwrap(), f64::INFINITY);
    }

    #[test]
    fn gaussian_bounds_and_alpha_bar() {
        let (lo, hi) = gaussian_bounds(&builtin::constant_ou(), 1.0).unwrap();
        assert_abs_diff_eq!(lo, 0.25f64.exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 0.25f64.exp(), epsilon = 1e-15);
        let (lo, hi) = gaussian_bounds(&builtin::gaussian_pair(), 1.0).unwrap();
        assert_abs_diff_eq!(lo, 0.125f64.exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 0.25f64.exp(), epsilon = 1e-15);
        assert_eq!(gaussian_bounds(&builtin::gaussian_pair(), 0.0).unwrap(), (1.0, 1.0));
        assert!(matches!(gaussian_bounds(&builtin::model_b(), 1.0), Err(SpectralError::NotGaussianRegime)));

        assert_eq!(alpha_bar(&builtin::constant_ou()).unwrap(), 1.0);
        let pair = |l: [f64; 2], s: [f64; 2]| {
            build_model(2, vec![vec![-1.0, 1.0], vec![1.0, -1.0]], l.to_vec(), s.to_vec()).unwrap()
        };
        assert_eq!(alpha_bar(&pair([1.0, 2.0], [2.0, 1.0])).unwrap(), 4.0);
        assert_eq!(alpha_bar(&pair([1.0, 4.0], [1.0, 2.0])).unwrap(), 1.0);
        assert!(matches!(alpha_bar(&builtin::model_a()), Err(SpectralError::NotGaussianRegime)));
    }

    #[test]
    fn two_state_laplace_examples() {
        let b = builtin::model_b();
        assert_eq!(two_state_laplace(&b, 0.0).unwrap(), 1.0);
        let expected = 1.5 * 2f64.powf(1.5) * 0.125f64.exp();
        assert_abs_diff_eq!(two_state_laplace(&b, 1.0).unwrap(), expected, epsilon = 1e-13);
        assert_abs_diff_eq!(two_state_laplace(&b, 1.0).unwrap(), 4.80755, epsilon = 1e-5);
        assert_eq!(two_state_laplace(&b, 2f64.sqrt()).unwrap(), f64::INFINITY);
        assert!(matches!(two_state_laplace(&builtin::model_a(), 0.5), Err(SpectralError::NotTwoStateDegenerate)));
    }

    /// Stationary `E[Y²]` and `E[Y⁴]` from the moment equations
    /// `0 = -kλ_x m_x + C(k) σ_x² m'_x + Σ_y m_y A(y, x)`.
    fn stationary_moments(model: &ModelSpec) -> (f64, f64) {
        let d = model.d();
        let mu = chain_quantities(model).unwrap().invariant;
        let solve = |k: f64, rhs: Vec<f64>| {
            let m = DMatrix::from_fn(d, d, |x, y| model.generator()[(y, x)] - if x == y { k * model.lambda()[x] } else { 0.0 });
            m.lu().solve(&nalgebra::DVector::from_vec(rhs)).unwrap()
        };
        let s2: Vec<f64> = model.sigma().iter().map(|s| s * s).collect();
        let m2 = solve(2.0, (0..d).map(|x| -s2[x] * mu[x]).collect());
        let m4 = solve(4.0, (0..d).map(|x| -6.0 * s2[x] * m2[x]).collect());
        (m2.sum(), m4.sum())
    }

    #[test]
    fn corrected_two_state_form_matches_stationary_moments() {
        for model in [
            builtin::model_b(),
            build_model(2, vec![vec![-0.7, 0.7], vec![2.0, -2.0]], vec![0.0, 1.3], vec![0.8, 1.5]).unwrap(),
        ] {
            let (m2, m4) = stationary_moments(&model);
            let v = 0.02;
            let series = 1.0 + m2 * v * v / 2.0 + m4 * v.powi(4) / 24.0;
            let corrected = two_state_laplace_corrected(&model, v).unwrap();
            assert!((corrected - series).abs() < 1e-9, "{corrected} vs {series}");
            // the quoted form carries the wrong variance
            assert!((two_state_laplace(&model, v).unwrap() - series).abs() > 1e-5);
        }
        let b = builtin::model_b();
        let expected = 1.5 * 2f64.powf(0.25) * (0.125f64).exp();
        assert_abs_diff_eq!(two_state_laplace_corrected(&b, 1.0).unwrap(), expected, epsilon = 1e-13);
        assert_eq!(two_state_laplace_corrected(&b, 0.0).unwrap(), 1.0);
        assert_eq!(two_state_laplace_corrected(&b, 2f64.sqrt()).unwrap(), f64::INFINITY);
    }

    #[test]
    fn feynman_kac_examples() {
        let a = builtin::model_a();
        assert_abs_diff_eq!(feynman_kac_matrix(&a, 0.3, 0.0).unwrap(), DMatrix::identity(2, 2), epsilon = 1e-15);
        for t in [0.1, 1.0, 3.7, 10.0] {
            let e = feynman_kac_matrix(&a, 0.0, t).unwrap();
            let q = (-2.0 * t).exp();
            let oracle = DMatrix::from_row_slice(2, 2, &[(1.0 + q) / 2.0, (1.0 - q) / 2.0, (1.0 - q) / 2.0, (1.0 + q) / 2.0]);
            assert_abs_diff_eq!(e, oracle, epsilon = 1e-13);
            for r in e.row_iter() {
                assert_abs_diff_eq!(r.sum(), 1.0, epsilon = 1e-10);
            }
        }
        assert!(matches!(feynman_kac_matrix(&a, 0.0, 100.0), Err(SpectralError::Range { .. })));
    }

    #[test]
    fn classify_examples() {
        let r = classify(&builtin::model_a()).unwrap();
        assert_eq!(r.regime, Regime::Polynomial);
        assert_abs_diff_eq!(r.kappa.unwrap(), 0.5, epsilon = 1e-9);
        assert_eq!(r.eta_curve.grid.len(), DEFAULT_GRID_POINTS);
        assert_abs_diff_eq!(*r.eta_curve.grid.last().unwrap(), 1.0);

        let r = classify(&builtin::model_b()).unwrap();
        assert_eq!(r.regime, Regime::ExponentialLike);
        assert_abs_diff_eq!(r.v_c.unwrap(), 2f64.sqrt(), epsilon = 1e-8);
        assert_eq!(r.boundary_attained, Some(false));

        let r = classify(&builtin::constant_ou()).unwrap();
        assert_eq!(r.regime, Regime::GaussianLike);
        assert_eq!(r.alpha_bar, Some(1.0));
        assert_abs_diff_eq!(*r.eta_curve.grid.last().unwrap(), DEFAULT_GRID_END);

        let non = build_model(2, vec![vec![-1.0, 1.0], vec![1.0, -1.0]], vec![-2.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(classify(&non).unwrap().regime, Regime::NonErgodic);
    }

    #[test]
    fn report_json_encodes_infinity() {
        let r = classify(&builtin::model_b()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["kappa"], "inf");
        assert_eq!(v["regime"], "ExponentialLike");
    }
}

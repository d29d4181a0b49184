//! Monte Carlo estimators over sample arrays: moments, empirical Laplace
//! transforms, tail indices, survival decay rates, one-dimensional
//! Wasserstein distances, and the coupling decay experiments.
//!
//! All reductions are plain sums in index order, so results only depend on
//! the input order and never on threading.

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::io::{json_f64, serialize_extended_f64, Cell, CsvBuilder};
use crate::model::ModelSpec;
use crate::sim::{self, InitialLaw, MeetingTime, SimError, StateLaw};
use crate::spectral::{self, SpectralError};

/// Shift, in standard errors, above which a sample doubling counts as a jump.
pub const DOUBLING_THRESHOLD: f64 = 5.0;
/// Smallest half-sample on which the doubling comparison is attempted.
pub const DOUBLING_MIN_HALF: usize = 64;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("empty sample")]
    EmptySample,
    #[error("insufficient tail: {0}")]
    InsufficientTail(String),
    #[error("sample sizes differ: {a} vs {b}")]
    SizeMismatch { a: usize, b: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("p = {p} is not below the critical moment κ = {kappa}")]
    PGreaterThanKappa { p: f64, kappa: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

type Result<T> = std::result::Result<T, EstimateError>;

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateSummary {
    #[serde(serialize_with = "serialize_extended_f64")]
    pub value: f64,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub std_error: f64,
    pub n: usize,
    pub diverged: bool,
}

impl EstimateSummary {
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("plain struct")
    }
}

/// Sample mean and `std / √n` (two-pass, index order).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

/// Outcome of the sample-doubling check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoublingDiagnostic {
    /// `|mean(first half) - mean(whole)| / SE(whole)`, from the full sample
    /// downwards (`n`, `n/2`, ...).
    pub shifts: Vec<f64>,
    /// Two consecutive doublings both shifted by more than the threshold.
    pub diverged: bool,
}

/// Compares each prefix of size `2m` with its first half, for `2m = n, n/2`.
pub fn doubling_diagnostic(values: &[f64]) -> DoublingDiagnostic {
    let mut shifts = Vec::new();
    let mut whole = values.len();
    while shifts.len() < 2 && whole / 2 >= DOUBLING_MIN_HALF {
        let (m_whole, se_whole) = mean_and_se(&values[..whole]);
        let (m_half, _) = mean_and_se(&values[..whole / 2]);
        let shift = (m_whole - m_half).abs();
        shifts.push(if se_whole > 0.0 {
            shift / se_whole
        } else if shift == 0.0 {
            0.0
        } else {
            f64::INFINITY
        });
        whole /= 2;
    }
    let diverged = shifts.len() == 2 && shifts.iter().all(|&s| s > DOUBLING_THRESHOLD);
    DoublingDiagnostic { shifts, diverged }
}

/// Hill estimate of the tail index of nonnegative summands with the default
/// `k = ⌊√n⌋`; `None` when the tail is too thin to estimate (few positive
/// values, or all top values equal).
fn summand_tail_index(values: &[f64]) -> Option<f64> {
    let k = default_hill_k(values.len());
    match tail_index(values, k) {
        Ok(s) => Some(s.value),
        Err(_) => None,
    }
}

/// Mean of nonnegative summands with the divergence flag: either the
/// doubling rule fires, or the Hill index of the summands is below 1 (the
/// mean itself is infinite).
fn summarize(values: &[f64]) -> EstimateSummary {
    let (value, std_error) = mean_and_se(values);
    let doubling = doubling_diagnostic(values);
    let heavy = summand_tail_index(values).is_some_and(|k| k < 1.0);
    EstimateSummary { value, std_error, n: values.len(), diverged: doubling.diverged || heavy }
}

fn nonempty(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        Err(EstimateError::EmptySample)
    } else {
        Ok(())
    }
}

/// `E|Y|^p`.
pub fn estimate_moment(samples: &[f64], p: f64) -> Result<EstimateSummary> {
    nonempty(samples)?;
    if !(p > 0.0 && p.is_finite()) {
        return Err(EstimateError::InvalidArgument(format!("p must be > 0, got {p}")));
    }
    let values: Vec<f64> = samples.iter().map(|y| y.abs().powf(p)).collect();
    Ok(summarize(&values))
}

/// `E e^{vY}`.
pub fn estimate_laplace(samples: &[f64], v: f64) -> Result<EstimateSummary> {
    nonempty(samples)?;
    if !v.is_finite() {
        return Err(EstimateError::InvalidArgument(format!("v must be finite, got {v}")));
    }
    let values: Vec<f64> = samples.iter().map(|y| (v * y).exp()).collect();
    Ok(summarize(&values))
}

/// `E e^{δY²}`.
pub fn estimate_gaussian_moment(samples: &[f64], delta: f64) -> Result<EstimateSummary> {
    nonempty(samples)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(EstimateError::InvalidArgument(format!("delta must be > 0, got {delta}")));
    }
    let values: Vec<f64> = samples.iter().map(|y| (delta * y * y).exp()).collect();
    Ok(summarize(&values))
}

/// `⌊√n⌋`.
pub fn default_hill_k(n: usize) -> usize {
    (n as f64).sqrt().floor() as usize
}

/// Hill estimator on the `k` largest positive samples,
/// `κ̂ = (1/k Σ log(y_(n-i+1) / y_(n-k)))^{-1}`, with standard error `κ̂/√k`.
pub fn tail_index(samples: &[f64], k: usize) -> Result<EstimateSummary> {
    let n = samples.len();
    if k == 0 || 2 * k >= n {
        return Err(EstimateError::InsufficientTail(format!("need 0 < k < n/2, got k = {k}, n = {n}")));
    }
    let mut positive: Vec<f64> = samples.iter().copied().filter(|&y| y > 0.0 && y.is_finite()).collect();
    if positive.len() <= k {
        return Err(EstimateError::InsufficientTail(format!(
            "only {} positive samples for k = {k}",
            positive.len()
        )));
    }
    let split = positive.len() - k - 1;
    positive.select_nth_unstable_by(split, f64::total_cmp);
    let threshold = positive[split];
    let mut top = positive[split + 1..].to_vec();
    top.sort_unstable_by(f64::total_cmp);
    let mean_log = top.iter().map(|y| (y / threshold).ln()).sum::<f64>() / k as f64;
    if !(mean_log > 0.0) {
        return Err(EstimateError::InsufficientTail("top order statistics are all equal".into()));
    }
    let value = 1.0 / mean_log;
    Ok(EstimateSummary { value, std_error: value / (k as f64).sqrt(), n, diverged: false })
}

/// Empirical quantile (linear interpolation between order statistics) of an
/// ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Default survival-fit window: the 99th and 99.9th empirical percentiles.
pub fn default_survival_window(samples: &[f64]) -> Result<(f64, f64)> {
    nonempty(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok((quantile_sorted(&sorted, 0.99), quantile_sorted(&sorted, 0.999)))
}

/// Minimum number of distinct order statistics inside a survival window.
pub const SURVIVAL_MIN_POINTS: usize = 10;

/// Least-squares slope of `log P̂(Y > t)` against `t` over the order
/// statistics in `[t_lo, t_hi]`, negated. The standard error is the
/// regression one and ignores the correlation between survival points.
pub fn survival_decay_rate(samples: &[f64], t_lo: f64, t_hi: f64) -> Result<EstimateSummary> {
    nonempty(samples)?;
    if !(t_lo < t_hi) {
        return Err(EstimateError::InvalidArgument(format!("need t_lo < t_hi, got [{t_lo}, {t_hi}]")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..n - 1 {
        let t = sorted[i];
        // last member of a tie group, so the count above is exact
        if t < t_lo || t > t_hi || sorted[i + 1] == t {
            continue;
        }
        xs.push(t);
        ys.push(((n - 1 - i) as f64 / n as f64).ln());
    }
    if xs.len() < SURVIVAL_MIN_POINTS {
        return Err(EstimateError::InsufficientTail(format!(
            "{} distinct samples in [{t_lo}, {t_hi}], need {SURVIVAL_MIN_POINTS}",
            xs.len()
        )));
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok(EstimateSummary { value: -fit.slope, std_error: fit.slope_se, n: xs.len(), diverged: false })
}

/// [`survival_decay_rate`] on the default window.
pub fn survival_decay_rate_default(samples: &[f64]) -> Result<EstimateSummary> {
    let (lo, hi) = default_survival_window(samples)?;
    survival_decay_rate(samples, lo, hi)
}

/// `((1/n) Σ |a_(i) - b_(i)|^p)^{1/p}` for `p ≥ 1` (optimal coupling on the
/// line: match order statistics).
pub fn empirical_wasserstein(a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EstimateError::SizeMismatch { a: a.len(), b: b.len() });
    }
    nonempty(a)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(EstimateError::InvalidArgument(format!("p must be ≥ 1, got {p}")));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_unstable_by(f64::total_cmp);
    sb.sort_unstable_by(f64::total_cmp);
    let cost = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>() / a.len() as f64;
    Ok(cost.powf(1.0 / p))
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_se: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(EstimateError::SizeMismatch { a: xs.len(), b: ys.len() });
    }
    let n = xs.len();
    if n < 2 {
        return Err(EstimateError::InvalidArgument("a line fit needs at least two points".into()));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(EstimateError::InvalidArgument("all abscissae are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_se = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LinearFit { slope, intercept, r2, slope_se })
}

/// `Ŵ_p^p(t) = mean |Y_t - Ỹ_t|^p` over a coupled ensemble, with a
/// log-linear fit. The coupling cost bounds `W_p(L(Y_t), L(Ỹ_t))^p` from
/// above, and is also meaningful for `p < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayExperiment {
    pub p: f64,
    pub times: Vec<f64>,
    pub w_p: Vec<f64>,
    /// `None` when some `Ŵ_p^p` is exactly zero (identical copies).
    pub fit: Option<LinearFit>,
}

impl DecayExperiment {
    fn from_differences(p: f64, times: &[f64], diffs: &[Vec<f64>]) -> Result<Self> {
        nonempty_paths(diffs.len())?;
        let n = diffs.len() as f64;
        let w_p: Vec<f64> = (0..times.len())
            .map(|j| diffs.iter().map(|d| d[j].abs().powf(p)).sum::<f64>() / n)
            .collect();
        let fit = if w_p.iter().all(|&w| w > 0.0) && times.len() >= 2 {
            let logs: Vec<f64> = w_p.iter().map(|w| w.ln()).collect();
            Some(linear_fit(times, &logs)?)
        } else {
            None
        };
        Ok(DecayExperiment { p, times: times.to_vec(), w_p, fit })
    }

    /// Columns `t, w_p, log_w_p`.
    pub fn to_csv(&self) -> String {
        let mut csv = CsvBuilder::new(&["t", "w_p", "log_w_p"]);
        for (&t, &w) in self.times.iter().zip(&self.w_p) {
            csv.row(&[Cell::F(t), Cell::F(w), Cell::F(w.ln())]);
        }
        csv.finish()
    }

    /// `{slope, intercept, r2}`, with nulls when there is no fit.
    pub fn fit_json(&self) -> Value {
        match self.fit {
            Some(f) => json!({
                "slope": json_f64(f.slope),
                "intercept": json_f64(f.intercept),
                "r2": json_f64(f.r2),
            }),
            None => json!({ "slope": null, "intercept": null, "r2": null }),
        }
    }
}

fn nonempty_paths(n: usize) -> Result<()> {
    if n == 0 {
        Err(EstimateError::InvalidArgument("n_paths must be ≥ 1".into()))
    } else {
        Ok(())
    }
}

fn check_p_below_kappa(model: &ModelSpec, p: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(EstimateError::InvalidArgument(format!("p must be > 0, got {p}")));
    }
    let kappa = spectral::kappa(model)?;
    if p >= kappa {
        return Err(EstimateError::PGreaterThanKappa { p, kappa });
    }
    Ok(())
}

/// Synchronous-coupling decay experiment: both copies share `X` (drawn from
/// `x_law`) and the Brownian motion, and start from the comonotone coupling
/// of `law_a` and `law_b`.
#[allow(clippy::too_many_arguments)]
pub fn wasserstein_decay_experiment(
    model: &ModelSpec,
    x_law: &StateLaw,
    law_a: InitialLaw,
    law_b: InitialLaw,
    p: f64,
    horizon: f64,
    output_times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<DecayExperiment> {
    check_p_below_kappa(model, p)?;
    nonempty_paths(n_paths)?;
    let diffs = sim::synchronous_differences(model, x_law, law_a, law_b, horizon, output_times, n_paths, seed)?;
    DecayExperiment::from_differences(p, output_times, &diffs)
}

/// Exponential fit of the meeting-time survival function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeetingFit {
    /// `γ̂`, the negated slope of `log P̂(T > t)`.
    pub gamma: f64,
    pub intercept: f64,
    pub r2: f64,
    pub gamma_se: f64,
    pub n: usize,
    /// Paths that did not meet before the horizon.
    pub censored: usize,
}

/// Quantile of the observed meeting times up to which the survival curve
/// is fitted; the far tail has too few points to be informative.
pub const MEETING_FIT_QUANTILE: f64 = 0.99;

/// Fits `log P̂(T > t) ≈ intercept - γ t` on the observed meeting times up
/// to [`MEETING_FIT_QUANTILE`]. Censored paths count as surviving past
/// every observed time.
pub fn meeting_time_fit(meetings: &[MeetingTime]) -> Result<MeetingFit> {
    if meetings.is_empty() {
        return Err(EstimateError::EmptySample);
    }
    let n = meetings.len();
    let mut observed: Vec<f64> = meetings.iter().filter_map(|m| m.time()).filter(|&t| t > 0.0).collect();
    let censored = meetings.iter().filter(|m| m.time().is_none()).count();
    observed.sort_unstable_by(f64::total_cmp);
    let at_zero = meetings.iter().filter(|m| m.time() == Some(0.0)).count();
    let cut = ((observed.len() as f64) * MEETING_FIT_QUANTILE).floor() as usize;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..cut.min(observed.len().saturating_sub(1)) {
        if observed[i + 1] == observed[i] {
            continue;
        }
        let above = n - at_zero - (i + 1);
        xs.push(observed[i]);
        ys.push((above as f64 / n as f64).ln());
    }
    if xs.len() < SURVIVAL_MIN_POINTS {
        return Err(EstimateError::InsufficientTail(format!("only {} distinct meeting times", xs.len())));
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok(MeetingFit { gamma: -fit.slope, intercept: fit.intercept, r2: fit.r2, gamma_se: fit.slope_se, n, censored })
}

/// Merge-coupling experiment: decay of the coupling cost plus the
/// meeting-time fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeExperiment {
    pub decay: DecayExperiment,
    pub meetings: Vec<MeetingTime>,
    pub meeting_fit: MeetingFit,
}

#[allow(clippy::too_many_arguments)]
pub fn merge_decay_experiment(
    model: &ModelSpec,
    x0: usize,
    x0_tilde: usize,
    y0: f64,
    y0_tilde: f64,
    p: f64,
    horizon: f64,
    output_times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<MergeExperiment> {
    check_p_below_kappa(model, p)?;
    nonempty_paths(n_paths)?;
    let outcomes = sim::merge_ensemble(model, x0, x0_tilde, y0, y0_tilde, horizon, output_times, n_paths, seed)?;
    let diffs: Vec<Vec<f64>> = outcomes.iter().map(|o| o.differences.clone()).collect();
    let meetings: Vec<MeetingTime> = outcomes.iter().map(|o| o.meeting).collect();
    let decay = DecayExperiment::from_differences(p, output_times, &diffs)?;
    let meeting_fit = meeting_time_fit(&meetings)?;
    Ok(MergeExperiment { decay, meetings, meeting_fit })
}

/// `γη/((1 - p/θ)γ + η)`, the composite rate of the general-coupling bound
/// as usually quoted.
pub fn composite_rate(gamma: f64, eta: f64, p: f64, theta: f64) -> f64 {
    gamma * eta / ((1.0 - p / theta) * gamma + eta)
}

/// `γη/(γ + sη)` with `s = θ/(θ - p)` the Hölder conjugate of `θ/p`: the
/// rate obtained by balancing `e^{-γαt/s}` against `e^{-η(1-α)t}`.
pub fn composite_rate_conjugate(gamma: f64, eta: f64, p: f64, theta: f64) -> f64 {
    let s = theta / (theta - p);
    gamma * eta / (gamma + s * eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use crate::rng::PathRng;
    use proptest::prelude::*;

    #[test]
    fn trivial_cases() {
        let zeros = vec![0.0; 100];
        let m = estimate_moment(&zeros, 1.3).unwrap();
        assert_eq!((m.value, m.std_error, m.n, m.diverged), (0.0, 0.0, 100, false));
        let l = estimate_laplace(&[0.3, -1.0, 2.0], 0.0).unwrap();
        assert_eq!((l.value, l.std_error), (1.0, 0.0));
        let g = estimate_gaussian_moment(&[0.3, -1.0, 2.0], 1e-8).unwrap();
        assert!((g.value - 1.0).abs() < 1e-7);
        assert!(matches!(estimate_moment(&[], 1.0), Err(EstimateError::EmptySample)));
        assert!(matches!(estimate_laplace(&[], 1.0), Err(EstimateError::EmptySample)));
        assert!(matches!(estimate_gaussian_moment(&[], 1.0), Err(EstimateError::EmptySample)));
    }

    #[test]
    fn gaussian_second_moment() {
        let mut rng = PathRng::new(17, 0);
        let ys: Vec<f64> = (0..1_000_000).map(|_| rng.normal() * 0.5f64.sqrt()).collect();
        let m = estimate_moment(&ys, 2.0).unwrap();
        assert!((m.value - 0.5).abs() < 3.0 * m.std_error, "{m:?}");
        assert!(!m.diverged);
    }

    #[test]
    fn hill_on_pareto_and_degenerate_input() {
        let mut rng = PathRng::new(23, 0);
        // Pareto(α = 2) by inverse CDF
        let ys: Vec<f64> = (0..1_000_000).map(|_| (1.0 - rng.uniform()).powf(-0.5)).collect();
        let h = tail_index(&ys, 1000).unwrap();
        assert!((h.value / 2.0 - 1.0).abs() < 0.1, "{h:?}");
        assert!(matches!(tail_index(&vec![3.0; 100], 10), Err(EstimateError::InsufficientTail(_))));
        assert!(matches!(tail_index(&[1.0, 2.0, 3.0], 2), Err(EstimateError::InsufficientTail(_))));
        assert!(matches!(tail_index(&vec![-1.0; 100], 5), Err(EstimateError::InsufficientTail(_))));
    }

    #[test]
    fn exponential_survival_rate() {
        let mut rng = PathRng::new(29, 0);
        let ys: Vec<f64> = (0..1_000_000).map(|_| rng.exponential(3.0)).collect();
        let r = survival_decay_rate_default(&ys).unwrap();
        assert!((r.value / 3.0 - 1.0).abs() < 0.05, "{r:?}");
        assert!(survival_decay_rate(&ys, 2.0, 1.0).is_err());
        assert!(matches!(survival_decay_rate(&ys, 100.0, 200.0), Err(EstimateError::InsufficientTail(_))));
    }

    #[test]
    fn wasserstein_by_hand() {
        assert_eq!(empirical_wasserstein(&[0.0], &[1.0], 1.0).unwrap(), 1.0);
        assert_eq!(empirical_wasserstein(&[2.0, 0.0], &[1.0, 3.0], 2.0).unwrap(), 1.0);
        assert_eq!(empirical_wasserstein(&[4.0, 1.0, 2.0], &[1.0, 2.0, 4.0], 1.5).unwrap(), 0.0);
        assert!(matches!(empirical_wasserstein(&[0.0], &[1.0, 2.0], 1.0), Err(EstimateError::SizeMismatch { .. })));
        assert!(empirical_wasserstein(&[0.0], &[1.0], 0.5).is_err());
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14 && f.slope_se < 1e-14);
    }

    #[test]
    fn doubling_diagnostic_on_stable_sample() {
        let mut rng = PathRng::new(31, 0);
        let ys: Vec<f64> = (0..100_000).map(|_| rng.normal()).collect();
        let d = doubling_diagnostic(&ys);
        assert_eq!(d.shifts.len(), 2);
        assert!(!d.diverged);
        // a drifting sample moves at every doubling
        let drift: Vec<f64> = (0..100_000).map(f64::from).collect();
        assert!(doubling_diagnostic(&drift).diverged);
    }

    #[test]
    fn decay_experiment_trivial_and_contracting() {
        let a = builtin::model_a();
        let times = [0.0, 5.0, 10.0];
        let e = wasserstein_decay_experiment(
            &a,
            &StateLaw::Fixed(0),
            InitialLaw::Gaussian { mean: 0.0, std_dev: 1.0 },
            InitialLaw::Gaussian { mean: 0.0, std_dev: 1.0 },
            0.25,
            10.0,
            &times,
            100,
            1,
        )
        .unwrap();
        assert!(e.w_p.iter().all(|&w| w == 0.0));
        assert!(e.fit.is_none());
        assert_eq!(e.fit_json()["slope"], Value::Null);

        let c = builtin::constant_ou();
        let times: Vec<f64> = (0..=10).map(f64::from).collect();
        let e = wasserstein_decay_experiment(
            &c,
            &StateLaw::Fixed(0),
            InitialLaw::Point(0.0),
            InitialLaw::Point(1.0),
            1.0,
            10.0,
            &times,
            50,
            1,
        )
        .unwrap();
        assert!((e.fit.unwrap().slope + 1.0).abs() < 1e-9);
        assert!(e.to_csv().starts_with("t,w_p,log_w_p\n"));

        assert!(matches!(
            wasserstein_decay_experiment(&a, &StateLaw::Fixed(0), InitialLaw::Point(0.0), InitialLaw::Point(1.0), 0.6, 1.0, &[1.0], 10, 1),
            Err(EstimateError::PGreaterThanKappa { .. })
        ));
    }

    #[test]
    fn composite_rates() {
        let (g, e) = (2.0, 0.05);
        assert!(composite_rate(g, e, 0.25, 0.4) > composite_rate_conjugate(g, e, 0.25, 0.4));
        assert!(composite_rate_conjugate(g, e, 0.25, 0.4) < e);
        // p → 0: both reduce to γη/(γ + η)
        assert!((composite_rate(g, e, 0.0, 0.4) - g * e / (g + e)).abs() < 1e-15);
        assert!((composite_rate_conjugate(g, e, 0.0, 0.4) - g * e / (g + e)).abs() < 1e-15);
    }

    #[test]
    fn meeting_fit_on_exponential_times() {
        let mut rng = PathRng::new(37, 0);
        let mut ms: Vec<MeetingTime> = (0..20_000).map(|_| MeetingTime::At(rng.exponential(2.0))).collect();
        ms.push(MeetingTime::Censored { horizon: 10.0 });
        let f = meeting_time_fit(&ms).unwrap();
        assert!((f.gamma / 2.0 - 1.0).abs() < 0.05, "{f:?}");
        assert!(f.r2 > 0.99 && f.censored == 1);
    }

    fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-100.0f64..100.0, 1..40)
    }

    proptest! {
        #[test]
        fn wasserstein_symmetry_and_triangle(
            (a, b, c) in (1usize..30).prop_flat_map(|n| (
                proptest::collection::vec(-50.0f64..50.0, n),
                proptest::collection::vec(-50.0f64..50.0, n),
                proptest::collection::vec(-50.0f64..50.0, n),
            )),
            p in 1.0f64..4.0,
        ) {
            let ab = empirical_wasserstein(&a, &b, p).unwrap();
            prop_assert_eq!(ab, empirical_wasserstein(&b, &a, p).unwrap());
            let ac = empirical_wasserstein(&a, &c, p).unwrap();
            let cb = empirical_wasserstein(&c, &b, p).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }

        #[test]
        fn laplace_dominates_jensen(ys in vec_strategy(), v in -0.5f64..0.5) {
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            let l = estimate_laplace(&ys, v).unwrap().value;
            let bound = (v * mean).exp();
            prop_assert!(l >= bound - 1e-12 * bound);
        }

        #[test]
        fn hill_is_scale_invariant(
            ys in proptest::collection::vec(0.01f64..1e3, 50..200),
            c in 1e-3f64..1e3,
        ) {
            let k = ys.len() / 4;
            let scaled: Vec<f64> = ys.iter().map(|y| c * y).collect();
            if let (Ok(a), Ok(b)) = (tail_index(&ys, k), tail_index(&scaled, k)) {
                prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value.max(1.0));
            }
        }

        #[test]
        fn second_moment_identity(half in proptest::collection::vec(-10.0f64..10.0, 1..40)) {
            let ys: Vec<f64> = half.iter().flat_map(|&y| [y, -y]).collect();
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
            let m2 = estimate_moment(&ys, 2.0).unwrap().value;
            prop_assert!((m2 - (var + mean * mean)).abs() <= 1e-12 * m2.max(1.0));
        }
    }
}

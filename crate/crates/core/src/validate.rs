//! Built-in validation suite: every acceptance check, run on the embedded
//! models with a fixed seed.
//!
//! Each check produces a [`CriterionReport`] with one [`CheckItem`] per
//! compared quantity. `quick` divides Monte Carlo sample sizes by 10 and
//! widens Monte Carlo tolerances by 3 (≈ √10, rounded up); deterministic
//! checks keep their tolerances.

use std::cell::OnceCell;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimate::{self, EstimateError};
use crate::io::serialize_extended_f64;
use crate::model::{build_model, builtin, chain_quantities, ergodicity_margin, ModelError, ModelSpec};
use crate::rng::PathRng;
use crate::sim::{self, InitialLaw, SimError, StateLaw};
use crate::spectral::{self, SpectralError};

pub const DEFAULT_SEED: u64 = 2024;
pub const QUICK_SAMPLE_DIVISOR: usize = 10;
pub const QUICK_TOLERANCE_FACTOR: f64 = 3.0;

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("unknown check {0:?}; known checks: {1}")]
    UnknownCheck(String, String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

type Result<T> = std::result::Result<T, ValidateError>;

/// One compared quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub label: String,
    /// `abs`: |observed − target| ≤ tolerance; `rel`: |observed/target − 1| ≤
    /// tolerance; `le`: observed ≤ target + tolerance; `ge`: observed ≥
    /// target − tolerance; `flag`: observed = target (1 true, 0 false).
    pub kind: &'static str,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub observed: f64,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub target: f64,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckItem {
    fn abs(label: impl Into<String>, observed: f64, target: f64, tolerance: f64) -> Self {
        let pass = (observed - target).abs() <= tolerance;
        CheckItem { label: label.into(), kind: "abs", observed, target, tolerance, pass }
    }

    fn rel(label: impl Into<String>, observed: f64, target: f64, tolerance: f64) -> Self {
        let pass = (observed / target - 1.0).abs() <= tolerance;
        CheckItem { label: label.into(), kind: "rel", observed, target, tolerance, pass }
    }

    fn le(label: impl Into<String>, observed: f64, target: f64, tolerance: f64) -> Self {
        let pass = observed <= target + tolerance;
        CheckItem { label: label.into(), kind: "le", observed, target, tolerance, pass }
    }

    fn ge(label: impl Into<String>, observed: f64, target: f64, tolerance: f64) -> Self {
        let pass = observed >= target - tolerance;
        CheckItem { label: label.into(), kind: "ge", observed, target, tolerance, pass }
    }

    fn flag(label: impl Into<String>, observed: bool, target: bool) -> Self {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        CheckItem { label: label.into(), kind: "flag", observed: b(observed), target: b(target), tolerance: 0.0, pass: observed == target }
    }
}

/// Static description of a check.
#[derive(Debug, Clone, Copy)]
pub struct CheckSpec {
    pub id: &'static str,
    pub name: &'static str,
    pub title: &'static str,
    /// Uses random numbers (covered by the reproducibility check).
    pub stochastic: bool,
    /// Reported next to an acceptance criterion; not one itself.
    pub supplementary: bool,
}

const fn check(id: &'static str, name: &'static str, title: &'static str, stochastic: bool, supplementary: bool) -> CheckSpec {
    CheckSpec { id, name, title, stochastic, supplementary }
}

pub const CHECKS: &[CheckSpec] = &[
    check("1", "kappa-oracle", "critical moment of Model A", false, false),
    check("2", "m-matrix-radius", "ρ(M_κ) = 1 on random ergodic models", true, false),
    check("3", "eta-properties", "η_p: value at 0, slope, concavity, bounds", false, false),
    check("4", "feynman-kac", "Feynman-Kac matrix vs Monte Carlo", true, false),
    check("5", "two-state-laplace", "two-state Laplace transform (quoted form)", true, false),
    check("5s", "two-state-laplace-corrected", "two-state Laplace transform (corrected form)", true, true),
    check("6", "critical-laplace", "critical Laplace abscissa v_c", false, false),
    check("7", "ix-laplace", "Laplace transform of I_x", true, false),
    check("8", "gaussian-sandwich", "Gaussian-regime Laplace sandwich", true, false),
    check("9", "gaussian-square-moment", "critical square-exponential moment", true, false),
    check("10", "moment-dichotomy", "moment finiteness below/above κ", true, false),
    check("11", "tail-index", "Hill estimate of κ", true, false),
    check("12", "synchronous-rate", "synchronous-coupling decay rate", true, false),
    check("13", "merge-coupling", "merge coupling with the quoted composite rate", true, false),
    check("13s", "merge-coupling-conjugate-rate", "merge coupling with the Hölder-conjugate rate", true, true),
    check("14", "reproducibility", "same seed, same bytes", false, false),
];

/// Result of one check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: &'static str,
    pub name: &'static str,
    pub title: &'static str,
    pub supplementary: bool,
    pub pass: bool,
    pub items: Vec<CheckItem>,
    /// SHA-256 of the check's serialized outputs.
    pub artifact_sha256: String,
    pub seconds: f64,
    #[serde(skip)]
    pub artifact: String,
}

impl CriterionReport {
    /// `PASS  5  two-state-laplace  ...` summary line.
    pub fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let worst = self.items.iter().find(|i| !i.pass).or(self.items.first());
        let detail = worst
            .map(|i| format!("{}: observed {:.6e}, target {:.6e} ({} {:.1e})", i.label, i.observed + 0.0, i.target + 0.0, i.kind, i.tolerance))
            .unwrap_or_default();
        let tag = if self.supplementary { " (supplementary)" } else { "" };
        format!("{status} [{:>3}] {}{tag}: {} | {detail}", self.id, self.name, self.title)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub quick: bool,
    pub all_pass: bool,
    pub checks: Vec<CriterionReport>,
}

impl ValidationReport {
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("plain struct")
    }

    pub fn get(&self, id: &str) -> Option<&CriterionReport> {
        self.checks.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    pub seed: u64,
    pub quick: bool,
    /// Check ids or names; empty runs everything.
    pub filter: Vec<String>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions { seed: DEFAULT_SEED, quick: false, filter: Vec::new() }
    }
}

/// Resolves a filter to check specs, in suite order.
pub fn select_checks(filter: &[String]) -> Result<Vec<&'static CheckSpec>> {
    if filter.is_empty() {
        return Ok(CHECKS.iter().collect());
    }
    for f in filter {
        if !CHECKS.iter().any(|c| c.id == f || c.name == f) {
            let known = CHECKS.iter().map(|c| c.name).collect::<Vec<_>>().join(", ");
            return Err(ValidateError::UnknownCheck(f.clone(), known));
        }
    }
    Ok(CHECKS.iter().filter(|c| filter.iter().any(|f| c.id == f || c.name == f)).collect())
}

/// Runs the selected checks, calling `progress` after each one.
pub fn run_validation(opts: &ValidateOptions, mut progress: impl FnMut(&CriterionReport)) -> Result<ValidationReport> {
    let selected = select_checks(&opts.filter)?;
    let ctx = Ctx::new(opts.seed, opts.quick);
    let mut checks = Vec::new();
    for c in &selected {
        let report = if c.id == "14" {
            let started = Instant::now();
            let items = reproducibility_items(&ctx, &checks)?;
            finish(c, items, String::new(), started)
        } else {
            run_check(&ctx, c)?
        };
        progress(&report);
        checks.push(report);
    }
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(ValidationReport { seed: opts.seed, quick: opts.quick, all_pass, checks })
}

struct Ctx {
    seed: u64,
    quick: bool,
    model_a_stationary: OnceCell<Vec<f64>>,
    model_b_stationary: OnceCell<Vec<f64>>,
    merge: OnceCell<estimate::MergeExperiment>,
}

impl Ctx {
    fn new(seed: u64, quick: bool) -> Self {
        Ctx { seed, quick, model_a_stationary: OnceCell::new(), model_b_stationary: OnceCell::new(), merge: OnceCell::new() }
    }

    fn n(&self, full: usize) -> usize {
        if self.quick {
            full / QUICK_SAMPLE_DIVISOR
        } else {
            full
        }
    }

    /// Monte Carlo tolerance.
    fn tol(&self, t: f64) -> f64 {
        if self.quick {
            t * QUICK_TOLERANCE_FACTOR
        } else {
            t
        }
    }

    fn model_a_stationary(&self) -> Result<&Vec<f64>> {
        if let Some(v) = self.model_a_stationary.get() {
            return Ok(v);
        }
        let ys = sim::stationary_samples(&builtin::model_a(), None, self.n(1_000_000), self.seed)?;
        Ok(self.model_a_stationary.get_or_init(|| ys))
    }

    fn model_b_stationary(&self) -> Result<&Vec<f64>> {
        if let Some(v) = self.model_b_stationary.get() {
            return Ok(v);
        }
        let ys = sim::stationary_samples(&builtin::model_b(), Some(40.0), self.n(1_000_000), self.seed)?;
        Ok(self.model_b_stationary.get_or_init(|| ys))
    }

    fn merge(&self) -> Result<&estimate::MergeExperiment> {
        if let Some(m) = self.merge.get() {
            return Ok(m);
        }
        let times: Vec<f64> = (0..=40).map(f64::from).collect();
        let m = estimate::merge_decay_experiment(&builtin::model_a(), 0, 1, 0.0, 1.0, 0.25, 40.0, &times, self.n(100_000), self.seed)?;
        Ok(self.merge.get_or_init(|| m))
    }
}

fn finish(c: &CheckSpec, items: Vec<CheckItem>, extra_artifact: String, started: Instant) -> CriterionReport {
    let mut artifact = serde_json::to_string(&items).expect("plain struct");
    artifact.push_str(&extra_artifact);
    let digest = Sha256::digest(artifact.as_bytes());
    let artifact_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
    CriterionReport {
        id: c.id,
        name: c.name,
        title: c.title,
        supplementary: c.supplementary,
        pass: !items.is_empty() && items.iter().all(|i| i.pass),
        items,
        artifact_sha256,
        seconds: started.elapsed().as_secs_f64(),
        artifact,
    }
}

fn run_check(ctx: &Ctx, c: &CheckSpec) -> Result<CriterionReport> {
    let started = Instant::now();
    let (items, extra) = match c.id {
        "1" => (kappa_oracle()?, String::new()),
        "2" => (m_matrix_radius(ctx)?, String::new()),
        "3" => (eta_properties()?, String::new()),
        "4" => (feynman_kac(ctx)?, String::new()),
        "5" => (two_state(ctx, spectral::two_state_laplace)?, String::new()),
        "5s" => (two_state(ctx, spectral::two_state_laplace_corrected)?, String::new()),
        "6" => (critical_laplace()?, String::new()),
        "7" => (ix_laplace(ctx)?, String::new()),
        "8" => (gaussian_sandwich(ctx)?, String::new()),
        "9" => (gaussian_square_moment(ctx)?, String::new()),
        "10" => (moment_dichotomy(ctx)?, String::new()),
        "11" => (tail_index(ctx)?, String::new()),
        "12" => synchronous_rate(ctx)?,
        "13" => merge_coupling(ctx, estimate::composite_rate)?,
        "13s" => merge_coupling(ctx, estimate::composite_rate_conjugate)?,
        other => unreachable!("check {other} has no runner"),
    };
    Ok(finish(c, items, extra, started))
}

fn kappa_oracle() -> Result<Vec<CheckItem>> {
    let kappa = spectral::kappa(&builtin::model_a())?;
    // positive root of (1 - p)(1 + 2p) = 1
    Ok(vec![CheckItem::abs("κ(Model A)", kappa, 0.5, 1e-8)])
}

/// Random ergodic model with `λ_min < 0`, drawn from stream `index`.
pub fn random_polynomial_model(seed: u64, index: u64) -> ModelSpec {
    let mut rng = PathRng::new(seed, index);
    loop {
        let d = 2 + (rng.uniform() * 5.0) as usize;
        let mut generator = vec![vec![0.0; d]; d];
        for (x, row) in generator.iter_mut().enumerate() {
            for (y, entry) in row.iter_mut().enumerate() {
                if x != y && rng.uniform() < 0.75 {
                    *entry = 0.1 + 2.9 * rng.uniform();
                }
            }
            row[x] = -row.iter().sum::<f64>();
        }
        let lambda: Vec<f64> = (0..d).map(|_| -2.0 + 5.0 * rng.uniform()).collect();
        let sigma: Vec<f64> = (0..d).map(|_| 0.5 + 1.5 * rng.uniform()).collect();
        let Ok(model) = build_model(d, generator, lambda, sigma) else { continue };
        if model.lambda_min() < 0.0 && ergodicity_margin(&model).is_ok_and(|m| m > 0.0) {
            return model;
        }
    }
}

fn m_matrix_radius(ctx: &Ctx) -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    for i in 0..50 {
        let model = random_polynomial_model(ctx.seed, 1_000 + i);
        let kappa = spectral::kappa(&model)?;
        let rho = spectral::spectral_radius(&spectral::m_matrix(&model, kappa)?)?;
        items.push(CheckItem::abs(format!("model {i} (d = {}): ρ(M_κ̂)", model.d()), rho, 1.0, 1e-6));
    }
    Ok(items)
}

fn eta_properties() -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    for (name, model) in [
        ("A", builtin::model_a()),
        ("B", builtin::model_b()),
        ("C3", builtin::model_c3()),
        ("gaussian", builtin::gaussian_pair()),
    ] {
        let grid = spectral::default_eta_grid(&model)?;
        let curve = spectral::eta_curve(&model, &grid)?;
        items.push(CheckItem::abs(format!("{name}: η_0"), curve.values[0], 0.0, 1e-10));
        let h = 1e-7;
        let slope = (spectral::eta(&model, h)? - spectral::eta(&model, 0.0)?) / h;
        items.push(CheckItem::abs(format!("{name}: (η_h − η_0)/h"), slope, ergodicity_margin(&model)?, 1e-6));
        items.push(CheckItem::le(format!("{name}: max second difference"), curve.max_second_difference(), 0.0, 1e-8));
        let chain = chain_quantities(&model)?;
        let (mut upper_gap, mut lower_gap) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (&p, &eta) in grid.iter().zip(&curve.values) {
            let upper = (0..model.d()).map(|x| chain.jump_rates[x] + p * model.lambda()[x]).fold(f64::INFINITY, f64::min);
            upper_gap = upper_gap.max(eta - upper);
            lower_gap = lower_gap.max(p * model.lambda_min() - eta);
        }
        items.push(CheckItem::le(format!("{name}: max(η_p − min_x(a + pλ))"), upper_gap, 0.0, 1e-12));
        items.push(CheckItem::le(format!("{name}: max(pλ_min − η_p)"), lower_gap, 0.0, 1e-12));
    }
    Ok(items)
}

fn feynman_kac(ctx: &Ctx) -> Result<Vec<CheckItem>> {
    let model = builtin::model_a();
    let p = 0.25;
    let times = [1.0, 2.0, 4.0, 8.0];
    let obs = sim::observe_ensemble(&model, &StateLaw::Fixed(0), InitialLaw::Point(0.0), 8.0, &times, ctx.n(100_000), ctx.seed)?;
    let mut items = Vec::new();
    let matrix_value = |t: f64| -> Result<f64> { Ok(spectral::feynman_kac_matrix(&model, p, t)?.row(0).sum()) };
    for (j, &t) in times.iter().enumerate() {
        let vals: Vec<f64> = obs.iter().map(|o| (-p * o[j].int_lambda).exp()).collect();
        let (mean, se) = estimate::mean_and_se(&vals);
        items.push(CheckItem::abs(format!("t = {t}: MC vs (e^{{tA_p}} 1)(1)"), mean, matrix_value(t)?, 3.0 * se));
    }
    let ts: Vec<f64> = (0..=8).map(|i| 4.0 + 0.5 * f64::from(i)).collect();
    let logs = ts.iter().map(|&t| matrix_value(t).map(f64::ln)).collect::<Result<Vec<_>>>()?;
    let fit = estimate::linear_fit(&ts, &logs)?;
    items.push(CheckItem::rel("slope of log matrix value on [4, 8]", fit.slope, -spectral::eta(&model, p)?, 0.01));
    Ok(items)
}

fn two_state(ctx: &Ctx, closed_form: fn(&ModelSpec, f64) -> std::result::Result<f64, SpectralError>) -> Result<Vec<CheckItem>> {
    let model = builtin::model_b();
    let ys = ctx.model_b_stationary()?;
    let mut items = Vec::new();
    for v in [0.5, 1.0] {
        let est = estimate::estimate_laplace(ys, v)?;
        items.push(CheckItem::rel(format!("v = {v}: empirical Laplace"), est.value, closed_form(&model, v)?, ctx.tol(0.03)));
    }
    Ok(items)
}

fn critical_laplace() -> Result<Vec<CheckItem>> {
    Ok(vec![
        CheckItem::abs("v_c(Model B)", spectral::critical_laplace(&builtin::model_b())?.v_c, 2f64.sqrt(), 1e-8),
        CheckItem::abs("v_c(Model C3)", spectral::critical_laplace(&builtin::model_c3())?.v_c, 1.0, 1e-8),
    ])
}

fn ix_laplace(ctx: &Ctx) -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    for (name, model, x0, v) in [("B", builtin::model_b(), 1, 1.0), ("C3", builtin::model_c3(), 1, 0.5)] {
        let structure = spectral::exponential_structure(&model)?;
        let embedded = chain_quantities(&model)?.embedded;
        let closed = spectral::laplace_of_ix(&structure, &embedded, v, x0)?;
        let draws = sim::sample_ix(&model, x0, ctx.n(1_000_000), ctx.seed)?;
        let est = estimate::estimate_laplace(&draws, v)?;
        items.push(CheckItem::rel(format!("{name}, x = {x0}, v = {v}: E e^{{vI_x}}"), est.value, closed, ctx.tol(0.02)));
    }
    Ok(items)
}

fn gaussian_sandwich(ctx: &Ctx) -> Result<Vec<CheckItem>> {
    let model = builtin::gaussian_pair();
    let ys = sim::stationary_samples(&model, None, ctx.n(1_000_000), ctx.seed)?;
    let mut items = Vec::new();
    for v in [0.5, 1.0] {
        let est = estimate::estimate_laplace(&ys, v)?;
        let (lower, upper) = spectral::gaussian_bounds(&model, v)?;
        let band = 3.0 * est.std_error;
        items.push(CheckItem::ge(format!("v = {v}: above lower bound"), est.value, lower, band));
        items.push(CheckItem::le(format!("v = {v}: below upper bound"), est.value, upper, band));
    }
    Ok(items)
}

fn gaussian_square_moment(ctx: &Ctx) -> Result<Vec<CheckItem>> {
    let ys = sim::stationary_samples(&builtin::constant_ou(), None, ctx.n(1_000_000), ctx.seed)?;
    let finite = estimate::estimate_gaussian_moment(&ys, 0.5)?;
    let heavy = estimate::estimate_gaussian_moment(&ys, 1.2)?;
    Ok(vec![
        CheckItem::abs("δ = 0.5: E e^{δY²}", finite.value, 1.0 / 0.5f64.sqrt(), 3.0 * finite.std_error),
        CheckItem::flag("δ = 0.5: diverged", finite.diverged, false),
        CheckItem::flag("δ = 1.2: diverged", heavy.diverged, true),
    ])
}

fn moment_dichotomy(ctx: &Ctx) -> Result<Vec<CheckItem>> {
    let ys = ctx.model_a_stationary()?;
    let low = estimate::estimate_moment(ys, 0.4)?;
    let low_values: Vec<f64> = ys.iter().map(|y| y.abs().powf(0.4)).collect();
    let doubling = estimate::doubling_diagnostic(&low_values);
    let high = estimate::estimate_moment(ys, 0.6)?;
    let mut items = vec![CheckItem::flag("p = 0.4: diverged", low.diverged, false)];
    for (i, s) in doubling.shifts.iter().enumerate() {
        items.push(CheckItem::le(format!("p = 0.4: doubling shift {i} (in SE)"), *s, estimate::DOUBLING_THRESHOLD, 0.0));
    }
    items.push(CheckItem::flag("p = 0.6: diverged", high.diverged, true));
    Ok(items)
}

fn tail_index(ctx: &Ctx) -> Result<Vec<CheckItem>> {
    let ys = ctx.model_a_stationary()?;
    let hill = estimate::tail_index(ys, 1_000)?;
    Ok(vec![CheckItem::rel("Hill κ̂ (k = 1000)", hill.value, spectral::kappa(&builtin::model_a())?, ctx.tol(0.15))])
}

fn synchronous_rate(ctx: &Ctx) -> Result<(Vec<CheckItem>, String)> {
    let times: Vec<f64> = (0..=20).map(f64::from).collect();
    let model = builtin::model_a();
    let e = estimate::wasserstein_decay_experiment(
        &model,
        &StateLaw::Stationary,
        InitialLaw::Point(0.0),
        InitialLaw::Point(1.0),
        0.25,
        20.0,
        &times,
        ctx.n(100_000),
        ctx.seed,
    )?;
    let c = builtin::constant_ou();
    let control = estimate::wasserstein_decay_experiment(
        &c,
        &StateLaw::Stationary,
        InitialLaw::Point(0.0),
        InitialLaw::Point(1.0),
        1.0,
        20.0,
        &times,
        ctx.n(100_000),
        ctx.seed,
    )?;
    let slope = |e: &estimate::DecayExperiment| e.fit.map_or(f64::NAN, |f| f.slope);
    let items = vec![
        CheckItem::rel("Model A, p = 0.25: slope of log Ŵ_p^p", slope(&e), -spectral::eta(&model, 0.25)?, ctx.tol(0.10)),
        CheckItem::rel("constant λ = 1, p = 1: slope", slope(&control), -1.0, ctx.tol(0.05)),
    ];
    Ok((items, e.to_csv() + &control.to_csv()))
}

fn merge_coupling(ctx: &Ctx, rate: fn(f64, f64, f64, f64) -> f64) -> Result<(Vec<CheckItem>, String)> {
    let model = builtin::model_a();
    let (p, theta) = (0.25, 0.4);
    let m = ctx.merge()?;
    let mut items = vec![CheckItem::ge("meeting-time survival fit r²", m.meeting_fit.r2, 0.98, 0.0)];

    let mut mismatched = 0usize;
    for i in 0..200 {
        let paths = sim::couple_merge(&model, 0, 1, 0.0, 1.0, 40.0, &[], ctx.seed.wrapping_add(i))?;
        let Some(t) = paths.meeting.time() else { continue };
        let after = |p: &sim::PathSample| -> Vec<(f64, usize)> {
            p.jump_times.iter().zip(&p.states[1..]).filter(|(s, _)| **s > t).map(|(s, x)| (*s, *x)).collect()
        };
        let state_at = |p: &sim::PathSample| p.states[p.jump_times.iter().take_while(|s| **s <= t).count()];
        if after(&paths.first) != after(&paths.second) || state_at(&paths.first) != state_at(&paths.second) {
            mismatched += 1;
        }
    }
    items.push(CheckItem::abs("paths with differing X after meeting (of 200)", mismatched as f64, 0.0, 0.0));

    let fit = m.decay.fit.ok_or_else(|| EstimateError::InvalidArgument("coupling cost vanished".into()))?;
    let eta = spectral::eta(&model, p)?;
    let bound = rate(m.meeting_fit.gamma, eta, p, theta);
    let tolerance = (3.0 * fit.slope_se).max(0.10 * bound);
    items.push(CheckItem::ge("decay rate of Ŵ_p^p vs composite rate", -fit.slope, bound, ctx.tol(tolerance)));
    let meetings = serde_json::to_string(&m.meeting_fit).expect("plain struct");
    Ok((items, m.decay.to_csv() + &meetings))
}

fn reproducibility_items(ctx: &Ctx, done: &[CriterionReport]) -> Result<Vec<CheckItem>> {
    let mut first: Vec<CriterionReport> = done
        .iter()
        .filter(|r| CHECKS.iter().any(|c| c.id == r.id && c.stochastic))
        .cloned()
        .collect();
    if first.is_empty() {
        let fresh = Ctx::new(ctx.seed, ctx.quick);
        for c in CHECKS.iter().filter(|c| c.stochastic) {
            first.push(run_check(&fresh, c)?);
        }
    }
    let rerun = Ctx::new(ctx.seed, ctx.quick);
    let mut items = Vec::new();
    for r in &first {
        let c = CHECKS.iter().find(|c| c.id == r.id).expect("known id");
        let again = run_check(&rerun, c)?;
        items.push(CheckItem::flag(format!("[{}] {} artifact identical", r.id, r.name), again.artifact == r.artifact, true));
    }

    // thread count must not matter either
    let model = builtin::model_c3();
    let seed = ctx.seed;
    let run = |threads: usize| -> Result<String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
        let obs = pool.install(|| {
            sim::observe_ensemble(&model, &StateLaw::Stationary, InitialLaw::Point(0.0), 5.0, &[1.0, 5.0], 2_000, seed)
        })?;
        Ok(format!("{obs:?}"))
    };
    items.push(CheckItem::flag("ensemble identical on 1 and 4 worker threads", run(1)? == run(4)?, true));
    Ok(items)
}

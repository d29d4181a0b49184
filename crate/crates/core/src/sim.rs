//! Exact pathwise simulation of `(X, Y)`.
//!
//! `X` is simulated from its jump skeleton (holding time `Exp(a(x))`, next
//! state from `P(x, ·)`). Between jumps `Y` is an OU process with constant
//! coefficients and is advanced with its exact Gaussian transition
//!
//! ```text
//! Y ← Y e^{-λs} + N(0, σ²(1 - e^{-2λs})/(2λ))
//! ```
//!
//! so no time discretization is ever involved. Within a path the stream is
//! consumed in skeleton order: holding time, then one Gaussian per output
//! time inside the interval, one Gaussian for the jump epoch, then the
//! uniform selecting the next state.

use std::ops::ControlFlow;

use rayon::prelude::*;
use thiserror::Error;

use crate::io::{Cell, CsvBuilder};
use crate::model::{chain_quantities, ModelError, ModelSpec};
use crate::rng::PathRng;
use crate::spectral::{self, exponential_structure, ExponentialStructure, SpectralError};

/// Relative tolerance of the synchronous-coupling identity check.
pub const COUPLING_IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("horizon must be finite and > 0, got {0}")]
    InvalidHorizon(f64),
    #[error("output times must be sorted and lie in [0, horizon]: {0}")]
    InvalidOutputTimes(String),
    #[error("state {state} out of range for a model with {d} states")]
    InvalidState { state: usize, d: usize },
    #[error("initial state {0} is not in the attractive set M")]
    NotInM(usize),
    #[error("initial state {0} is not in the neutral set N")]
    NotInN(usize),
    #[error("invalid initial law: {0}")]
    InvalidLaw(String),
    #[error("coupling identity violated at t = {t}: |ΔY| = {observed:e}, expected {expected:e}")]
    CouplingIdentity { t: f64, observed: f64, expected: f64 },
}

type Result<T> = std::result::Result<T, SimError>;

/// `(1 - e^{-cs})/c`, with its `c → 0` limit `s`.
#[inline]
fn decay_integral(c: f64, s: f64) -> f64 {
    if (c * s).abs() < 1e-12 {
        s
    } else {
        -(-c * s).exp_m1() / c
    }
}

/// Per-state simulation tables derived once from a model.
#[derive(Debug, Clone)]
pub struct Dynamics {
    rates: Vec<f64>,
    cumulative: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    sigma: Vec<f64>,
}

impl Dynamics {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        let chain = chain_quantities(model)?;
        let d = model.d();
        let cumulative = (0..d)
            .map(|x| {
                let mut acc = 0.0;
                chain
                    .embedded
                    .row(x)
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Dynamics {
            rates: chain.jump_rates,
            cumulative,
            lambda: model.lambda().to_vec(),
            sigma: model.sigma().to_vec(),
        })
    }

    pub fn d(&self) -> usize {
        self.rates.len()
    }

    pub fn lambda(&self, x: usize) -> f64 {
        self.lambda[x]
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state < self.d() {
            Ok(())
        } else {
            Err(SimError::InvalidState { state, d: self.d() })
        }
    }

    #[inline]
    fn holding(&self, x: usize, rng: &mut PathRng) -> f64 {
        rng.exponential(self.rates[x])
    }

    #[inline]
    fn next_state(&self, x: usize, rng: &mut PathRng) -> usize {
        let u = rng.uniform();
        let row = &self.cumulative[x];
        match row.iter().position(|&c| u < c) {
            Some(j) => j,
            // u beyond the rounded row total: take the last reachable state
            None => row.windows(2).rposition(|w| w[1] > w[0]).map_or(0, |j| j + 1),
        }
    }

    /// Exact OU transition over a constant-state interval of length `s`:
    /// returns `(e^{-λs}, standard deviation of the Gaussian innovation)`.
    #[inline]
    fn transition(&self, x: usize, s: f64) -> (f64, f64) {
        let l = self.lambda[x];
        let var = self.sigma[x] * self.sigma[x] * decay_integral(2.0 * l, s);
        ((-l * s).exp(), var.sqrt())
    }
}

/// What produced an [`Observation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationKind {
    Initial,
    Output,
    Jump,
}

/// `(X_t, Y_t, ∫₀ᵗλ(X_u)du)` at one time. At a jump epoch `x` is the state
/// entered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: f64,
    pub x: usize,
    pub y: f64,
    pub int_lambda: f64,
    pub kind: ObservationKind,
}

/// One realized trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub jump_times: Vec<f64>,
    /// Value of `X` on each inter-jump interval (`jump_times.len() + 1` entries).
    pub states: Vec<usize>,
    /// Initial point, every output time and every jump epoch, in time order.
    pub observations: Vec<Observation>,
    pub seed: u64,
    pub path_index: u64,
}

impl PathSample {
    /// `Y` at a requested output time or jump epoch.
    pub fn y_at(&self, t: f64) -> Option<f64> {
        self.observations.iter().find(|o| o.t == t && o.kind != ObservationKind::Initial).map(|o| o.y)
    }

    /// Observations at the requested output times only.
    pub fn outputs(&self) -> impl Iterator<Item = &Observation> {
        self.observations.iter().filter(|o| o.kind == ObservationKind::Output)
    }

    fn record(&mut self, obs: Observation) {
        if obs.kind == ObservationKind::Jump {
            self.jump_times.push(obs.t);
            self.states.push(obs.x);
        }
        self.observations.push(obs);
    }

    fn empty(x0: usize, seed: u64, path_index: u64) -> Self {
        PathSample { jump_times: Vec::new(), states: vec![x0], observations: Vec::new(), seed, path_index }
    }
}

fn check_times(horizon: f64, output_times: &[f64]) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(SimError::InvalidHorizon(horizon));
    }
    if let Some(bad) = output_times.iter().find(|t| !(**t >= 0.0 && **t <= horizon)) {
        return Err(SimError::InvalidOutputTimes(format!("{bad} outside [0, {horizon}]")));
    }
    if output_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(SimError::InvalidOutputTimes("not sorted".into()));
    }
    Ok(())
}

/// What the engine reports at each event: the first copy's observation,
/// the second copy's `Y` (driven by the same Gaussian increments) and the
/// exactly tracked difference `D_t = Ỹ_t - Y_t = D_0 e^{-∫λ}`.
#[derive(Debug, Clone, Copy)]
struct Event {
    obs: Observation,
    y_tilde: f64,
    diff: f64,
}

/// Core engine. Calls `on_event` with the initial point, every output time
/// and every jump; stops at `horizon` or when the callback breaks.
#[allow(clippy::too_many_arguments)]
fn run_path(
    dynamics: &Dynamics,
    rng: &mut PathRng,
    x0: usize,
    y0: f64,
    y0_tilde: f64,
    horizon: f64,
    output_times: &[f64],
    mut on_event: impl FnMut(Event) -> ControlFlow<()>,
) {
    let (mut t, mut x, mut il) = (0.0, x0, 0.0);
    let (mut y, mut yt, mut diff) = (y0, y0_tilde, y0_tilde - y0);
    let mut emit = |t: f64, x: usize, y: f64, yt: f64, diff: f64, il: f64, kind| {
        on_event(Event { obs: Observation { t, x, y, int_lambda: il, kind }, y_tilde: yt, diff })
    };
    if emit(t, x, y, yt, diff, il, ObservationKind::Initial).is_break() {
        return;
    }
    let mut k = 0;
    while k < output_times.len() && output_times[k] == 0.0 {
        if emit(t, x, y, yt, diff, il, ObservationKind::Output).is_break() {
            return;
        }
        k += 1;
    }
    loop {
        let t_jump = t + dynamics.holding(x, rng);
        while k < output_times.len() && output_times[k] <= t_jump {
            let s = output_times[k] - t;
            let (m, sd) = dynamics.transition(x, s);
            let g = sd * rng.normal();
            y = m * y + g;
            yt = m * yt + g;
            diff *= m;
            il += dynamics.lambda[x] * s;
            t = output_times[k];
            k += 1;
            if emit(t, x, y, yt, diff, il, ObservationKind::Output).is_break() {
                return;
            }
        }
        if t_jump > horizon {
            return;
        }
        let s = t_jump - t;
        let (m, sd) = dynamics.transition(x, s);
        let g = sd * rng.normal();
        y = m * y + g;
        yt = m * yt + g;
        diff *= m;
        il += dynamics.lambda[x] * s;
        t = t_jump;
        x = dynamics.next_state(x, rng);
        if emit(t, x, y, yt, diff, il, ObservationKind::Jump).is_break() {
            return;
        }
    }
}

/// Simulates one path on stream `(seed, 0)`.
pub fn simulate_path(
    model: &ModelSpec,
    x0: usize,
    y0: f64,
    horizon: f64,
    output_times: &[f64],
    seed: u64,
) -> Result<PathSample> {
    simulate_path_indexed(&Dynamics::new(model)?, x0, y0, horizon, output_times, seed, 0)
}

pub fn simulate_path_indexed(
    dynamics: &Dynamics,
    x0: usize,
    y0: f64,
    horizon: f64,
    output_times: &[f64],
    seed: u64,
    path_index: u64,
) -> Result<PathSample> {
    dynamics.check_state(x0)?;
    check_times(horizon, output_times)?;
    let mut rng = PathRng::new(seed, path_index);
    let mut path = PathSample::empty(x0, seed, path_index);
    run_path(dynamics, &mut rng, x0, y0, y0, horizon, output_times, |ev| {
        path.record(ev.obs);
        ControlFlow::Continue(())
    });
    Ok(path)
}

/// Law of `X_0` for ensemble runs.
#[derive(Debug, Clone, PartialEq)]
pub enum StateLaw {
    Fixed(usize),
    /// The invariant probability `μ` of `X`.
    Stationary,
    Distribution(Vec<f64>),
}

/// Law of `Y_0`. Two laws are coupled comonotonically (one shared standard
/// normal), which is the optimal coupling on the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialLaw {
    Point(f64),
    Gaussian { mean: f64, std_dev: f64 },
}

impl InitialLaw {
    fn needs_draw(&self) -> bool {
        matches!(self, InitialLaw::Gaussian { .. })
    }

    fn at(&self, g: f64) -> f64 {
        match *self {
            InitialLaw::Point(y) => y,
            InitialLaw::Gaussian { mean, std_dev } => mean + std_dev * g,
        }
    }
}

/// Cumulative weights over states for sampling `X_0`.
#[derive(Debug, Clone)]
struct StateSampler(Option<usize>, Vec<f64>);

impl StateSampler {
    fn new(model: &ModelSpec, law: &StateLaw) -> Result<Self> {
        let d = model.d();
        let weights = match law {
            StateLaw::Fixed(x) => {
                if *x >= d {
                    return Err(SimError::InvalidState { state: *x, d });
                }
                return Ok(StateSampler(Some(*x), Vec::new()));
            }
            StateLaw::Stationary => chain_quantities(model)?.invariant,
            StateLaw::Distribution(w) => {
                if w.len() != d || w.iter().any(|p| !(*p >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(SimError::InvalidLaw(format!("{w:?} is not a probability vector on {d} states")));
                }
                w.clone()
            }
        };
        let mut acc = 0.0;
        Ok(StateSampler(None, weights.iter().map(|w| {
            acc += w;
            acc
        }).collect()))
    }

    fn draw(&self, rng: &mut PathRng) -> usize {
        match self.0 {
            Some(x) => x,
            None => {
                let u = rng.uniform() * self.1[self.1.len() - 1];
                self.1.iter().position(|&c| u < c).unwrap_or(self.1.len() - 1)
            }
        }
    }
}

/// Runs `n_paths` independent paths (path `i` on stream `(seed, i)`) and
/// returns, per path, the observations at `output_times` in path order.
pub fn observe_ensemble(
    model: &ModelSpec,
    x_law: &StateLaw,
    y_law: InitialLaw,
    horizon: f64,
    output_times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<Observation>>> {
    check_times(horizon, output_times)?;
    let dynamics = Dynamics::new(model)?;
    let sampler = StateSampler::new(model, x_law)?;
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = PathRng::new(seed, i);
            let x0 = sampler.draw(&mut rng);
            let y0 = if y_law.needs_draw() { y_law.at(rng.normal()) } else { y_law.at(0.0) };
            let mut out = Vec::with_capacity(output_times.len());
            run_path(&dynamics, &mut rng, x0, y0, y0, horizon, output_times, |ev| {
                if ev.obs.kind == ObservationKind::Output {
                    out.push(ev.obs);
                }
                ControlFlow::Continue(())
            });
            out
        })
        .collect())
}

/// `Y_horizon` for `n_paths` independent paths.
pub fn terminal_ensemble(
    model: &ModelSpec,
    x_law: &StateLaw,
    y0: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(observe_ensemble(model, x_law, InitialLaw::Point(y0), horizon, &[horizon], n_paths, seed)?
        .into_iter()
        .map(|obs| obs[0].y)
        .collect())
}

/// Burn-in horizon after which `Y_t` is treated as a draw from `ν`:
/// `40/η_ref`, with `η_ref = η_{min(1, κ/2)}` when `λ_min < 0` and `η_1`
/// otherwise.
pub fn stationary_horizon(model: &ModelSpec) -> Result<f64> {
    let kappa = spectral::kappa(model)?;
    let p_ref = if kappa.is_finite() { (kappa / 2.0).min(1.0) } else { 1.0 };
    Ok(40.0 / spectral::eta(model, p_ref)?)
}

/// Draws from (approximately) `ν`: `X_0 ~ μ`, `Y_0 = 0`, observed at
/// [`stationary_horizon`] unless `horizon` is given.
pub fn stationary_samples(model: &ModelSpec, horizon: Option<f64>, n: usize, seed: u64) -> Result<Vec<f64>> {
    let horizon = match horizon {
        Some(h) => h,
        None => stationary_horizon(model)?,
    };
    terminal_ensemble(model, &StateLaw::Stationary, 0.0, horizon, n, seed)
}

/// `(X, Y)` observed at the successive entrance times of `X` into `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingSubchain {
    pub entry_times: Vec<f64>,
    pub u: Vec<usize>,
    pub v: Vec<f64>,
}

impl HittingSubchain {
    pub fn to_csv(&self) -> String {
        let mut csv = CsvBuilder::new(&["n", "T_2n", "u_n", "v_n"]);
        for (n, ((t, u), v)) in self.entry_times.iter().zip(&self.u).zip(&self.v).enumerate() {
            csv.row(&[Cell::I(n as u64), Cell::F(*t), Cell::I(*u as u64), Cell::F(*v)]);
        }
        csv.finish()
    }
}

/// Records `(T_{2n}, X_{T_{2n}}, Y_{T_{2n}})` for `n = 0..=n_entries`, where
/// `T_0 = 0` and `T_{2n}` is the `n`-th entrance of `X` into `M` after a
/// sojourn in `N`.
pub fn simulate_hitting_subchain(
    model: &ModelSpec,
    x0: usize,
    y0: f64,
    n_entries: usize,
    seed: u64,
) -> Result<HittingSubchain> {
    let structure = exponential_structure(model)?;
    let dynamics = Dynamics::new(model)?;
    dynamics.check_state(x0)?;
    if !structure.is_in_m(x0) {
        return Err(SimError::NotInM(x0));
    }
    let mut chain = HittingSubchain { entry_times: vec![0.0], u: vec![x0], v: vec![y0] };
    if n_entries == 0 {
        return Ok(chain);
    }
    let mut rng = PathRng::new(seed, 0);
    let mut prev = x0;
    run_path(&dynamics, &mut rng, x0, y0, y0, f64::INFINITY, &[], |ev| {
        let obs = ev.obs;
        if obs.kind == ObservationKind::Jump {
            if !structure.is_in_m(prev) && structure.is_in_m(obs.x) {
                chain.entry_times.push(obs.t);
                chain.u.push(obs.x);
                chain.v.push(obs.y);
            }
            prev = obs.x;
        }
        if chain.entry_times.len() > n_entries {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    Ok(chain)
}

fn ix_draw(dynamics: &Dynamics, structure: &ExponentialStructure, x0: usize, rng: &mut PathRng) -> f64 {
    let mut x = x0;
    let mut acc = 0.0;
    while !structure.is_in_m(x) {
        let tau = dynamics.holding(x, rng);
        acc += dynamics.sigma[x] * tau.sqrt() * rng.normal();
        x = dynamics.next_state(x, rng);
    }
    acc
}

/// One draw of `I_x0 = ∫σ(X_s)dB_s` up to the first hitting time of `M`,
/// i.e. `Σ_j σ(x_j)√τ_j G_j` along the sojourn in `N`.
pub fn simulate_ix(model: &ModelSpec, x0: usize, seed: u64) -> Result<f64> {
    Ok(sample_ix(model, x0, 1, seed)?[0])
}

/// `n` independent draws of `I_x0`, draw `i` on stream `(seed, i)`.
pub fn sample_ix(model: &ModelSpec, x0: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
    let structure = exponential_structure(model)?;
    let dynamics = Dynamics::new(model)?;
    dynamics.check_state(x0)?;
    if structure.position_in_n(x0).is_none() {
        return Err(SimError::NotInN(x0));
    }
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| ix_draw(&dynamics, &structure, x0, &mut PathRng::new(seed, i)))
        .collect())
}

/// Two copies of `(X, Y)` built by a coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPaths {
    pub first: PathSample,
    pub second: PathSample,
    /// `Ỹ_t - Y_t` at each requested output time.
    pub differences: Vec<f64>,
}


fn identity_check(d0: f64, ev: &Event) -> Result<()> {
    if d0 == 0.0 {
        return if ev.diff == 0.0 {
            Ok(())
        } else {
            Err(SimError::CouplingIdentity { t: ev.obs.t, observed: ev.diff.abs(), expected: 0.0 })
        };
    }
    let expected = d0.abs() * (-ev.obs.int_lambda).exp();
    let observed = ev.diff.abs();
    if (observed - expected).abs() <= COUPLING_IDENTITY_TOL * expected {
        Ok(())
    } else {
        Err(SimError::CouplingIdentity { t: ev.obs.t, observed, expected })
    }
}

/// Synchronous coupling: both copies share the `X` path and the Gaussian
/// increments, and start from `y0` and `y0_tilde`. Along the path
/// `|Y_t - Ỹ_t| = |y0 - ỹ0| exp(-∫₀ᵗλ(X_u)du)` is checked at every event.
pub fn couple_synchronous(
    model: &ModelSpec,
    x0: usize,
    y0: f64,
    y0_tilde: f64,
    horizon: f64,
    output_times: &[f64],
    seed: u64,
) -> Result<CoupledPaths> {
    let dynamics = Dynamics::new(model)?;
    dynamics.check_state(x0)?;
    check_times(horizon, output_times)?;
    let mut rng = PathRng::new(seed, 0);
    let mut first = PathSample::empty(x0, seed, 0);
    let mut second = PathSample::empty(x0, seed, 0);
    let mut differences = Vec::with_capacity(output_times.len());
    let mut failure = None;
    run_path(&dynamics, &mut rng, x0, y0, y0_tilde, horizon, output_times, |ev| {
        if let Err(e) = identity_check(y0_tilde - y0, &ev) {
            failure = Some(e);
            return ControlFlow::Break(());
        }
        first.record(ev.obs);
        second.record(Observation { y: ev.y_tilde, ..ev.obs });
        if ev.obs.kind == ObservationKind::Output {
            differences.push(ev.diff);
        }
        ControlFlow::Continue(())
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(CoupledPaths { first, second, differences }),
    }
}

/// Ensemble version of [`couple_synchronous`]: `X_0` drawn from `x_law`,
/// `(Y_0, Ỹ_0)` from the comonotone coupling of `law_a` and `law_b`.
/// Returns `Ỹ_t - Y_t` at the output times for every path.
#[allow(clippy::too_many_arguments)]
pub fn synchronous_differences(
    model: &ModelSpec,
    x_law: &StateLaw,
    law_a: InitialLaw,
    law_b: InitialLaw,
    horizon: f64,
    output_times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_times(horizon, output_times)?;
    let dynamics = Dynamics::new(model)?;
    let sampler = StateSampler::new(model, x_law)?;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = PathRng::new(seed, i);
            let x0 = sampler.draw(&mut rng);
            let g = if law_a.needs_draw() || law_b.needs_draw() { rng.normal() } else { 0.0 };
            let (y0, y0_tilde) = (law_a.at(g), law_b.at(g));
            let mut out = Vec::with_capacity(output_times.len());
            let mut failure = None;
            run_path(&dynamics, &mut rng, x0, y0, y0_tilde, horizon, output_times, |ev| {
                if let Err(e) = identity_check(y0_tilde - y0, &ev) {
                    failure = Some(e);
                    return ControlFlow::Break(());
                }
                if ev.obs.kind == ObservationKind::Output {
                    out.push(ev.diff);
                }
                ControlFlow::Continue(())
            });
            failure.map_or(Ok(out), Err)
        })
        .collect()
}

/// First meeting time of the two chains in [`couple_merge`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeetingTime {
    At(f64),
    /// Not met by the horizon (right-censored).
    Censored { horizon: f64 },
}

impl MeetingTime {
    pub fn time(&self) -> Option<f64> {
        match *self {
            MeetingTime::At(t) => Some(t),
            MeetingTime::Censored { .. } => None,
        }
    }

    /// `+∞` for a censored meeting.
    pub fn as_f64(&self) -> f64 {
        self.time().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedPaths {
    pub first: PathSample,
    pub second: PathSample,
    pub meeting: MeetingTime,
    /// `Ỹ_t - Y_t` at each requested output time.
    pub differences: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct MergeEvent {
    t: f64,
    kind: ObservationKind,
    first_jumped: bool,
    second_jumped: bool,
    x: usize,
    x_tilde: usize,
    y: f64,
    y_tilde: f64,
}

/// Merge coupling engine. `X` and `X̄` evolve independently until they
/// first coincide at `T`; from then on `X̃ = X`. Both `Y` copies are driven
/// by one Brownian path, sampled exactly on the union of both skeletons:
/// over an interval where the states differ the two OU innovations are
/// jointly Gaussian with covariance `σσ̃(1 - e^{-(λ+λ̃)s})/(λ+λ̃)`.
#[allow(clippy::too_many_arguments)]
fn run_merge(
    dynamics: &Dynamics,
    rng: &mut PathRng,
    x0: usize,
    x0_tilde: usize,
    y0: f64,
    y0_tilde: f64,
    horizon: f64,
    output_times: &[f64],
    mut on_event: impl FnMut(MergeEvent),
) -> MeetingTime {
    let (mut t, mut x, mut xb) = (0.0, x0, x0_tilde);
    let (mut y, mut yt) = (y0, y0_tilde);
    let mut meeting = if x == xb { Some(0.0) } else { None };
    let ev = |t, kind, first_jumped, second_jumped, x, x_tilde, y, y_tilde| MergeEvent {
        t,
        kind,
        first_jumped,
        second_jumped,
        x,
        x_tilde,
        y,
        y_tilde,
    };
    on_event(ev(t, ObservationKind::Initial, false, false, x, xb, y, yt));

    let advance = |s: f64, x: usize, xb: usize, merged: bool, y: &mut f64, yt: &mut f64, rng: &mut PathRng| {
        if merged {
            let (m, sd) = dynamics.transition(x, s);
            let g = sd * rng.normal();
            *y = m * *y + g;
            *yt = m * *yt + g;
        } else {
            let (l1, l2) = (dynamics.lambda[x], dynamics.lambda[xb]);
            let (s1, s2) = (dynamics.sigma[x], dynamics.sigma[xb]);
            let v1 = s1 * s1 * decay_integral(2.0 * l1, s);
            let v2 = s2 * s2 * decay_integral(2.0 * l2, s);
            let c = s1 * s2 * decay_integral(l1 + l2, s);
            let (g1, g2) = (rng.normal(), rng.normal());
            let sd1 = v1.sqrt();
            let load = if sd1 > 0.0 { c / sd1 } else { 0.0 };
            let resid = (v2 - load * load).max(0.0).sqrt();
            *y = (-l1 * s).exp() * *y + sd1 * g1;
            *yt = (-l2 * s).exp() * *yt + load * g1 + resid * g2;
        }
    };

    let mut k = 0;
    while k < output_times.len() && output_times[k] == 0.0 {
        on_event(ev(t, ObservationKind::Output, false, false, x, xb, y, yt));
        k += 1;
    }
    let mut next_x = t + dynamics.holding(x, rng);
    let mut next_b = if meeting.is_some() { f64::INFINITY } else { t + dynamics.holding(xb, rng) };
    loop {
        let merged = meeting.is_some();
        let t_next = next_x.min(next_b);
        while k < output_times.len() && output_times[k] <= t_next {
            advance(output_times[k] - t, x, xb, merged, &mut y, &mut yt, rng);
            t = output_times[k];
            k += 1;
            let xt = if merged { x } else { xb };
            on_event(ev(t, ObservationKind::Output, false, false, x, xt, y, yt));
        }
        if t_next > horizon {
            break;
        }
        advance(t_next - t, x, xb, merged, &mut y, &mut yt, rng);
        t = t_next;
        if merged {
            x = dynamics.next_state(x, rng);
            next_x = t + dynamics.holding(x, rng);
            on_event(ev(t, ObservationKind::Jump, true, true, x, x, y, yt));
            continue;
        }
        let first_jumped = next_x <= next_b;
        if first_jumped {
            x = dynamics.next_state(x, rng);
            next_x = t + dynamics.holding(x, rng);
        } else {
            xb = dynamics.next_state(xb, rng);
            next_b = t + dynamics.holding(xb, rng);
        }
        if x == xb {
            meeting = Some(t);
            next_b = f64::INFINITY;
        }
        on_event(ev(t, ObservationKind::Jump, first_jumped, !first_jumped, x, xb, y, yt));
    }
    meeting.map_or(MeetingTime::Censored { horizon }, MeetingTime::At)
}

/// Merge coupling from `(x0, y0)` and `(x0_tilde, y0_tilde)`: independent
/// chains until their first meeting time, identical afterwards, with a
/// single shared Brownian motion for both `Y` copies.
#[allow(clippy::too_many_arguments)]
pub fn couple_merge(
    model: &ModelSpec,
    x0: usize,
    x0_tilde: usize,
    y0: f64,
    y0_tilde: f64,
    horizon: f64,
    output_times: &[f64],
    seed: u64,
) -> Result<MergedPaths> {
    let dynamics = Dynamics::new(model)?;
    dynamics.check_state(x0)?;
    dynamics.check_state(x0_tilde)?;
    check_times(horizon, output_times)?;
    let mut rng = PathRng::new(seed, 0);
    let mut first = PathSample::empty(x0, seed, 0);
    let mut second = PathSample::empty(x0_tilde, seed, 0);
    let mut differences = Vec::new();
    let meeting = run_merge(&dynamics, &mut rng, x0, x0_tilde, y0, y0_tilde, horizon, output_times, |e| {
        let obs = |x, y, kind| Observation { t: e.t, x, y, int_lambda: f64::NAN, kind };
        match e.kind {
            ObservationKind::Jump => {
                if e.first_jumped {
                    first.record(obs(e.x, e.y, ObservationKind::Jump));
                }
                if e.second_jumped {
                    second.record(obs(e.x_tilde, e.y_tilde, ObservationKind::Jump));
                }
            }
            kind => {
                first.record(obs(e.x, e.y, kind));
                second.record(obs(e.x_tilde, e.y_tilde, kind));
                if kind == ObservationKind::Output {
                    differences.push(e.y_tilde - e.y);
                }
            }
        }
    });
    Ok(MergedPaths { first, second, meeting, differences })
}

/// Per-path summary of a merge-coupled ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub meeting: MeetingTime,
    pub differences: Vec<f64>,
}

/// Ensemble version of [`couple_merge`], path `i` on stream `(seed, i)`.
#[allow(clippy::too_many_arguments)]
pub fn merge_ensemble(
    model: &ModelSpec,
    x0: usize,
    x0_tilde: usize,
    y0: f64,
    y0_tilde: f64,
    horizon: f64,
    output_times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<MergeOutcome>> {
    let dynamics = Dynamics::new(model)?;
    dynamics.check_state(x0)?;
    dynamics.check_state(x0_tilde)?;
    check_times(horizon, output_times)?;
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = PathRng::new(seed, i);
            let mut differences = Vec::with_capacity(output_times.len());
            let meeting = run_merge(&dynamics, &mut rng, x0, x0_tilde, y0, y0_tilde, horizon, output_times, |e| {
                if e.kind == ObservationKind::Output {
                    differences.push(e.y_tilde - e.y);
                }
            });
            MergeOutcome { meeting, differences }
        })
        .collect())
}

/// `n_paths` full paths from the same start, path `i` on stream `(seed, i)`.
pub fn simulate_paths(
    model: &ModelSpec,
    x0: usize,
    y0: f64,
    horizon: f64,
    output_times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PathSample>> {
    let dynamics = Dynamics::new(model)?;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path_indexed(&dynamics, x0, y0, horizon, output_times, seed, i))
        .collect()
}

/// Path dump with columns `t, x, y, path_id` (states numbered from 0).
/// Repeated consecutive observations are written once.
pub fn paths_to_csv(paths: &[PathSample]) -> String {
    let mut csv = CsvBuilder::new(&["t", "x", "y", "path_id"]);
    for p in paths {
        let mut last = None;
        for o in &p.observations {
            // the initial point and an output at t = 0 are the same row
            if last == Some((o.t, o.x, o.y)) {
                continue;
            }
            last = Some((o.t, o.x, o.y));
            csv.row(&[Cell::F(o.t), Cell::I(o.x as u64), Cell::F(o.y), Cell::I(p.path_index)]);
        }
    }
    csv.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, builtin};

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn path_structure_and_reproducibility() {
        let m = builtin::model_c3();
        let outs = [0.0, 0.5, 3.0, 10.0];
        let p = simulate_path(&m, 0, 1.0, 10.0, &outs, 42).unwrap();
        assert_eq!(p, simulate_path(&m, 0, 1.0, 10.0, &outs, 42).unwrap());
        assert_ne!(p, simulate_path(&m, 0, 1.0, 10.0, &outs, 43).unwrap());
        assert_eq!(p.states.len(), p.jump_times.len() + 1);
        assert!(p.states.windows(2).all(|w| w[0] != w[1]));
        assert!(p.jump_times.windows(2).all(|w| w[0] < w[1]));
        assert!(p.jump_times.iter().all(|&t| t > 0.0 && t <= 10.0));
        assert!(p.observations.windows(2).all(|w| w[0].t <= w[1].t));
        assert_eq!(p.outputs().count(), outs.len());
        assert_eq!(p.y_at(0.0), Some(1.0));
        for &t in &p.jump_times {
            assert!(p.y_at(t).is_some());
        }
    }

    #[test]
    fn invalid_arguments() {
        let m = builtin::model_a();
        assert!(matches!(simulate_path(&m, 0, 0.0, 0.0, &[], 1), Err(SimError::InvalidHorizon(_))));
        assert!(matches!(simulate_path(&m, 0, 0.0, 1.0, &[2.0], 1), Err(SimError::InvalidOutputTimes(_))));
        assert!(matches!(simulate_path(&m, 0, 0.0, 1.0, &[0.5, 0.2], 1), Err(SimError::InvalidOutputTimes(_))));
        assert!(matches!(simulate_path(&m, 5, 0.0, 1.0, &[], 1), Err(SimError::InvalidState { .. })));
    }

    #[test]
    fn constant_ou_reaches_its_stationary_law() {
        let m = builtin::constant_ou();
        let ys = terminal_ensemble(&m, &StateLaw::Fixed(0), 0.0, 20.0, 100_000, 7).unwrap();
        let (mean, var) = mean_var(&ys);
        let se = (var / ys.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}");
        assert!((var / 0.5 - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn occupation_fraction_matches_mu() {
        let m = builtin::model_a();
        let horizon = 1e5;
        let p = simulate_path(&m, 0, 0.0, horizon, &[], 3).unwrap();
        let mut occupied = 0.0;
        let mut prev = 0.0;
        for (i, &t) in p.jump_times.iter().enumerate() {
            if p.states[i] == 0 {
                occupied += t - prev;
            }
            prev = t;
        }
        if *p.states.last().unwrap() == 0 {
            occupied += horizon - prev;
        }
        assert!((occupied / horizon - 0.5).abs() < 0.005, "{}", occupied / horizon);
    }

    #[test]
    fn holding_times_have_mean_one_over_rate() {
        let m = build_model(
            3,
            vec![vec![-2.0, 1.0, 1.0], vec![1.0, -1.0, 0.0], vec![3.0, 0.0, -3.0]],
            vec![1.0; 3],
            vec![1.0; 3],
        )
        .unwrap();
        let p = simulate_path(&m, 0, 0.0, 50_000.0, &[], 11).unwrap();
        let mut pooled = vec![Vec::new(); 3];
        let mut prev = 0.0;
        for (i, &t) in p.jump_times.iter().enumerate() {
            pooled[p.states[i]].push(t - prev);
            prev = t;
        }
        for (x, rate) in [2.0, 1.0, 3.0].iter().enumerate() {
            let (mean, var) = mean_var(&pooled[x]);
            let se = (var / pooled[x].len() as f64).sqrt();
            assert!((mean - 1.0 / rate).abs() < 3.0 * se, "state {x}: {mean}");
        }
    }

    #[test]
    fn single_interval_is_an_exact_ou_transition() {
        // Model A from state 0 (λ = -1): keep the paths without a jump before t.
        let m = builtin::model_a();
        let (t, y0) = (0.5, 1.0);
        let dynamics = Dynamics::new(&m).unwrap();
        let kept: Vec<f64> = (0..100_000u64)
            .filter_map(|i| {
                let p = simulate_path_indexed(&dynamics, 0, y0, t, &[t], 5, i).unwrap();
                p.jump_times.is_empty().then(|| p.y_at(t).unwrap())
            })
            .collect();
        let (mean, var) = mean_var(&kept);
        let n = kept.len() as f64;
        let exact_mean = y0 * t.exp();
        let exact_var = (2.0 * t).exp_m1() / 2.0;
        assert!((mean - exact_mean).abs() < 4.0 * (exact_var / n).sqrt(), "{mean} vs {exact_mean}");
        assert!((var - exact_var).abs() < 4.0 * exact_var * (2.0 / n).sqrt(), "{var} vs {exact_var}");
    }

    #[test]
    fn neutral_state_variance_branch() {
        assert_eq!(decay_integral(0.0, 2.5), 2.5);
        assert!((decay_integral(1e-14, 2.0) - 2.0).abs() < 1e-12);
        assert!((decay_integral(2.0, 1.0) - (1.0 - (-2f64).exp()) / 2.0).abs() < 1e-15);
        assert!((decay_integral(-2.0, 1.0) - (2f64.exp() - 1.0) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn hitting_subchain_records_entries_into_m() {
        let b = builtin::model_b();
        let empty = simulate_hitting_subchain(&b, 0, 0.0, 0, 1).unwrap();
        assert_eq!(empty.entry_times, vec![0.0]);
        let chain = simulate_hitting_subchain(&b, 0, 0.0, 500, 1).unwrap();
        assert_eq!(chain.entry_times.len(), 501);
        assert!(chain.u.iter().all(|&u| u == 0));
        assert!(chain.entry_times.windows(2).all(|w| w[0] < w[1]));
        assert!(matches!(simulate_hitting_subchain(&b, 1, 0.0, 5, 1), Err(SimError::NotInM(1))));
        assert!(simulate_hitting_subchain(&builtin::model_a(), 0, 0.0, 5, 1).is_err());

        let c3 = builtin::model_c3();
        let f = exponential_structure(&c3).unwrap().f_set;
        let chain = simulate_hitting_subchain(&c3, 0, 0.0, 200, 9).unwrap();
        assert!(chain.u[1..].iter().all(|u| f.contains(u)));
        assert!(chain.to_csv().starts_with("n,T_2n,u_n,v_n\n0,"));
    }

    #[test]
    fn ix_draws_are_symmetric() {
        let xs = sample_ix(&builtin::model_c3(), 1, 100_000, 3).unwrap();
        let (mean, var) = mean_var(&xs);
        assert!(mean.abs() < 3.0 * (var / xs.len() as f64).sqrt());
        assert_eq!(simulate_ix(&builtin::model_c3(), 1, 3).unwrap(), xs[0]);
        assert!(matches!(sample_ix(&builtin::model_c3(), 0, 1, 3), Err(SimError::NotInN(0))));
    }

    #[test]
    fn synchronous_coupling_identities() {
        let a = builtin::model_a();
        let same = couple_synchronous(&a, 0, 0.3, 0.3, 5.0, &[1.0, 5.0], 2).unwrap();
        assert_eq!(same.first.observations, same.second.observations);
        assert_eq!(same.differences, vec![0.0, 0.0]);

        let c = couple_synchronous(&builtin::constant_ou(), 0, 0.0, 2.0, 8.0, &[1.0, 4.0, 8.0], 2).unwrap();
        for (d, t) in c.differences.iter().zip([1.0f64, 4.0, 8.0]) {
            assert!((d / (2.0 * (-t).exp()) - 1.0).abs() < 1e-12);
        }
        assert_eq!(c.first.jump_times, c.second.jump_times);

        let long = couple_synchronous(&a, 0, 0.0, 1.0, 200.0, &[100.0, 200.0], 4).unwrap();
        for (o, d) in long.first.outputs().zip(&long.differences) {
            assert!((d.abs() / (-o.int_lambda).exp() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn merge_coupling_structure() {
        let a = builtin::model_c3();
        let same = couple_merge(&a, 2, 2, 0.0, 1.0, 10.0, &[5.0], 8).unwrap();
        assert_eq!(same.meeting, MeetingTime::At(0.0));
        assert_eq!(same.first.jump_times, same.second.jump_times);
        assert_eq!(same.first.states, same.second.states);

        for seed in 0..50 {
            let m = couple_merge(&a, 0, 1, 0.0, 1.0, 30.0, &[10.0, 30.0], seed).unwrap();
            let Some(t) = m.meeting.time() else { continue };
            let after = |p: &PathSample| {
                p.jump_times.iter().zip(&p.states[1..]).filter(|(s, _)| **s > t).map(|(s, x)| (*s, *x)).collect::<Vec<_>>()
            };
            assert_eq!(after(&m.first), after(&m.second));
            let state_at = |p: &PathSample| {
                let i = p.jump_times.iter().take_while(|s| **s <= t).count();
                p.states[i]
            };
            assert_eq!(state_at(&m.first), state_at(&m.second));
            assert!(m.first.states.windows(2).all(|w| w[0] != w[1]));
            assert!(m.second.states.windows(2).all(|w| w[0] != w[1]));
        }
    }

    #[test]
    fn merge_with_equal_coefficients_shares_the_noise() {
        // Same λ and σ everywhere: the joint innovation is perfectly
        // correlated, so the difference contracts deterministically.
        let c = builtin::constant_ou();
        let m = couple_merge(&c, 0, 1, 0.0, 1.0, 6.0, &[3.0, 6.0], 1).unwrap();
        for (d, t) in m.differences.iter().zip([3.0f64, 6.0]) {
            assert!((d - (-t).exp()).abs() < 1e-7, "{d}");
        }
    }

    #[test]
    fn ensembles_are_ordered_and_reproducible() {
        let a = builtin::model_a();
        let run = |n| observe_ensemble(&a, &StateLaw::Stationary, InitialLaw::Point(0.0), 3.0, &[1.0, 3.0], n, 5).unwrap();
        let full = run(64);
        assert_eq!(full, run(64));
        // path i depends only on (seed, i), not on the ensemble size
        assert_eq!(full[..16], run(16)[..]);
        assert!(full.iter().all(|p| p.len() == 2 && p.iter().all(|o| o.x < 2)));
        let csv = paths_to_csv(&[simulate_path(&a, 0, 0.0, 1.0, &[1.0], 1).unwrap()]);
        assert!(csv.starts_with("t,x,y,path_id\n"));
        assert!(csv.ends_with('\n') && !csv.contains('\r'));
    }

    #[test]
    fn stationary_horizon_rule() {
        let h = stationary_horizon(&builtin::model_a()).unwrap();
        let eta = spectral::eta(&builtin::model_a(), 0.25).unwrap();
        assert!((h / (40.0 / eta) - 1.0).abs() < 1e-8, "{h}");
        let h = stationary_horizon(&builtin::constant_ou()).unwrap();
        assert!((h - 40.0).abs() < 1e-9);
    }
}

//! Ornstein-Uhlenbeck diffusions driven by a finite Markov switching
//! process: `dY = -λ(X) Y dt + σ(X) dB`.
//!
//! - [`model`]: the validated model and the derived chain quantities.
//! - [`spectral`]: tail regime classification and closed forms.
//! - [`sim`]: exact pathwise simulation and couplings.
//! - [`estimate`]: Monte Carlo estimators with standard errors.
//! - [`validate`]: the built-in validation suite.
//! - [`cli`]: the command-line front end used by the `switchou` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod estimate;
pub mod io;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod sim;
pub mod spectral;
pub mod validate;

pub use model::{build_model, chain_quantities, ergodicity_margin, ChainQuantities, ModelSpec};
pub use spectral::{classify, Regime, RegimeReport};

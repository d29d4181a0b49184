//! Tail classification of the built-in models and a hand-built one.
//!
//! cargo run --example classify

use switchou::model::builtin;
use switchou::{build_model, classify, spectral};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["A", "B", "C3", "gaussian"] {
        let model = builtin::by_name(name).expect("built-in");
        let r = classify(&model)?;
        println!(
            "{name:>8}: {:?}, margin {:.4}, kappa {:?}, v_c {:?}, alpha_bar {:?}",
            r.regime, r.ergodicity_margin, r.kappa, r.v_c, r.alpha_bar
        );
    }

    // three states, one of them repulsive
    let model = build_model(
        3,
        vec![vec![-2.0, 1.0, 1.0], vec![1.0, -1.5, 0.5], vec![4.0, 4.0, -8.0]],
        vec![1.0, 0.5, -1.5],
        vec![1.0, 0.8, 1.2],
    )?;
    let k = spectral::kappa(&model)?;
    println!("custom: kappa = {k:.6}");
    for p in [0.25 * k, 0.5 * k, k, 1.5 * k] {
        println!("  eta({p:.4}) = {:+.6}", spectral::eta(&model, p)?);
    }
    let m = spectral::m_matrix(&model, k)?;
    println!("  spectral radius of M at kappa: {:.8}", spectral::spectral_radius(&m)?);
    Ok(())
}

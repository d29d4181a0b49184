//! Moments, Laplace transforms and tail diagnostics of the stationary law.
//!
//! cargo run --release --example stationary_estimates

use switchou::estimate::{
    default_hill_k, estimate_gaussian_moment, estimate_laplace, estimate_moment, survival_decay_rate_default, tail_index,
};
use switchou::model::builtin;
use switchou::sim::stationary_samples;
use switchou::spectral;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 200_000;

    let a = builtin::model_a();
    let ys = stationary_samples(&a, None, n, 1)?;
    println!("Model A, kappa = {:.4}", spectral::kappa(&a)?);
    for p in [0.2, 0.4, 0.6] {
        let s = estimate_moment(&ys, p)?;
        println!("  E|Y|^{p}: {:.4} ± {:.4} diverged={}", s.value, s.std_error, s.diverged);
    }
    let hill = tail_index(&ys, default_hill_k(n))?;
    println!("  Hill tail index {:.3} ± {:.3}", hill.value, hill.std_error);

    let b = builtin::model_b();
    let ys = stationary_samples(&b, Some(40.0), n, 2)?;
    println!("Model B");
    for v in [0.5, 1.0] {
        let s = estimate_laplace(&ys, v)?;
        let closed = spectral::two_state_laplace_corrected(&b, v)?;
        println!("  E e^({v}Y): {:.4} ± {:.4}, closed form {closed:.4}", s.value, s.std_error);
    }
    let rate = survival_decay_rate_default(&ys)?;
    println!("  survival decay rate {:.3} (v_c = {:.3})", rate.value, 2f64.sqrt());

    let c = builtin::constant_ou();
    let ys = stationary_samples(&c, None, n, 3)?;
    println!("constant OU, Y ~ N(0, 1/2)");
    for delta in [0.5, 1.2] {
        let s = estimate_gaussian_moment(&ys, delta)?;
        println!("  E e^({delta}Y²): {:.4} ± {:.4} diverged={}", s.value, s.std_error, s.diverged);
    }
    Ok(())
}

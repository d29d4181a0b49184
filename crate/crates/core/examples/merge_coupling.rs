//! Chains started apart are coupled until they meet, then move together.
//!
//! cargo run --release --example merge_coupling

use switchou::estimate::{composite_rate, composite_rate_conjugate, merge_decay_experiment};
use switchou::model::builtin;
use switchou::spectral;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = builtin::model_a();
    let p = 0.25;
    let times: Vec<f64> = (0..=30).map(f64::from).collect();
    let e = merge_decay_experiment(&model, 0, 1, 0.0, 1.0, p, 30.0, &times, 20_000, 7)?;
    let m = e.meeting_fit;
    println!("meeting rate gamma {:.4} ± {:.4} (r² {:.5}, censored {})", m.gamma, m.gamma_se, m.r2, m.censored);
    let eta = spectral::eta(&model, p)?;
    let theta = spectral::kappa(&model)? * 0.8;
    let fit = e.decay.fit.expect("enough points");
    println!("decay rate of E|dY|^p: {:.5}", -fit.slope);
    println!("eta_p {eta:.5}");
    println!("composite rate {:.5}", composite_rate(m.gamma, eta, p, theta));
    println!("composite rate, conjugate form {:.5}", composite_rate_conjugate(m.gamma, eta, p, theta));
    Ok(())
}

//! Two copies driven by the same chain and noise: E|Y_t - Y~_t|^p decays
//! at rate eta_p.
//!
//! cargo run --release --example synchronous_coupling

use switchou::estimate::wasserstein_decay_experiment;
use switchou::model::builtin;
use switchou::sim::{InitialLaw, StateLaw};
use switchou::spectral;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = builtin::model_a();
    let p = 0.25;
    let times: Vec<f64> = (0..=20).map(f64::from).collect();
    let e = wasserstein_decay_experiment(
        &model,
        &StateLaw::Stationary,
        InitialLaw::Point(0.0),
        InitialLaw::Point(1.0),
        p,
        20.0,
        &times,
        20_000,
        6,
    )?;
    let fit = e.fit.expect("enough points");
    println!("fitted slope {:.5} ± {:.5}, r² {:.4}", fit.slope, fit.slope_se, fit.r2);
    println!("-eta_p       {:.5}", -spectral::eta(&model, p)?);
    print!("{}", e.to_csv().lines().take(6).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}

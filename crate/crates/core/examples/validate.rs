//! Runs a few checks of the validation suite in quick mode.
//!
//! cargo run --release --example validate -- [check ...]

use switchou::validate::{run_validation, ValidateOptions, CHECKS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut filter: Vec<String> = std::env::args().skip(1).collect();
    if filter.is_empty() {
        filter = vec!["kappa-oracle".into(), "eta-properties".into(), "gaussian-sandwich".into()];
    }
    println!("available: {}", CHECKS.iter().map(|c| c.name).collect::<Vec<_>>().join(", "));
    let opts = ValidateOptions { quick: true, filter, ..Default::default() };
    let report = run_validation(&opts, |c| println!("{}", c.line()))?;
    println!("all pass: {}", report.all_pass);
    Ok(())
}

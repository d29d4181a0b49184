//! Exact path simulation and a CSV dump.
//!
//! cargo run --example simulate_paths -- [seed]

use switchou::model::builtin;
use switchou::sim::{paths_to_csv, simulate_paths};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(1), |s| s.parse())?;
    let model = builtin::model_c3();
    let times: Vec<f64> = (0..=10).map(f64::from).collect();
    let paths = simulate_paths(&model, 0, 2.0, 10.0, &times, 3, seed)?;
    for p in &paths {
        println!(
            "path {}: {} switches, Y(10) = {:+.5}",
            p.path_index,
            p.jump_times.len(),
            p.y_at(10.0).unwrap_or(f64::NAN)
        );
    }
    let csv = paths_to_csv(&paths);
    println!("{} CSV rows, first lines:", csv.lines().count() - 1);
    csv.lines().take(4).for_each(|l| println!("  {l}"));
    Ok(())
}

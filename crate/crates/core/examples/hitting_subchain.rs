//! The process observed at entrances into the attractive states, and the
//! critical Laplace exponent of the integrated drift `I_x`.
//!
//! cargo run --release --example hitting_subchain

use switchou::estimate::estimate_laplace;
use switchou::model::builtin;
use switchou::sim::{sample_ix, simulate_hitting_subchain};
use switchou::spectral::{self, exponential_structure};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = builtin::model_c3();
    let sub = simulate_hitting_subchain(&model, 0, 0.0, 8, 4)?;
    print!("{}", sub.to_csv());

    let structure = exponential_structure(&model)?;
    println!("M = {:?}, N = {:?}, F = {:?}", structure.m_set, structure.n_set, structure.f_set);
    let crit = spectral::critical_laplace(&model)?;
    println!("v_c = {:.6} (attained: {})", crit.v_c, crit.boundary_attained);

    let chain = switchou::chain_quantities(&model)?;
    let x0 = structure.n_set[0];
    let ix = sample_ix(&model, x0, 200_000, 5)?;
    let v = 0.5 * crit.v_c;
    let mc = estimate_laplace(&ix, v)?;
    let exact = spectral::laplace_of_ix(&structure, &chain.embedded, v, x0)?;
    println!("E e^(v I_x) at v = {v:.4}: Monte Carlo {:.4} ± {:.4}, linear solve {exact:.4}", mc.value, mc.std_error);
    Ok(())
}

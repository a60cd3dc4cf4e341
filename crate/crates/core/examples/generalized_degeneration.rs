// A resonant Jaynes-Cummings atom never has a negative rate, so it can be
// written as a one-block generalized model. Both forms give the same
// trajectory.

use detflow::corpus;
use detflow::detsolver::{self, SolverConfig};
use detflow::models::{make_jc_model, JcParams, Model};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let params = JcParams { gamma0: 4.0, lambda: 1.0, delta: 0.0 };
    let w = corpus::jc_workload_with(params);
    let standard = make_jc_model(params)?;
    let generalized = Model::from(standard.to_generalized(w.t_max, w.dt)?);

    let cfg = SolverConfig::new(w.dt, w.t_max);
    let a = detsolver::run(&Model::from(standard), &w.initial, &cfg, &[])?;
    let b = detsolver::run(&generalized, &w.initial, &cfg, &[])?;
    let diff = a.samples.iter().zip(&b.samples).map(|(x, y)| x.rho.max_abs_diff(&y.rho)).fold(0.0, f64::max);
    println!("standard N_eff = {}, generalized N_eff = {}", a.n_eff, b.n_eff);
    println!("max entry difference over {} samples: {diff:.2e}", a.samples.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

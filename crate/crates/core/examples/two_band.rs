// Two-band environment as a generalized master equation: two blocks
// exchanging population through a memory kernel, relaxing to `P1 = 1/2`.

use detflow::corpus;
use detflow::detsolver::{self, SolverConfig};
use detflow::models::TwoBandParams;
use detflow::oracle::TwoBandClosedForm;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let w = corpus::two_band_workload();
    let traj = detsolver::run(&w.model, &w.initial, &SolverConfig::new(w.dt, w.t_max), &[])?;
    let exact = TwoBandClosedForm::new(TwoBandParams::REFERENCE, w.t_max, 1e-4)?;

    let mut max_err: f64 = 0.0;
    let mut max_trace_drift: f64 = 0.0;
    for s in &traj.samples {
        max_err = max_err.max((s.rho.entry(0, 0).re - exact.excited_population(s.t)).abs());
        max_trace_drift = max_trace_drift.max((s.block_traces.iter().sum::<f64>() - 1.0).abs());
    }
    for t in [0.0, 5.0, 10.0, 20.0] {
        if let Some(s) = traj.sample_at(t) {
            println!("t = {t:>4}: P1 = {:.6}  tr rho_1 = {:.6}", s.rho.entry(0, 0).re, s.block_traces[0]);
        }
    }
    println!("N_eff = {}, max |P1 - exact| = {max_err:.3e}, trace drift = {max_trace_drift:.1e}", traj.n_eff);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

// Detuned Jaynes-Cummings atom: the two-state ensemble `{psi_1, |g>}`, the
// intervals where the decay rate turns negative, and the exact population
// for comparison.

use detflow::corpus;
use detflow::detsolver::{self, SolverConfig};
use detflow::models::JcParams;
use detflow::oracle;
use detflow::qcore::C64;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let w = corpus::jc_workload();
    let traj = detsolver::run(&w.model, &w.initial, &SolverConfig::new(w.dt, w.t_max), &[])?;
    println!("N_eff = {}", traj.n_eff);

    for iv in detsolver::negative_rate_intervals(&traj, 0, 0, 1) {
        let p_start = traj.sample_at(iv.start).map(|s| s.probabilities[0]).unwrap_or(f64::NAN);
        let p_end = traj.sample_at(iv.end).map(|s| s.probabilities[0]).unwrap_or(f64::NAN);
        println!(
            "gamma < 0 on [{:.3}, {:.3}]: p1 {:.5} -> {:.5}, reversed = {}",
            iv.start, iv.end, p_start, p_end, iv.flow_reversed
        );
    }

    let max_err = traj
        .samples
        .iter()
        .map(|s| {
            let (exact, _) = oracle::jc_closed_form(s.t, &JcParams::DETUNED, 0.64, C64::new(0.48, 0.0));
            (s.rho.entry(0, 0).re - exact).abs()
        })
        .fold(0.0, f64::max);
    println!("max |rho_ee - exact| = {max_err:.3e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

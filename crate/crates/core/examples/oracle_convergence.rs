// First-order convergence of the Euler scheme on randomized three-level
// systems, measured against a dense density-matrix integration.

use detflow::corpus;
use detflow::detsolver::{self, SolverConfig, Trajectory};
use detflow::oracle;

fn max_deviation(a: &Trajectory, b: &Trajectory) -> f64 {
    a.samples.iter().zip(&b.samples).map(|(x, y)| x.rho.max_abs_diff(&y.rho)).fold(0.0, f64::max)
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for seed in 0..3 {
        let w = corpus::random_three_level(seed)?;
        let mut prev: Option<f64> = None;
        for dt in [4e-3_f64, 2e-3, 1e-3] {
            let stride = (4e-3 / dt).round() as usize;
            let cfg = SolverConfig::new(dt, w.t_max).with_stride(stride);
            let det = detsolver::run(&w.model, &w.initial, &cfg, &[])?;
            let reference = oracle::reference_for(&w.model, &w.initial, dt, w.t_max, stride, &[])?;
            let err = max_deviation(&det, &reference);
            match prev {
                Some(p) => println!("seed {seed} dt = {dt:.0e}: error {err:.3e}  ratio {:.2}", p / err),
                None => println!("seed {seed} dt = {dt:.0e}: error {err:.3e}"),
            }
            prev = Some(err);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

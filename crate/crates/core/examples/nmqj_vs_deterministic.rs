// The deterministic ensemble against the stochastic jump method it
// replaces: NMQJ estimates scatter around the deterministic curve with the
// binomial width `sqrt(p (1 - p) / N)`.

use detflow::corpus;
use detflow::detsolver::{self, SolverConfig};
use detflow::models::Model;
use detflow::stochastic::{self, StochasticConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let w = corpus::jc_workload();
    let Model::TimeLocal(model) = &w.model else { unreachable!("the JC workload is time-local") };
    let det = detsolver::run(&w.model, &w.initial, &SolverConfig::new(w.dt, w.t_max), &[])?;

    let n = 10_000;
    for seed in 0..3 {
        let run = stochastic::nmqj_run(model, &w.initial, &StochasticConfig::new(n, seed, w.dt, w.t_max))?;
        for t in [1.0, 2.0, 3.0] {
            let (Some(a), Some(b)) = (det.sample_at(t), run.sample_at(t)) else { continue };
            let p = a.rho.entry(0, 0).re;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            let dev = (b.rho.entry(0, 0).re - p).abs();
            println!("seed {seed} t = {t}: det {p:.5} nmqj {:.5}  |dev| / sigma = {:.2}", b.rho.entry(0, 0).re, dev / sigma);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

// Building a model by hand: a qubit with a modulated splitting and a
// dephasing channel whose rate oscillates in sign. Dephasing maps a state
// to its mirror image under `sigma_z`, so the ensemble closes with two
// states. A transverse drive breaks that mirror symmetry, and the solver
// says so.

use detflow::detsolver::{self, SolverConfig};
use detflow::ensemble::InitialComponent;
use detflow::models::{Channel, Hamiltonian, Model, RateFn, TimeLocalModel};
use detflow::oracle;
use detflow::qcore::{Operator, StateVector, C64};

fn op(rows: [[f64; 2]; 2]) -> detflow::Result<Operator> {
    Operator::from_rows(&rows.map(|r| r.map(|x| C64::new(x, 0.0)).to_vec()))
}

fn dephasing_qubit(transverse: f64) -> detflow::Result<Model> {
    let sigma_x = op([[0.0, 1.0], [1.0, 0.0]])?;
    let sigma_z = op([[1.0, 0.0], [0.0, -1.0]])?;
    let hamiltonian = Hamiltonian::constant(sigma_z.scaled(C64::new(0.5, 0.0)))?
        .with_term(sigma_z.clone(), RateFn::new("0.3 cos(t)", |t| 0.3 * t.cos()))?
        .with_term(sigma_x, RateFn::constant(transverse))?;
    let dephasing = Channel { operator: sigma_z, rate: RateFn::new("0.4 + 0.6 sin(2t)", |t| 0.4 + 0.6 * (2.0 * t).sin()) };
    Ok(TimeLocalModel::new(hamiltonian, vec![dephasing])?.into())
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let plus = StateVector::from_real(&[std::f64::consts::FRAC_1_SQRT_2; 2])?;
    let initial = [InitialComponent::new(0, plus, 1.0)];
    let (dt, t_max, stride) = (1e-3, 4.0, 500);
    let cfg = SolverConfig::new(dt, t_max).with_stride(stride);

    let model = dephasing_qubit(0.0)?;
    let det = detsolver::run(&model, &initial, &cfg, &[])?;
    let reference = oracle::reference_for(&model, &initial, dt, t_max, stride, &[])?;
    println!("N_eff = {}", det.n_eff);
    for (a, b) in det.samples.iter().zip(&reference.samples) {
        println!(
            "t = {:.1}: p = [{:.4}, {:.4}]  |rho_eg| = {:.5}  oracle {:.5}",
            a.t,
            a.probabilities[0],
            a.probabilities[1],
            a.rho.entry(0, 1).norm(),
            b.rho.entry(0, 1).norm()
        );
    }

    let broken = detsolver::run(&dephasing_qubit(0.3)?, &initial, &cfg, &[])?;
    for w in &broken.warnings {
        println!("with a transverse drive: {w}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

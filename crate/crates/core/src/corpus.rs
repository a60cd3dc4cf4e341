//! Reference problems shared by the examples, the benchmark and the test
//! suites.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensemble::InitialComponent;
use crate::error::Result;
use crate::models::{
    make_jc_model, make_two_band_model, Channel, Hamiltonian, JcParams, Model, RateFn, TimeLocalModel,
    TwoBandParams,
};
use crate::qcore::{self, Operator, StateVector, C64};

/// A model with its initial decomposition and step grid.
#[derive(Clone, Debug)]
pub struct Workload {
    pub name: String,
    pub model: Model,
    pub initial: Vec<InitialComponent>,
    pub dt: f64,
    pub t_max: f64,
}

/// Detuned Jaynes-Cummings atom starting in `(4|e> + 3|g>)/5`,
/// `dt = 0.005`, `t in [0, 5]`.
pub fn jc_workload() -> Workload {
    jc_workload_with(JcParams::DETUNED)
}

pub fn jc_workload_with(params: JcParams) -> Workload {
    Workload {
        name: "jc".into(),
        model: make_jc_model(params).expect("valid parameters").into(),
        initial: vec![InitialComponent::new(0, jc_initial_state(), 1.0)],
        dt: 0.005,
        t_max: 5.0,
    }
}

pub fn jc_initial_state() -> StateVector {
    StateVector::from_real(&[0.8, 0.6]).expect("non-empty")
}

/// Two-band environment with `rho_1(0) = |e><e|`, `dt = 0.01`, `t in [0, 20]`.
pub fn two_band_workload() -> Workload {
    Workload {
        name: "two-band".into(),
        model: make_two_band_model(TwoBandParams::REFERENCE).expect("valid parameters").into(),
        initial: vec![InitialComponent::new(0, qcore::excited(), 1.0)],
        dt: 0.01,
        t_max: 20.0,
    }
}

fn random_unitary(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<C64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    a.qr().q()
}

fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> StateVector {
    let v = StateVector::new(
        (0..dim)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
    )
    .expect("non-empty");
    qcore::normalize(&v).expect("random vector is nonzero").0
}

/// A randomly rotated three-level funnel: Hamiltonian diagonal in a random
/// basis `{u0, u1, u2}`, jump operators `a |u0><u1|` and `b |u0><u2|` with
/// rates `sin(2t)` and `0.5 cos(3t)` (both negative on intervals), and a
/// two-state initial mixture. The jump targets stay fixed rays, so the
/// ensemble closes with three states.
pub fn random_three_level(seed: u64) -> Result<Workload> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 3;
    let u = random_unitary(&mut rng, dim);
    let energies: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let diag = DMatrix::from_fn(dim, dim, |i, j| if i == j { C64::new(energies[i], 0.0) } else { C64::new(0.0, 0.0) });
    let mut h = &u * diag * u.adjoint();
    // symmetrize away rounding so the Hermiticity check is exact
    h = (&h + h.adjoint()) * C64::new(0.5, 0.0);

    let mut transition = |from: usize| {
        let amp = C64::from_polar(rng.random_range(0.5..1.5), rng.random_range(0.0..std::f64::consts::TAU));
        let col0 = u.column(0).into_owned();
        let colk = u.column(from).into_owned();
        Operator(col0 * colk.adjoint() * amp)
    };
    let c1 = transition(1);
    let c2 = transition(2);

    let hamiltonian = Hamiltonian::constant(Operator(h))?;
    let channels = vec![
        Channel { operator: c1, rate: RateFn::new("sin(2t)", |t| (2.0 * t).sin()) },
        Channel { operator: c2, rate: RateFn::new("0.5 cos(3t)", |t| 0.5 * (3.0 * t).cos()) },
    ];
    let model = TimeLocalModel::new(hamiltonian, channels)?;

    let pa = rng.random_range(0.4..0.7);
    let a = random_state(&mut rng, dim);
    let b = random_state(&mut rng, dim);
    Ok(Workload {
        name: format!("random-3-level-{seed}"),
        model: model.into(),
        initial: vec![InitialComponent::new(0, a, pa), InitialComponent::new(0, b, 1.0 - pa)],
        dt: 1e-3,
        t_max: 3.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{build_closure, DEFAULT_CAP, DEFAULT_MATCH_TOL};

    #[test]
    fn three_level_closes_with_three_states() {
        for seed in 0..5 {
            let w = random_three_level(seed).unwrap();
            let reg = build_closure(&w.initial, &w.model.dynamics(), DEFAULT_CAP, DEFAULT_MATCH_TOL).unwrap();
            assert_eq!(reg.n_eff(), 3, "seed {seed}");
            assert_eq!(reg.edges().len(), 4);
        }
    }
}

use detflow::corpus;
use detflow::detsolver::{self, Method, SolverConfig};
use detflow::ensemble::InitialComponent;
use detflow::models::{make_jc_model, JcParams, Model};
use detflow::oracle;
use detflow::qcore::{StateVector, C64};
use proptest::prelude::*;

fn jc_case() -> impl Strategy<Value = (JcParams, f64, f64)> {
    (0.5..6.0f64, 0.3..3.0f64, 0.0..15.0f64, 0.0..std::f64::consts::TAU, 0.0..std::f64::consts::PI)
        .prop_map(|(gamma0, lambda, delta, theta, phi)| (JcParams { gamma0, lambda, delta }, theta, phi))
}

fn bloch_state(theta: f64, phi: f64) -> StateVector {
    let (s, c) = (0.5 * theta).sin_cos();
    StateVector::new(vec![C64::new(c, 0.0), C64::from_polar(s, phi)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn jc_invariants_hold((params, theta, phi) in jc_case()) {
        let model = Model::from(make_jc_model(params).unwrap());
        let initial = [InitialComponent::new(0, bloch_state(theta, phi), 1.0)];
        let traj = detsolver::run(&model, &initial, &SolverConfig::new(0.005, 2.0), &[]).unwrap();
        prop_assert!(traj.n_eff <= 2);
        prop_assert!(traj.max_probability_drift() < 1e-12);
        for s in &traj.samples {
            prop_assert!((s.rho.trace() - C64::new(1.0, 0.0)).norm() < 1e-10);
            prop_assert!(s.rho.hermiticity_defect() < 1e-12);
            prop_assert!(s.probabilities.iter().all(|&p| p >= -1e-12));
        }
    }

    #[test]
    fn rk4_tracks_the_exact_jc_population((params, theta, phi) in jc_case()) {
        let model = Model::from(make_jc_model(params).unwrap());
        let psi = bloch_state(theta, phi);
        let initial = [InitialComponent::new(0, psi.clone(), 1.0)];
        let cfg = SolverConfig::new(1e-3, 1.0).with_method(Method::Rk4).with_stride(50);
        let traj = detsolver::run(&model, &initial, &cfg, &[]).unwrap();
        let ee0 = psi.amplitude(0).norm_sqr();
        let eg0 = psi.amplitude(0) * psi.amplitude(1).conj();
        for s in &traj.samples {
            let (ee, eg) = oracle::jc_closed_form(s.t, &params, ee0, eg0);
            prop_assert!((s.rho.entry(0, 0).re - ee).abs() < 1e-8, "t = {}", s.t);
            prop_assert!((s.rho.entry(0, 1) - eg).norm() < 1e-8, "t = {}", s.t);
        }
    }

    #[test]
    fn rk4_barely_needs_renormalization(seed in 0u64..5) {
        let w = corpus::random_three_level(seed).unwrap();
        let cfg = SolverConfig::new(w.dt, 1.0).with_stride(100).with_method(Method::Rk4);
        let mut raw = cfg.clone();
        raw.renormalize_each_step = false;
        let a = detsolver::run(&w.model, &w.initial, &raw, &[]).unwrap();
        let b = detsolver::run(&w.model, &w.initial, &cfg, &[]).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            prop_assert!(x.norm_drift < 1e-10);
            prop_assert!(x.rho.max_abs_diff(&y.rho) < 1e-9);
        }
    }
}

//! Ground truth that does not go through the ensemble machinery: direct
//! RK4 integration of the master equations on full (block) density
//! matrices, and closed-form solutions of the two worked examples.

use crate::detsolver::{block_traces, observe, Sample, Trajectory};
use crate::ensemble::InitialComponent;
use crate::error::{Error, Result};
use crate::models::{
    jc_decay_rate, two_band_kernel, GeneralizedModel, JcParams, Model, TimeLocalModel, TwoBandParams,
};
use crate::qcore::{trapezoid_cumulative, DensityMatrix, Operator, SampledFunction, C64};

/// Trace drift tolerated by [`dense_integrate`].
pub const TRACE_DRIFT_TOL: f64 = 1e-8;

/// Ratio between a solver step and the oracle step used to certify it.
pub const REFERENCE_REFINEMENT: usize = 50;

fn commutator_term(h: &Operator, rho: &DensityMatrix) -> nalgebra::DMatrix<C64> {
    (&h.0 * &rho.0 - &rho.0 * &h.0) * C64::new(0.0, -1.0)
}

/// `-i[H, rho] + sum_j gamma_j(t) (C rho C^+ - {C^+ C, rho}/2)`.
pub fn dense_rhs_standard(rho: &DensityMatrix, model: &TimeLocalModel, t: f64) -> DensityMatrix {
    let mut d = commutator_term(&model.hamiltonian().at(t), rho);
    for ch in model.channels() {
        let g = ch.rate.eval(t);
        if g == 0.0 {
            continue;
        }
        let c = &ch.operator.0;
        let cdc = c.adjoint() * c;
        let jump = c * &rho.0 * c.adjoint();
        let anti = &cdc * &rho.0 + &rho.0 * &cdc;
        d += (jump - anti * C64::new(0.5, 0.0)) * C64::new(g, 0.0);
    }
    DensityMatrix(d)
}

/// Block right-hand sides of the generalized equation. Coupling `c` feeds
/// `m^2 R rho_source R^+` into its target block and removes
/// `m^2 {R^+ R, rho_source}/2` from its source block.
pub fn dense_rhs_generalized(blocks: &[DensityMatrix], model: &GeneralizedModel, t: f64) -> Vec<DensityMatrix> {
    let mut out: Vec<DensityMatrix> = blocks
        .iter()
        .zip(model.block_hamiltonians())
        .map(|(rho, h)| DensityMatrix(commutator_term(&h.at(t), rho)))
        .collect();
    for c in model.couplings() {
        let m = c.magnitude.eval(t);
        let w = m * m;
        if w == 0.0 {
            continue;
        }
        let r = &c.operator.0;
        let src = &blocks[c.source].0;
        let rdr = r.adjoint() * r;
        out[c.target].0 += r * src * r.adjoint() * C64::new(w, 0.0);
        out[c.source].0 -= (&rdr * src + src * &rdr) * C64::new(0.5 * w, 0.0);
    }
    out
}

/// Block density matrices `rho_i = sum p |psi><psi|` of a decomposition.
pub fn initial_blocks(initial: &[InitialComponent], block_count: usize, dim: usize) -> Result<Vec<DensityMatrix>> {
    let mut blocks = vec![DensityMatrix::zeros(dim); block_count];
    for c in initial {
        if c.block >= block_count {
            return Err(Error::Invalid(format!("initial component in unknown block {}", c.block)));
        }
        if c.state.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: c.state.dim() });
        }
        blocks[c.block].0 += c.state.projector(c.probability).0;
    }
    Ok(blocks)
}

fn rhs(model: &Model, blocks: &[DensityMatrix], t: f64) -> Vec<DensityMatrix> {
    match model {
        Model::TimeLocal(m) => vec![dense_rhs_standard(&blocks[0], m, t)],
        Model::Generalized(m) => dense_rhs_generalized(blocks, m, t),
    }
}

fn weights(model: &Model, t: f64) -> Vec<f64> {
    match model {
        Model::TimeLocal(m) => m.channels().iter().map(|c| c.rate.eval(t)).collect(),
        Model::Generalized(m) => m
            .couplings()
            .iter()
            .map(|c| {
                let v = c.magnitude.eval(t);
                v * v
            })
            .collect(),
    }
}

fn axpy(base: &[DensityMatrix], h: f64, d: &[DensityMatrix]) -> Vec<DensityMatrix> {
    base.iter()
        .zip(d)
        .map(|(b, k)| DensityMatrix(&b.0 + &k.0 * C64::new(h, 0.0)))
        .collect()
}

/// Fixed-step classical RK4 on the dense equation, sampled every
/// `record_stride` steps and at the end.
pub fn dense_integrate(
    model: &Model,
    initial: Vec<DensityMatrix>,
    dt: f64,
    t_max: f64,
    record_stride: usize,
    observables: &[Operator],
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::Invalid(format!("dt must be positive, got {dt}")));
    }
    if record_stride == 0 {
        return Err(Error::Invalid("record_stride must be at least 1".into()));
    }
    if initial.len() != model.block_count() {
        return Err(Error::Invalid(format!(
            "{} initial blocks for a model with {}",
            initial.len(),
            model.block_count()
        )));
    }
    let steps = (t_max / dt).round() as usize;
    let trace0: f64 = initial.iter().map(|b| b.trace().re).sum();

    let sample = |blocks: &[DensityMatrix], t: f64| {
        let mut total = DensityMatrix::zeros(model.dim());
        for b in blocks {
            total.0 += &b.0;
        }
        Sample {
            t,
            probabilities: Vec::new(),
            block_traces: block_traces(blocks),
            observables: observe(&total, observables),
            rho: total,
            weights: weights(model, t),
            probability_drift: 0.0,
            norm_drift: 0.0,
            edge_mismatch: 0.0,
        }
    };

    let mut blocks = initial;
    let mut samples = vec![sample(&blocks, 0.0)];
    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = rhs(model, &blocks, t);
        let k2 = rhs(model, &axpy(&blocks, 0.5 * dt, &k1), t + 0.5 * dt);
        let k3 = rhs(model, &axpy(&blocks, 0.5 * dt, &k2), t + 0.5 * dt);
        let k4 = rhs(model, &axpy(&blocks, dt, &k3), t + dt);
        for (i, b) in blocks.iter_mut().enumerate() {
            let incr = &k1[i].0 + (&k2[i].0 + &k3[i].0) * C64::new(2.0, 0.0) + &k4[i].0;
            b.0 += incr * C64::new(dt / 6.0, 0.0);
        }
        let step = k + 1;
        let t_next = step as f64 * dt;
        let trace: f64 = blocks.iter().map(|b| b.trace().re).sum();
        if (trace - trace0).abs() > TRACE_DRIFT_TOL {
            return Err(Error::TraceDrift { drift: trace - trace0, t: t_next });
        }
        if step % record_stride == 0 || step == steps {
            samples.push(sample(&blocks, t_next));
        }
    }
    Ok(Trajectory {
        method: "oracle".into(),
        n_eff: 0,
        steps,
        samples,
        warnings: Vec::new(),
        final_registry: None,
    })
}

/// Dense reference for a solver grid: oracle step `dt / 50`, sampled on the
/// solver's own record grid.
pub fn reference_for(
    model: &Model,
    initial: &[InitialComponent],
    dt: f64,
    t_max: f64,
    record_stride: usize,
    observables: &[Operator],
) -> Result<Trajectory> {
    let blocks = initial_blocks(initial, model.block_count(), model.dim())?;
    dense_integrate(
        model,
        blocks,
        dt / REFERENCE_REFINEMENT as f64,
        t_max,
        record_stride * REFERENCE_REFINEMENT,
        observables,
    )
}

// ---------------------------------------------------------------------------
// Closed forms.

fn damped_integrals(t: f64, p: &JcParams) -> (f64, f64) {
    let (l, d) = (p.lambda, p.delta);
    let den = l * l + d * d;
    let e = (-l * t).exp();
    let (s, c) = (d * t).sin_cos();
    // int_0^t e^{-l s} cos(d s) ds and int_0^t e^{-l s} sin(d s) ds
    let ic = (l + e * (d * s - l * c)) / den;
    let is = (d - e * (l * s + d * c)) / den;
    (ic, is)
}

/// `int_0^t gamma(s) ds`, exact.
pub fn jc_decay_integral(t: f64, p: &JcParams) -> f64 {
    let (l, d) = (p.lambda, p.delta);
    let (ic, is) = damped_integrals(t, p);
    p.gamma0 * l * l / (l * l + d * d) * (t - ic + d / l * is)
}

/// `int_0^t S(s) ds`, exact; zero on resonance.
pub fn jc_lamb_shift_integral(t: f64, p: &JcParams) -> f64 {
    let (l, d) = (p.lambda, p.delta);
    if d == 0.0 {
        return 0.0;
    }
    let (ic, is) = damped_integrals(t, p);
    p.gamma0 * l * d / (l * l + d * d) * (t - ic - l / d * is)
}

/// `(rho_ee(t), rho_eg(t))` of the Jaynes-Cummings equation:
/// `rho_ee(0) e^{-G(t)}` and `rho_eg(0) e^{-G(t)/2 - i Sigma(t)/2}`.
pub fn jc_closed_form(t: f64, p: &JcParams, rho_ee0: f64, rho_eg0: C64) -> (f64, C64) {
    let g = jc_decay_integral(t, p);
    let s = jc_lamb_shift_integral(t, p);
    (rho_ee0 * (-g).exp(), rho_eg0 * C64::new(-0.5 * g, -0.5 * s).exp())
}

/// Closed-form excited population of the two-band model for
/// `rho_1(0) = |e><e|`, `rho_2(0) = 0`:
/// `p(t) = g1/(g1+g2) + (1 - g1/(g1+g2)) exp(-2 (g1+g2) int_0^t F)`.
///
/// `int_0^t F` is obtained by integrating the kernel twice with the
/// trapezoid rule on a fine grid, independently of the sine-integral
/// expression the model itself uses.
#[derive(Clone, Debug)]
pub struct TwoBandClosedForm {
    params: TwoBandParams,
    double_integral: SampledFunction,
}

impl TwoBandClosedForm {
    pub fn new(params: TwoBandParams, t_max: f64, grid_step: f64) -> Result<Self> {
        params.validate()?;
        let n = (t_max / grid_step).ceil() as usize + 2;
        let kernel = SampledFunction::tabulate(0.0, grid_step, n, |t| two_band_kernel(t, &params))?;
        let single = trapezoid_cumulative(&kernel)?;
        let double_integral = trapezoid_cumulative(&single)?;
        Ok(Self { params, double_integral })
    }

    /// `int_0^t int_0^s h`.
    pub fn memory_double_integral(&self, t: f64) -> f64 {
        self.double_integral.value_at(t)
    }

    pub fn excited_population(&self, t: f64) -> f64 {
        let (g1, g2) = (self.params.gamma1, self.params.gamma2);
        let sum = g1 + g2;
        if sum == 0.0 {
            return 1.0;
        }
        let plateau = g1 / sum;
        plateau + (1.0 - plateau) * (-2.0 * sum * self.memory_double_integral(t)).exp()
    }
}

/// One-off evaluation of [`TwoBandClosedForm::excited_population`].
pub fn two_band_closed_form(t: f64, params: &TwoBandParams) -> Result<f64> {
    Ok(TwoBandClosedForm::new(*params, t.max(1e-3), 1e-4)?.excited_population(t))
}

/// Fine-grid trapezoid of `gamma`, an independent check on
/// [`jc_decay_integral`].
pub fn jc_decay_integral_numeric(t: f64, p: &JcParams, grid_step: f64) -> Result<f64> {
    let n = (t / grid_step).round() as usize + 1;
    let step = t / (n - 1) as f64;
    let table = SampledFunction::tabulate(0.0, step, n, |s| jc_decay_rate(s, p))?;
    Ok(trapezoid_cumulative(&table)?.last())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{jc_lamb_shift, make_jc_model, make_two_band_model};
    use crate::qcore::{self, excited, ground, StateVector};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    const RESONANT: JcParams = JcParams { gamma0: 4.0, lambda: 1.0, delta: 0.0 };

    fn jc_model() -> TimeLocalModel {
        make_jc_model(JcParams::DETUNED).unwrap()
    }

    #[test]
    fn ground_state_is_stationary() {
        let d = dense_rhs_standard(&ground().projector(1.0), &jc_model(), 0.7);
        assert!(d.0.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn excited_state_decays_at_gamma() {
        let t = 0.4;
        let g = jc_decay_rate(t, &JcParams::DETUNED);
        let d = dense_rhs_standard(&excited().projector(1.0), &jc_model(), t);
        assert_abs_diff_eq!(d.entry(0, 0).re, -g, epsilon = 1e-15);
        assert_abs_diff_eq!(d.entry(1, 1).re, g, epsilon = 1e-15);
    }

    #[test]
    fn coherence_rotates_and_decays() {
        let t = 0.9;
        let p = JcParams::DETUNED;
        let mut rho = DensityMatrix::zeros(2);
        rho.0[(0, 1)] = C64::new(1.0, 0.0);
        let d = dense_rhs_standard(&rho, &jc_model(), t);
        let want = -C64::new(0.5 * jc_decay_rate(t, &p), 0.5 * jc_lamb_shift(t, &p));
        assert!((d.entry(0, 1) - want).norm() < 1e-15);
    }

    #[test]
    fn two_band_rhs_examples() {
        let p = TwoBandParams::REFERENCE;
        let m = make_two_band_model(p).unwrap();
        let blocks = vec![excited().projector(1.0), DensityMatrix::zeros(2)];
        let d0 = dense_rhs_generalized(&blocks, &m, 0.0);
        assert!(d0.iter().all(|b| b.0.iter().all(|z| z.norm() == 0.0)));
        let t = 6.0;
        let d = dense_rhs_generalized(&blocks, &m, t);
        let f = crate::models::two_band_memory_integral(t, &p);
        assert_abs_diff_eq!(d[1].entry(1, 1).re, 2.0 * f, epsilon = 1e-14);
        assert_abs_diff_eq!(d[0].entry(0, 0).re, -2.0 * f, epsilon = 1e-14);
    }

    fn arb_hermitian(dim: usize) -> impl Strategy<Value = DensityMatrix> {
        prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), dim * dim).prop_map(move |v| {
            let a = DMatrix::from_iterator(dim, dim, v.into_iter().map(|(r, i)| C64::new(r, i)));
            DensityMatrix(&a + a.adjoint())
        })
    }

    proptest! {
        #[test]
        fn standard_rhs_is_traceless(rho in arb_hermitian(2), t in 0.0..5.0f64) {
            let d = dense_rhs_standard(&rho, &jc_model(), t);
            prop_assert!(d.trace().norm() <= 1e-12);
        }

        #[test]
        fn generalized_rhs_preserves_total_trace(a in arb_hermitian(2), b in arb_hermitian(2), t in 0.0..30.0f64) {
            let m = make_two_band_model(TwoBandParams { delta_eps: 0.31, gamma1: 1.3, gamma2: 0.6 }).unwrap();
            let d = dense_rhs_generalized(&[a, b], &m, t);
            prop_assert!((d[0].trace() + d[1].trace()).norm() <= 1e-12);
        }
    }

    #[test]
    fn zero_model_is_constant() {
        use crate::models::{Channel, Hamiltonian, RateFn};
        let m = Model::from(
            TimeLocalModel::new(
                Hamiltonian::zero(2),
                vec![Channel { operator: qcore::sigma_minus(), rate: RateFn::constant(0.0) }],
            )
            .unwrap(),
        );
        let rho0 = StateVector::from_real(&[0.8, 0.6]).unwrap().projector(1.0);
        let traj = dense_integrate(&m, vec![rho0.clone()], 0.01, 1.0, 10, &[]).unwrap();
        assert!(traj.samples.iter().all(|s| s.rho == rho0));
    }

    #[test]
    fn analytic_integrals_match_quadrature() {
        for p in [JcParams::DETUNED, RESONANT, JcParams { gamma0: 2.0, lambda: 0.5, delta: -3.0 }] {
            for t in [0.3, 1.0, 4.5] {
                let num = jc_decay_integral_numeric(t, &p, 1e-5).unwrap();
                assert_abs_diff_eq!(jc_decay_integral(t, &p), num, epsilon = 1e-8);
                let table = SampledFunction::tabulate(0.0, t / 200_000.0, 200_001, |s| jc_lamb_shift(s, &p)).unwrap();
                let num_s = trapezoid_cumulative(&table).unwrap().last();
                assert_abs_diff_eq!(jc_lamb_shift_integral(t, &p), num_s, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn jc_closed_form_examples() {
        let rho_eg0 = C64::new(0.48, 0.0);
        let (ee, eg) = jc_closed_form(0.0, &JcParams::DETUNED, 0.64, rho_eg0);
        assert_eq!(ee, 0.64);
        assert!((eg - rho_eg0).norm() < 1e-16);

        assert_abs_diff_eq!(jc_decay_integral(1.0, &RESONANT), 4.0 * (-1.0f64).exp(), epsilon = 1e-14);
        let (ee, _) = jc_closed_form(1.0, &RESONANT, 0.64, rho_eg0);
        assert_abs_diff_eq!(ee, 0.64 * (-4.0 * (-1.0f64).exp()).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(ee, 0.146_929_137_344, epsilon = 1e-12);
    }

    #[test]
    fn jc_closed_form_stays_positive() {
        for k in 0..=500 {
            let t = k as f64 * 0.01;
            let (ee, eg) = jc_closed_form(t, &JcParams::DETUNED, 0.64, C64::new(0.48, 0.0));
            assert!(eg.norm_sqr() <= ee * (1.0 - ee) + 1e-15, "t = {t}");
        }
    }

    #[test]
    fn two_band_closed_form_examples() {
        let p = TwoBandParams::REFERENCE;
        assert_abs_diff_eq!(two_band_closed_form(0.0, &p).unwrap(), 1.0, epsilon = 1e-15);
        // F saturates at 1/2, so int F grows linearly and p -> 1/2
        assert_abs_diff_eq!(two_band_closed_form(400.0, &p).unwrap(), 0.5, epsilon = 1e-12);
        let q = TwoBandParams { delta_eps: 0.31, gamma1: 2.0, gamma2: 1.0 };
        assert_abs_diff_eq!(two_band_closed_form(400.0, &q).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn dense_matches_jc_closed_form() {
        let p = JcParams::DETUNED;
        let m = Model::from(make_jc_model(p).unwrap());
        let rho0 = StateVector::from_real(&[0.8, 0.6]).unwrap().projector(1.0);
        let traj = dense_integrate(&m, vec![rho0], 1e-4, 5.0, 1000, &[]).unwrap();
        assert_eq!(traj.samples.len(), 51);
        for s in &traj.samples {
            let (ee, eg) = jc_closed_form(s.t, &p, 0.64, C64::new(0.48, 0.0));
            assert_abs_diff_eq!(s.rho.entry(0, 0).re, ee, epsilon = 1e-8);
            assert!((s.rho.entry(0, 1) - eg).norm() < 1e-8);
            assert!((s.rho.trace().re - 1.0).abs() <= 1e-10);
            assert!(s.rho.hermiticity_defect() <= 1e-10);
        }
    }

    #[test]
    fn dense_matches_two_band_closed_form() {
        let p = TwoBandParams::REFERENCE;
        let m = Model::from(make_two_band_model(p).unwrap());
        let cf = TwoBandClosedForm::new(p, 20.0, 1e-4).unwrap();
        let blocks = vec![excited().projector(1.0), DensityMatrix::zeros(2)];
        let traj = dense_integrate(&m, blocks, 1e-4, 20.0, 1000, &[]).unwrap();
        for s in &traj.samples {
            assert_abs_diff_eq!(s.rho.entry(0, 0).re, cf.excited_population(s.t), epsilon = 1e-6);
            assert!((s.block_traces.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }
}

//! Master-equation models: the standard time-local form with possibly
//! negative rates, the generalized block form, and the two worked examples
//! (detuned Jaynes-Cummings and the two-band environment).
//!
//! Both model kinds lower to [`Dynamics`], the flat description the
//! ensemble solver and the stochastic baselines consume: a list of
//! block Hamiltonians plus jump channels, each channel carrying a constant
//! operator direction and a scalar time-dependent weight.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::qcore::{self, sine_integral, Operator, SampledFunction, C64};

/// A real coefficient as a function of time.
#[derive(Clone)]
pub struct RateFn {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    label: String,
}

impl RateFn {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            label: label.into(),
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(format!("const({value})"), move |_| value)
    }

    /// Linear interpolation of a table, held constant past either end.
    pub fn tabulated(table: SampledFunction) -> Self {
        Self::new(format!("table({} samples)", table.len()), move |t| table.value_at(t))
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for RateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RateFn({})", self.label)
    }
}

/// `H(t) = sum_k c_k(t) H_k` with Hermitian `H_k` and real `c_k`.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    dim: usize,
    terms: Vec<(Operator, RateFn)>,
}

impl Hamiltonian {
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub fn constant(op: Operator) -> Result<Self> {
        Self::zero(op.dim()).with_term(op, RateFn::constant(1.0))
    }

    pub fn with_term(mut self, op: Operator, coefficient: RateFn) -> Result<Self> {
        if op.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: op.dim(),
            });
        }
        if !op.is_hermitian(1e-12) {
            return Err(Error::Invalid(format!(
                "Hamiltonian term is not Hermitian (defect {:e})",
                op.hermiticity_defect()
            )));
        }
        self.terms.push((op, coefficient));
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(Operator, RateFn)] {
        &self.terms
    }

    pub fn at(&self, t: f64) -> Operator {
        let mut h = Operator::zeros(self.dim);
        self.write_at(t, &mut h);
        h
    }

    /// [`Hamiltonian::at`] into an existing operator of the same dimension.
    pub(crate) fn write_at(&self, t: f64, out: &mut Operator) {
        out.0.fill(C64::new(0.0, 0.0));
        for (op, c) in &self.terms {
            let c = C64::new(c.eval(t), 0.0);
            out.0.zip_apply(&op.0, |a, b| *a += b * c);
        }
    }
}

/// One dissipation channel `gamma_j(t) D[C_j]` of a time-local model.
#[derive(Clone, Debug)]
pub struct Channel {
    pub operator: Operator,
    pub rate: RateFn,
}

/// `drho/dt = -i[H(t), rho] + sum_j gamma_j(t) (C_j rho C_j^+ - {C_j^+ C_j, rho}/2)`
/// with rates that may turn negative.
#[derive(Clone, Debug)]
pub struct TimeLocalModel {
    hamiltonian: Hamiltonian,
    channels: Vec<Channel>,
}

impl TimeLocalModel {
    pub fn new(hamiltonian: Hamiltonian, channels: Vec<Channel>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Invalid("a time-local model needs at least one channel".into()));
        }
        for ch in &channels {
            if ch.operator.dim() != hamiltonian.dim() {
                return Err(Error::DimensionMismatch {
                    expected: hamiltonian.dim(),
                    found: ch.operator.dim(),
                });
            }
        }
        Ok(Self { hamiltonian, channels })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// Recasts the model as a single-block generalized model with
    /// `R_j = sqrt(gamma_j(t)) C_j`. Only meaningful while every rate is
    /// non-negative, which is checked on `[0, t_max]` with step `dt`.
    pub fn to_generalized(&self, t_max: f64, dt: f64) -> Result<GeneralizedModel> {
        let steps = (t_max / dt).round() as usize;
        for (j, ch) in self.channels.iter().enumerate() {
            for k in 0..=steps {
                let t = k as f64 * dt;
                let g = ch.rate.eval(t);
                if g < 0.0 {
                    return Err(Error::Invalid(format!(
                        "channel {j} has negative rate {g:e} at t = {t}; no block form exists"
                    )));
                }
            }
        }
        let couplings = self
            .channels
            .iter()
            .enumerate()
            .map(|(j, ch)| {
                let rate = ch.rate.clone();
                Coupling {
                    index: j,
                    source: 0,
                    target: 0,
                    operator: ch.operator.clone(),
                    magnitude: RateFn::new(format!("sqrt({})", rate.label()), move |t| {
                        rate.eval(t).max(0.0).sqrt()
                    }),
                }
            })
            .collect();
        GeneralizedModel::new(vec![self.hamiltonian.clone()], couplings)
    }
}

/// A block-coupling term `R^{ij}_lambda` mapping block `source` (j) into
/// block `target` (i). The effective operator is `magnitude(t) * operator`.
#[derive(Clone, Debug)]
pub struct Coupling {
    pub index: usize,
    pub source: usize,
    pub target: usize,
    pub operator: Operator,
    pub magnitude: RateFn,
}

/// The coupled block equations
/// `drho_i/dt = -i[H_i, rho_i] + sum_{j,l} (R^{ij}_l rho_j R^{ij+}_l - {R^{ji+}_l R^{ji}_l, rho_i}/2)`,
/// whose physical state is `sum_i rho_i`.
#[derive(Clone, Debug)]
pub struct GeneralizedModel {
    block_hamiltonians: Vec<Hamiltonian>,
    couplings: Vec<Coupling>,
}

impl GeneralizedModel {
    pub fn new(block_hamiltonians: Vec<Hamiltonian>, couplings: Vec<Coupling>) -> Result<Self> {
        let n = block_hamiltonians.len();
        if n == 0 {
            return Err(Error::Invalid("a generalized model needs at least one block".into()));
        }
        let dim = block_hamiltonians[0].dim();
        for h in &block_hamiltonians {
            if h.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: h.dim() });
            }
        }
        for c in &couplings {
            if c.source >= n || c.target >= n {
                return Err(Error::Invalid(format!(
                    "coupling {} references block {}->{} but there are {n} blocks",
                    c.index, c.source, c.target
                )));
            }
            if c.operator.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: c.operator.dim() });
            }
        }
        Ok(Self { block_hamiltonians, couplings })
    }

    pub fn dim(&self) -> usize {
        self.block_hamiltonians[0].dim()
    }

    pub fn block_count(&self) -> usize {
        self.block_hamiltonians.len()
    }

    pub fn block_hamiltonians(&self) -> &[Hamiltonian] {
        &self.block_hamiltonians
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }
}

/// Either model kind.
#[derive(Clone, Debug)]
pub enum Model {
    TimeLocal(TimeLocalModel),
    Generalized(GeneralizedModel),
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::TimeLocal(m) => m.dim(),
            Model::Generalized(m) => m.dim(),
        }
    }

    pub fn block_count(&self) -> usize {
        match self {
            Model::TimeLocal(_) => 1,
            Model::Generalized(m) => m.block_count(),
        }
    }

    pub fn dynamics(&self) -> Dynamics {
        match self {
            Model::TimeLocal(m) => Dynamics::from(m),
            Model::Generalized(m) => Dynamics::from(m),
        }
    }
}

impl From<TimeLocalModel> for Model {
    fn from(m: TimeLocalModel) -> Self {
        Model::TimeLocal(m)
    }
}

impl From<GeneralizedModel> for Model {
    fn from(m: GeneralizedModel) -> Self {
        Model::Generalized(m)
    }
}

/// How a channel's scalar coefficient enters the rate `w(t) |C psi|^2`.
#[derive(Clone, Debug)]
pub enum Weight {
    /// `w = gamma(t)`, sign unrestricted.
    Rate(RateFn),
    /// `w = m(t)^2` for an operator of time-dependent magnitude `m(t)`.
    Magnitude(RateFn),
}

impl Weight {
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Weight::Rate(g) => g.eval(t),
            Weight::Magnitude(m) => {
                let v = m.eval(t);
                v * v
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct JumpChannel {
    pub source_block: usize,
    pub target_block: usize,
    pub operator: Operator,
    /// `C^+ C`, cached for the drift generator.
    pub gram: Operator,
    pub weight: Weight,
}

/// Flattened dynamics shared by every solver.
#[derive(Clone, Debug)]
pub struct Dynamics {
    dim: usize,
    hamiltonians: Vec<Hamiltonian>,
    channels: Vec<JumpChannel>,
}

impl Dynamics {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_count(&self) -> usize {
        self.hamiltonians.len()
    }

    pub fn hamiltonian(&self, block: usize) -> &Hamiltonian {
        &self.hamiltonians[block]
    }

    pub fn channels(&self) -> &[JumpChannel] {
        &self.channels
    }

    /// Channel weights at time `t`, in channel order.
    pub fn weights_at(&self, t: f64) -> Vec<f64> {
        self.channels.iter().map(|c| c.weight.at(t)).collect()
    }

    pub(crate) fn write_weights(&self, t: f64, out: &mut [f64]) {
        for (w, c) in out.iter_mut().zip(&self.channels) {
            *w = c.weight.at(t);
        }
    }

    /// Whether any channel weight is ever allowed to be negative.
    pub fn is_standard(&self) -> bool {
        self.channels.iter().all(|c| matches!(c.weight, Weight::Rate(_)))
    }
}

fn jump_channel(source: usize, target: usize, op: &Operator, weight: Weight) -> JumpChannel {
    JumpChannel {
        source_block: source,
        target_block: target,
        gram: op.adjoint().product(op),
        operator: op.clone(),
        weight,
    }
}

impl From<&TimeLocalModel> for Dynamics {
    fn from(m: &TimeLocalModel) -> Self {
        Dynamics {
            dim: m.dim(),
            hamiltonians: vec![m.hamiltonian.clone()],
            channels: m
                .channels
                .iter()
                .map(|c| jump_channel(0, 0, &c.operator, Weight::Rate(c.rate.clone())))
                .collect(),
        }
    }
}

impl From<&GeneralizedModel> for Dynamics {
    fn from(m: &GeneralizedModel) -> Self {
        Dynamics {
            dim: m.dim(),
            hamiltonians: m.block_hamiltonians.clone(),
            channels: m
                .couplings
                .iter()
                .map(|c| {
                    jump_channel(c.source, c.target, &c.operator, Weight::Magnitude(c.magnitude.clone()))
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Detuned Jaynes-Cummings model with a Lorentzian cavity.

/// Lorentzian-cavity parameters. Time is measured in units of `1/lambda`
/// when `lambda = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JcParams {
    pub gamma0: f64,
    pub lambda: f64,
    /// Atom-cavity detuning `omega_0 - omega_c`.
    pub delta: f64,
}

impl JcParams {
    /// The strongly detuned parameter set `gamma0 = 4, lambda = 1, delta = 12`.
    pub const DETUNED: JcParams = JcParams { gamma0: 4.0, lambda: 1.0, delta: 12.0 };

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !(self.gamma0 >= 0.0) || !self.delta.is_finite() {
            return Err(Error::Invalid(format!(
                "JC parameters need lambda > 0, gamma0 >= 0, finite delta; got {self:?}"
            )));
        }
        Ok(())
    }

    fn prefactor(&self) -> f64 {
        self.gamma0 * self.lambda / (self.lambda * self.lambda + self.delta * self.delta)
    }
}

/// Second-order decay rate `gamma(t)`; negative on intervals when the
/// detuning is large compared with the cavity width.
pub fn jc_decay_rate(t: f64, p: &JcParams) -> f64 {
    let (l, d) = (p.lambda, p.delta);
    p.prefactor() * l * (1.0 - (-l * t).exp() * ((d * t).cos() - d / l * (d * t).sin()))
}

/// Second-order Lamb shift `S(t)`. Vanishes identically on resonance.
pub fn jc_lamb_shift(t: f64, p: &JcParams) -> f64 {
    let (l, d) = (p.lambda, p.delta);
    if d == 0.0 {
        return 0.0;
    }
    p.prefactor() * d * (1.0 - (-l * t).exp() * ((d * t).cos() + l / d * (d * t).sin()))
}

/// Lorentzian spectral density as a function of `x = omega_0 - delta - omega`.
pub fn jc_spectral_density(omega_offset: f64, p: &JcParams) -> f64 {
    p.gamma0 * p.lambda * p.lambda / (2.0 * PI * (omega_offset * omega_offset + p.lambda * p.lambda))
}

/// Two-level atom with `H = S(t)/2 sigma+ sigma-` and the single channel
/// `gamma(t) D[sigma-]`. Basis order is `(|e>, |g>)`.
pub fn make_jc_model(p: JcParams) -> Result<TimeLocalModel> {
    p.validate()?;
    let sm = qcore::sigma_minus();
    let number = qcore::sigma_plus().product(&sm);
    let h = Hamiltonian::zero(2).with_term(
        number,
        RateFn::new("S(t)/2", move |t| 0.5 * jc_lamb_shift(t, &p)),
    )?;
    let rate = RateFn::new("gamma(t)", move |t| jc_decay_rate(t, &p));
    TimeLocalModel::new(h, vec![Channel { operator: sm, rate }])
}

// ---------------------------------------------------------------------------
// Two-state system coupled to two finite energy bands.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoBandParams {
    /// Band width.
    pub delta_eps: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl TwoBandParams {
    pub const REFERENCE: TwoBandParams = TwoBandParams { delta_eps: 0.31, gamma1: 1.0, gamma2: 1.0 };

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_eps > 0.0) || !(self.gamma1 >= 0.0) || !(self.gamma2 >= 0.0) {
            return Err(Error::Invalid(format!(
                "two-band parameters need delta_eps > 0 and non-negative rates; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Environment memory kernel `h(t) = de sin^2(de t/2) / (2 pi (de t/2)^2)`.
pub fn two_band_kernel(t: f64, p: &TwoBandParams) -> f64 {
    let x = 0.5 * p.delta_eps * t;
    if x.abs() < 1e-8 {
        // sin^2 x / x^2 = 1 - x^2/3 + ...
        return p.delta_eps / (2.0 * PI) * (1.0 - x * x / 3.0);
    }
    let s = x.sin();
    p.delta_eps * s * s / (2.0 * PI * x * x)
}

/// `F(t) = int_0^t h(tau) dtau = (Si(de t) - sin^2(x)/x) / pi`, `x = de t/2`.
///
/// The memory integral `int_0^t h(t - t1) dt1` of the two-band equation
/// reduces to this by substitution, which makes the model time-local.
pub fn two_band_memory_integral(t: f64, p: &TwoBandParams) -> f64 {
    let x = 0.5 * p.delta_eps * t;
    if x.abs() < 1e-4 {
        // integrated Taylor expansion of the kernel
        return p.delta_eps / (2.0 * PI) * (t - p.delta_eps * p.delta_eps * t * t * t / 36.0);
    }
    let s = x.sin();
    (sine_integral(2.0 * x) - s * s / x) / PI
}

/// Two blocks (index 0 = "1", index 1 = "2"), zero block Hamiltonians,
/// `R^{12} = sqrt(2 g1 F(t)) sigma+` lifting block 2 into block 1 and
/// `R^{21} = sqrt(2 g2 F(t)) sigma-` lowering block 1 into block 2.
pub fn make_two_band_model(p: TwoBandParams) -> Result<GeneralizedModel> {
    p.validate()?;
    let up = Coupling {
        index: 0,
        source: 1,
        target: 0,
        operator: qcore::sigma_plus(),
        magnitude: RateFn::new("sqrt(2 g1 F(t))", move |t| {
            (2.0 * p.gamma1 * two_band_memory_integral(t, &p)).max(0.0).sqrt()
        }),
    };
    let down = Coupling {
        index: 0,
        source: 0,
        target: 1,
        operator: qcore::sigma_minus(),
        magnitude: RateFn::new("sqrt(2 g2 F(t))", move |t| {
            (2.0 * p.gamma2 * two_band_memory_integral(t, &p)).max(0.0).sqrt()
        }),
    };
    GeneralizedModel::new(vec![Hamiltonian::zero(2), Hamiltonian::zero(2)], vec![up, down])
}

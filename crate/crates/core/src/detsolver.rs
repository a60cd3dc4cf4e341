//! Deterministic ensemble solver.
//!
//! Each ensemble state follows the norm-preserving nonlinear equation
//! `i d|psi>/dt = G(psi)|psi>` with
//! `G = H - (i/2) sum w C^+C + (i/2) sum w |C psi|^2`, and the probabilities
//! exchange weight along the transition map:
//!
//! ```text
//! dp_a/dt = - sum_j Gamma_a^j p_a + sum'_{(a', j) -> a} Gamma_{a'}^j p_{a'},
//! Gamma_a^j = w_j(t) |C_j psi_a|^2
//! ```
//!
//! With `w = gamma(t)` this is the standard time-local equation, negative
//! rates included (flow simply reverses); with `w = m(t)^2` and one block
//! per density-matrix component it is the generalized block equation. No
//! random numbers are involved.

use crate::ensemble::{self, EnsembleRegistry, InitialComponent, TransitionEdge};
use crate::error::{Error, Result};
use crate::models::{Dynamics, Model};
use nalgebra::DVector;

use crate::qcore::{self, DensityMatrix, Operator, StateVector, C64};

/// Negative probabilities below this are reported as a step-size failure.
pub const NEGATIVE_PROBABILITY_TOL: f64 = 1e-9;

/// Largest per-step norm drift tolerated when states are not renormalized.
pub const NORM_DRIFT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Euler,
    Rk4,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            other => Err(Error::Config(format!("unknown integration method {other:?} (euler | rk4)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_max: f64,
    pub method: Method,
    pub renormalize_each_step: bool,
    /// Steps between recorded samples; the final step is always recorded.
    pub record_stride: usize,
    pub match_tol: f64,
    pub cap: usize,
}

impl SolverConfig {
    pub fn new(dt: f64, t_max: f64) -> Self {
        Self {
            dt,
            t_max,
            method: Method::Euler,
            renormalize_each_step: true,
            record_stride: 1,
            match_tol: ensemble::DEFAULT_MATCH_TOL,
            cap: ensemble::DEFAULT_CAP,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= self.dt) || !self.t_max.is_finite() {
            return Err(Error::Invalid(format!(
                "t_max must be at least dt, got t_max = {} with dt = {}",
                self.t_max, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::Invalid("record_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps covering `[0, t_max]`.
    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

/// `Gamma` for every (state, channel) pair at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    pub t: f64,
    channels: usize,
    values: Vec<f64>,
}

impl RateTable {
    pub fn get(&self, state: usize, channel: usize) -> f64 {
        self.values[state * self.channels + channel]
    }

    pub fn n_states(&self) -> usize {
        self.values.len() / self.channels.max(1)
    }

    /// Total outgoing rate of `state`.
    pub fn total_out(&self, state: usize) -> f64 {
        self.values[state * self.channels..(state + 1) * self.channels].iter().sum()
    }
}

/// One recorded instant of a run.
#[derive(Clone, Debug)]
pub struct Sample {
    pub t: f64,
    /// Ensemble probabilities (or occupancy fractions for particle methods).
    /// Empty for the dense oracle.
    pub probabilities: Vec<f64>,
    pub rho: DensityMatrix,
    pub block_traces: Vec<f64>,
    pub observables: Vec<C64>,
    /// Channel weights `w_j(t)`.
    pub weights: Vec<f64>,
    /// `|sum p - 1|`.
    pub probability_drift: f64,
    /// Largest `| |psi| - 1 |` seen in the preceding step, before any
    /// renormalization.
    pub norm_drift: f64,
    /// Largest transition-map defect (see [`EnsembleRegistry::edge_mismatch`]).
    pub edge_mismatch: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub method: String,
    pub n_eff: usize,
    pub steps: usize,
    pub samples: Vec<Sample>,
    pub warnings: Vec<String>,
    pub final_registry: Option<EnsembleRegistry>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// `rho[row][col]` along the run.
    pub fn entry_series(&self, row: usize, col: usize) -> Vec<C64> {
        self.samples.iter().map(|s| s.rho.entry(row, col)).collect()
    }

    /// `rho_ee` in the `(|e>, |g>)` convention: the real part of `rho[0][0]`.
    pub fn rho_ee(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.rho.entry(0, 0).re).collect()
    }

    pub fn probability_series(&self, state: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.probabilities[state]).collect()
    }

    pub fn sample_at(&self, t: f64) -> Option<&Sample> {
        self.samples.iter().find(|s| (s.t - t).abs() < 1e-9)
    }

    pub fn max_probability_drift(&self) -> f64 {
        self.samples.iter().map(|s| s.probability_drift).fold(0.0, f64::max)
    }
}

/// A maximal run of recorded steps on which the weight of one channel is
/// negative. `start` and `end` are the first and last recorded times with a
/// negative weight; the step leaving `end` is included in the flow check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NegativeRateInterval {
    pub start: f64,
    pub end: f64,
    /// `p[source]` never decreased and `p[target]` never increased across
    /// the steps of the interval.
    pub flow_reversed: bool,
}

/// Scans `traj` for intervals where `channel` has a negative weight and
/// checks the direction of probability flow between ensemble states
/// `source` and `target` on each.
pub fn negative_rate_intervals(
    traj: &Trajectory,
    channel: usize,
    source: usize,
    target: usize,
) -> Vec<NegativeRateInterval> {
    let mut out: Vec<NegativeRateInterval> = Vec::new();
    let mut open = false;
    for pair in traj.samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.weights[channel] >= 0.0 {
            open = false;
            continue;
        }
        let reversed = b.probabilities[source] >= a.probabilities[source]
            && b.probabilities[target] <= a.probabilities[target];
        match out.last_mut() {
            Some(last) if open => {
                last.end = a.t;
                last.flow_reversed &= reversed;
            }
            _ => out.push(NegativeRateInterval { start: a.t, end: a.t, flow_reversed: reversed }),
        }
        open = true;
    }
    out
}

const ONE: C64 = C64::new(1.0, 0.0);

/// Drift of `psi` written into `out`; `scratch` holds `C^+C psi`.
fn drift_into(
    out: &mut DVector<C64>,
    scratch: &mut DVector<C64>,
    psi: &DVector<C64>,
    block: usize,
    h: &Operator,
    dynamics: &Dynamics,
    weights: &[f64],
) {
    let norm_sqr = psi.norm_squared();
    qcore::matvec_into(out, C64::new(0.0, -1.0), &h.0, psi);
    let mut compensation = 0.0;
    for (ch, &w) in dynamics.channels().iter().zip(weights) {
        if ch.source_block != block || w == 0.0 {
            continue;
        }
        qcore::matvec_into(scratch, ONE, &ch.gram.0, psi);
        compensation += w * psi.dotc(scratch).re / norm_sqr;
        out.axpy(C64::new(-0.5 * w, 0.0), scratch, ONE);
    }
    out.axpy(C64::new(0.5 * compensation, 0.0), psi, ONE);
}

fn drift_with(psi: &StateVector, block: usize, h: &Operator, dynamics: &Dynamics, weights: &[f64]) -> StateVector {
    let mut out = DVector::zeros(psi.dim());
    let mut scratch = DVector::zeros(psi.dim());
    drift_into(&mut out, &mut scratch, &psi.0, block, h, dynamics, weights);
    StateVector(out)
}

/// `d|psi>/dt = -i G(psi)(t) |psi>` for a state of `block`.
///
/// The rate-compensation term uses `|C psi|^2 / |psi|^2`, which coincides
/// with the normalized form on unit vectors and makes the flow norm
/// preserving for any input.
pub fn drift_generator(state: &StateVector, block: usize, dynamics: &Dynamics, t: f64) -> StateVector {
    let h = dynamics.hamiltonian(block).at(t);
    drift_with(state, block, &h, dynamics, &dynamics.weights_at(t))
}

fn rates_into<'a>(
    table: &mut RateTable,
    scratch: &mut DVector<C64>,
    members: impl Iterator<Item = (usize, &'a StateVector)>,
    dynamics: &Dynamics,
    weights: &[f64],
    t: f64,
) {
    let channels = dynamics.channels().len();
    table.t = t;
    table.channels = channels;
    table.values.clear();
    for (block, psi) in members {
        let norm_sqr = psi.0.norm_squared();
        for (ch, &w) in dynamics.channels().iter().zip(weights) {
            let mut rate = 0.0;
            if ch.source_block == block && w != 0.0 {
                qcore::matvec_into(scratch, ONE, &ch.gram.0, &psi.0);
                rate = w * psi.0.dotc(scratch).re / norm_sqr;
            }
            table.values.push(rate);
        }
    }
}

fn rates_with<'a>(
    members: impl Iterator<Item = (usize, &'a StateVector)>,
    dynamics: &Dynamics,
    weights: &[f64],
    t: f64,
) -> RateTable {
    let mut table = RateTable { t, channels: 0, values: Vec::new() };
    let mut scratch = DVector::zeros(dynamics.dim());
    rates_into(&mut table, &mut scratch, members, dynamics, weights, t);
    table
}

/// `Gamma_a^j(t) = w_j(t) |C_j psi_a|^2` for every registered state.
pub fn compute_rates(registry: &EnsembleRegistry, dynamics: &Dynamics, t: f64) -> RateTable {
    let members = registry.members().iter().map(|m| (m.block, &m.state));
    rates_with(members, dynamics, &dynamics.weights_at(t), t)
}

/// Net probability derivative along the transition map, accumulated in
/// ascending edge order.
fn probability_derivative(probs: &[f64], rates: &RateTable, edges: &[TransitionEdge]) -> Vec<f64> {
    let mut d = vec![0.0; probs.len()];
    for e in edges {
        let flow = rates.get(e.source, e.channel) * probs[e.source];
        d[e.source] -= flow;
        d[e.target] += flow;
    }
    d
}

fn check_probabilities(probs: &[f64], t: f64) -> Result<()> {
    for (state, &value) in probs.iter().enumerate() {
        if value < -NEGATIVE_PROBABILITY_TOL {
            return Err(Error::NegativeProbability { state, value, t });
        }
    }
    Ok(())
}

/// One explicit Euler step of the probability flow. Every outgoing term is
/// added back to its target, so the sum changes only by rounding.
pub fn step_probabilities(
    probs: &[f64],
    rates: &RateTable,
    transitions: &[TransitionEdge],
    dt: f64,
) -> Result<Vec<f64>> {
    let mut next = probs.to_vec();
    euler_flow(probs, &mut next, rates, transitions, dt)?;
    Ok(next)
}

/// `next` must start as a copy of `probs`.
fn euler_flow(probs: &[f64], next: &mut [f64], rates: &RateTable, transitions: &[TransitionEdge], dt: f64) -> Result<()> {
    for e in transitions {
        let flow = dt * rates.get(e.source, e.channel) * probs[e.source];
        next[e.source] -= flow;
        next[e.target] += flow;
    }
    check_probabilities(next, rates.t + dt)
}

/// Renormalizes (or checks) a freshly stepped state; returns its norm drift.
fn settle(psi: &mut StateVector, index: usize, t: f64, renormalize: bool) -> Result<f64> {
    let norm = psi.0.norm_squared().sqrt();
    let drift = (norm - 1.0).abs();
    if renormalize {
        psi.0.unscale_mut(norm);
    } else if drift > NORM_DRIFT_TOL {
        return Err(Error::NormDrift { state: index, drift, t });
    }
    Ok(drift)
}

/// Advances every ensemble state from `t` to `t + dt` with the configured
/// integrator. Returns the largest norm drift observed before
/// renormalization.
pub fn step_states(registry: &mut EnsembleRegistry, dynamics: &Dynamics, t: f64, config: &SolverConfig) -> Result<f64> {
    let mut cache = StepCache::new(dynamics, t, config.dt, config.method);
    advance_states(registry, dynamics, t, config, &mut cache)
}

fn advance_states(
    registry: &mut EnsembleRegistry,
    dynamics: &Dynamics,
    t: f64,
    config: &SolverConfig,
    cache: &mut StepCache,
) -> Result<f64> {
    let dt = config.dt;
    let mut worst: f64 = 0.0;
    let StepCache { h, w, k, scratch, .. } = cache;
    for (index, m) in registry.members_mut().iter_mut().enumerate() {
        match config.method {
            Method::Euler => {
                drift_into(k, scratch, &m.state.0, m.block, &h[0][m.block], dynamics, &w[0]);
                m.state.0.axpy(C64::new(dt, 0.0), k, ONE);
            }
            Method::Rk4 => {
                let f = |stage: usize, s: &StateVector| drift_with(s, m.block, &h[stage][m.block], dynamics, &w[stage]);
                let psi = &m.state;
                let half = C64::new(0.5 * dt, 0.0);
                let k1 = f(0, psi);
                let k2 = f(1, &psi.axpy(half, &k1));
                let k3 = f(1, &psi.axpy(half, &k2));
                let k4 = f(2, &psi.axpy(C64::new(dt, 0.0), &k3));
                m.state = rk4_combine(psi, dt, &k1, &k2, &k3, &k4);
            }
        }
        worst = worst.max(settle(&mut m.state, index, t + dt, config.renormalize_each_step)?);
    }
    Ok(worst)
}

fn rk4_combine(psi: &StateVector, dt: f64, k1: &StateVector, k2: &StateVector, k3: &StateVector, k4: &StateVector) -> StateVector {
    let sum = &k1.0 + (&k2.0 + &k3.0) * C64::new(2.0, 0.0) + &k4.0;
    StateVector(&psi.0 + sum * C64::new(dt / 6.0, 0.0))
}

/// Hamiltonians and weights at `t`, and for RK4 also at `t + dt/2` and
/// `t + dt`. Refreshed in place every step.
struct StepCache {
    offsets: &'static [f64],
    h: Vec<Vec<Operator>>,
    w: Vec<Vec<f64>>,
    rates: RateTable,
    probs: Vec<f64>,
    k: DVector<C64>,
    scratch: DVector<C64>,
}

impl StepCache {
    fn new(dynamics: &Dynamics, t: f64, dt: f64, method: Method) -> Self {
        let offsets: &'static [f64] = match method {
            Method::Euler => &[0.0],
            Method::Rk4 => &[0.0, 0.5, 1.0],
        };
        let mut cache = Self {
            offsets,
            h: vec![vec![Operator::zeros(dynamics.dim()); dynamics.block_count()]; offsets.len()],
            w: vec![vec![0.0; dynamics.channels().len()]; offsets.len()],
            rates: RateTable { t, channels: 0, values: Vec::new() },
            probs: Vec::new(),
            k: DVector::zeros(dynamics.dim()),
            scratch: DVector::zeros(dynamics.dim()),
        };
        cache.refresh(dynamics, t, dt);
        cache
    }

    fn refresh(&mut self, dynamics: &Dynamics, t: f64, dt: f64) {
        for (i, f) in self.offsets.iter().enumerate() {
            let at = t + f * dt;
            for (b, h) in self.h[i].iter_mut().enumerate() {
                dynamics.hamiltonian(b).write_at(at, h);
            }
            dynamics.write_weights(at, &mut self.w[i]);
        }
    }
}

/// Classical RK4 on the coupled (states, probabilities) system.
fn rk4_joint_step(registry: &mut EnsembleRegistry, dynamics: &Dynamics, t: f64, config: &SolverConfig, cache: &StepCache) -> Result<f64> {
    let dt = config.dt;
    let blocks: Vec<usize> = registry.members().iter().map(|m| m.block).collect();
    let edges = registry.edges().to_vec();

    let eval = |stage: usize, states: &[StateVector], probs: &[f64]| -> (Vec<StateVector>, Vec<f64>) {
        let rates = rates_with(blocks.iter().copied().zip(states.iter()), dynamics, &cache.w[stage], t);
        let dp = probability_derivative(probs, &rates, &edges);
        let ds = states
            .iter()
            .zip(&blocks)
            .map(|(s, &b)| drift_with(s, b, &cache.h[stage][b], dynamics, &cache.w[stage]))
            .collect();
        (ds, dp)
    };
    let shift = |states: &[StateVector], probs: &[f64], ds: &[StateVector], dp: &[f64], h: f64| {
        let s: Vec<StateVector> = states.iter().zip(ds).map(|(s, d)| s.axpy(C64::new(h, 0.0), d)).collect();
        let p: Vec<f64> = probs.iter().zip(dp).map(|(p, d)| p + h * d).collect();
        (s, p)
    };

    let s0: Vec<StateVector> = registry.members().iter().map(|m| m.state.clone()).collect();
    let p0 = registry.probabilities().to_vec();
    let (ks1, kp1) = eval(0, &s0, &p0);
    let (s1, p1) = shift(&s0, &p0, &ks1, &kp1, 0.5 * dt);
    let (ks2, kp2) = eval(1, &s1, &p1);
    let (s2, p2) = shift(&s0, &p0, &ks2, &kp2, 0.5 * dt);
    let (ks3, kp3) = eval(1, &s2, &p2);
    let (s3, p3) = shift(&s0, &p0, &ks3, &kp3, dt);
    let (ks4, kp4) = eval(2, &s3, &p3);

    let probs: Vec<f64> = (0..p0.len())
        .map(|a| p0[a] + dt / 6.0 * (kp1[a] + 2.0 * (kp2[a] + kp3[a]) + kp4[a]))
        .collect();
    check_probabilities(&probs, t + dt)?;

    let mut worst: f64 = 0.0;
    for (index, m) in registry.members_mut().iter_mut().enumerate() {
        m.state = rk4_combine(&s0[index], dt, &ks1[index], &ks2[index], &ks3[index], &ks4[index]);
        worst = worst.max(settle(&mut m.state, index, t + dt, config.renormalize_each_step)?);
    }
    *registry.probabilities_mut() = probs;
    Ok(worst)
}

pub(crate) fn block_traces(blocks: &[DensityMatrix]) -> Vec<f64> {
    blocks.iter().map(|b| b.trace().re).collect()
}

pub(crate) fn observe(rho: &DensityMatrix, observables: &[Operator]) -> Vec<C64> {
    observables.iter().map(|o| o.expectation_in(rho)).collect()
}

/// Snapshot of `registry` at `t`; `weights` are the channel weights at `t`.
pub(crate) fn record(
    registry: &EnsembleRegistry,
    dynamics: &Dynamics,
    t: f64,
    weights: &[f64],
    norm_drift: f64,
    observables: &[Operator],
) -> Sample {
    let (rho, block_traces) = ensemble::density_and_traces(registry);
    Sample {
        t,
        probabilities: registry.probabilities().to_vec(),
        block_traces,
        observables: observe(&rho, observables),
        rho,
        weights: weights.to_vec(),
        probability_drift: (registry.probability_sum() - 1.0).abs(),
        norm_drift,
        edge_mismatch: registry.edge_mismatch(dynamics),
    }
}

/// Runs the deterministic ensemble method on `model`.
pub fn run(
    model: &Model,
    initial: &[InitialComponent],
    config: &SolverConfig,
    observables: &[Operator],
) -> Result<Trajectory> {
    run_dynamics(&model.dynamics(), initial, config, observables)
}

/// [`run`] on already-lowered dynamics.
pub fn run_dynamics(
    dynamics: &Dynamics,
    initial: &[InitialComponent],
    config: &SolverConfig,
    observables: &[Operator],
) -> Result<Trajectory> {
    config.validate()?;
    for o in observables {
        if o.dim() != dynamics.dim() {
            return Err(Error::DimensionMismatch { expected: dynamics.dim(), found: o.dim() });
        }
    }
    let mut registry = ensemble::build_closure(initial, dynamics, config.cap, config.match_tol)?;
    let steps = config.steps();
    let mut samples = Vec::with_capacity(steps / config.record_stride + 2);
    let mut warnings = Vec::new();
    let mut cache = StepCache::new(dynamics, 0.0, config.dt, config.method);
    samples.push(record(&registry, dynamics, 0.0, &cache.w[0], 0.0, observables));

    let mut norm_drift: f64 = 0.0;
    for k in 0..steps {
        let t = k as f64 * config.dt;
        let drift = match config.method {
            Method::Euler => {
                let members = registry.members().iter().map(|m| (m.block, &m.state));
                rates_into(&mut cache.rates, &mut cache.scratch, members, dynamics, &cache.w[0], t);
                cache.probs.clear();
                cache.probs.extend_from_slice(registry.probabilities());
                let (next, edges) = registry.probabilities_and_edges_mut();
                euler_flow(&cache.probs, next, &cache.rates, edges, config.dt)?;
                // the state flow does not read the probabilities
                advance_states(&mut registry, dynamics, t, config, &mut cache)?
            }
            Method::Rk4 => rk4_joint_step(&mut registry, dynamics, t, config, &cache)?,
        };
        norm_drift = norm_drift.max(drift);

        let step = k + 1;
        let t_next = step as f64 * config.dt;
        cache.refresh(dynamics, t_next, config.dt);
        if step % config.record_stride == 0 || step == steps {
            let sample = record(&registry, dynamics, t_next, &cache.w[0], norm_drift, observables);
            if sample.edge_mismatch > 10.0 * config.match_tol && !warnings.iter().any(|w: &String| w.starts_with("transition map")) {
                let msg = format!(
                    "transition map drifted by {:e} at t = {}; jump targets no longer match evolved states",
                    sample.edge_mismatch, sample.t
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
            for (a, b) in registry.coincident_pairs(config.match_tol) {
                let msg = format!("ensemble states {a} and {b} coincide at t = {}", sample.t);
                if !warnings.iter().any(|w| w.starts_with(&format!("ensemble states {a} and {b} "))) {
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
            samples.push(sample);
            norm_drift = 0.0;
        }
    }

    Ok(Trajectory {
        method: format!("det-{}", config.method.name()),
        n_eff: registry.n_eff(),
        steps,
        samples,
        warnings,
        final_registry: Some(registry),
    })
}

//! Stochastic baselines: the non-Markovian quantum jump (NMQJ) particle
//! ensemble for time-local models and the Monte Carlo unraveling of the
//! generalized block equation.
//!
//! Both share the deterministic state evolution and the transition map of
//! the ensemble solver; only the probabilities are replaced by particle
//! occupancies that change through random jumps. In a positive-rate
//! channel a particle in `a` jumps to `target(a, j)` with probability
//! `dt Gamma_a^j`. In a negative-rate channel a particle in the target
//! `a'` jumps back to the source `a` with probability
//! `dt (n_a / n_a') |Gamma_a^j|`, so the reverse flow depends on the
//! occupancy of other states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detsolver::{self, compute_rates, step_states, Method, SolverConfig, Trajectory};
use crate::ensemble::{self, EnsembleRegistry, InitialComponent};
use crate::error::{Error, Result};
use crate::models::{Dynamics, GeneralizedModel, TimeLocalModel};
use crate::qcore::Operator;

/// Identity of the random stream, recorded in run metadata.
pub const RNG_IDENTITY: &str = "ChaCha8Rng (rand_chacha 0.9) seeded with seed_from_u64; one uniform per particle per candidate jump per step, states ascending";

#[derive(Clone, Debug)]
pub struct StochasticConfig {
    /// Number of particles (trajectories).
    pub n: usize,
    pub seed: u64,
    pub dt: f64,
    pub t_max: f64,
    pub record_stride: usize,
    /// Integrator for the deterministic state evolution.
    pub method: Method,
}

impl StochasticConfig {
    pub fn new(n: usize, seed: u64, dt: f64, t_max: f64) -> Self {
        Self {
            n,
            seed,
            dt,
            t_max,
            record_stride: 1,
            method: Method::Euler,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    fn solver_config(&self) -> SolverConfig {
        let mut c = SolverConfig::new(self.dt, self.t_max).with_stride(self.record_stride);
        c.method = self.method;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Invalid("particle count must be at least 1".into()));
        }
        self.solver_config().validate()
    }
}

/// Particle counts per ensemble state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParticleEnsemble {
    pub occupancy: Vec<usize>,
    pub seed: u64,
}

impl ParticleEnsemble {
    /// Distributes `n` particles by largest remainder so that the counts
    /// are `round(n p)` where possible and always sum to `n`.
    pub fn from_probabilities(probabilities: &[f64], n: usize, seed: u64) -> Self {
        let exact: Vec<f64> = probabilities.iter().map(|p| p.max(0.0) * n as f64).collect();
        let mut occupancy: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let assigned: usize = occupancy.iter().sum();
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &k in order.iter().take(n.saturating_sub(assigned)) {
            occupancy[k] += 1;
        }
        Self { occupancy, seed }
    }

    pub fn total(&self) -> usize {
        self.occupancy.iter().sum()
    }

    pub fn fractions(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.occupancy.iter().map(|&c| c as f64 / n).collect()
    }
}

/// NMQJ on a time-local model, rates of either sign.
pub fn nmqj_run(model: &TimeLocalModel, initial: &[InitialComponent], config: &StochasticConfig) -> Result<Trajectory> {
    particle_run(&Dynamics::from(model), initial, config, "nmqj", &[])
}

/// Monte Carlo unraveling of a generalized block model.
pub fn mc_unravel_run(
    model: &GeneralizedModel,
    initial: &[InitialComponent],
    config: &StochasticConfig,
) -> Result<Trajectory> {
    particle_run(&Dynamics::from(model), initial, config, "mc-unravel", &[])
}

struct Candidate {
    destination: usize,
    probability: f64,
}

/// Per-state jump candidates in ascending edge order.
fn candidates(
    registry: &EnsembleRegistry,
    rates: &detsolver::RateTable,
    occupancy: &[usize],
    dt: f64,
) -> Result<Vec<Vec<Candidate>>> {
    let mut out: Vec<Vec<Candidate>> = (0..registry.n_eff()).map(|_| Vec::new()).collect();
    for e in registry.edges() {
        let gamma = rates.get(e.source, e.channel);
        if gamma >= 0.0 {
            out[e.source].push(Candidate {
                destination: e.target,
                probability: dt * gamma,
            });
        } else {
            let holders = occupancy[e.target];
            let probability = if holders == 0 {
                0.0
            } else {
                dt * occupancy[e.source] as f64 / holders as f64 * gamma.abs()
            };
            out[e.target].push(Candidate {
                destination: e.source,
                probability,
            });
        }
    }
    for c in out.iter().flatten() {
        if c.probability > 1.0 {
            return Err(Error::JumpProbability {
                probability: c.probability,
                t: rates.t,
            });
        }
    }
    Ok(out)
}

/// Shared particle engine. Public for callers that already hold lowered
/// [`Dynamics`]; `observables` are evaluated on the estimated density
/// matrix.
pub fn particle_run(
    dynamics: &Dynamics,
    initial: &[InitialComponent],
    config: &StochasticConfig,
    label: &str,
    observables: &[Operator],
) -> Result<Trajectory> {
    config.validate()?;
    let solver = config.solver_config();
    let mut registry = ensemble::build_closure(initial, dynamics, solver.cap, solver.match_tol)?;
    let mut particles = ParticleEnsemble::from_probabilities(registry.probabilities(), config.n, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let snapshot = |registry: &EnsembleRegistry, particles: &ParticleEnsemble, t: f64, norm_drift: f64| {
        let view = registry
            .clone()
            .with_probabilities(particles.fractions())
            .expect("one count per state");
        detsolver::record(&view, dynamics, t, &dynamics.weights_at(t), norm_drift, observables)
    };

    let steps = solver.steps();
    let mut samples = vec![snapshot(&registry, &particles, 0.0, 0.0)];
    let mut norm_drift: f64 = 0.0;
    for k in 0..steps {
        let t = k as f64 * config.dt;
        let rates = compute_rates(&registry, dynamics, t);
        let options = candidates(&registry, &rates, &particles.occupancy, config.dt)?;
        let mut next = particles.occupancy.clone();
        for (state, opts) in options.iter().enumerate() {
            for _ in 0..particles.occupancy[state] {
                let mut moved = false;
                for c in opts {
                    let u: f64 = rng.random();
                    if !moved && u < c.probability {
                        moved = true;
                        next[state] -= 1;
                        next[c.destination] += 1;
                    }
                }
            }
        }
        particles.occupancy = next;
        norm_drift = norm_drift.max(step_states(&mut registry, dynamics, t, &solver)?);

        let step = k + 1;
        if step % config.record_stride == 0 || step == steps {
            samples.push(snapshot(&registry, &particles, step as f64 * config.dt, norm_drift));
            norm_drift = 0.0;
        }
    }

    Ok(Trajectory {
        method: label.to_string(),
        n_eff: registry.n_eff(),
        steps,
        samples,
        warnings: Vec::new(),
        final_registry: Some(registry),
    })
}

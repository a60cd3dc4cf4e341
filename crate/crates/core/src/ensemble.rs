//! The effective pure-state ensemble.
//!
//! Starting from a user-supplied decomposition of the initial state, every
//! jump channel is applied to every registered state until no new
//! (normalized, phase-free) state appears. The resulting registry holds the
//! `N_eff` states, their probabilities, and the fixed transition map
//! `(source, channel) -> target` along which probability flows.

use crate::error::{Error, Result};
use crate::models::Dynamics;
use crate::qcore::{self, DensityMatrix, StateVector, C64};

/// Default tolerance on `|1 - |<a|b>||` when identifying states.
pub const DEFAULT_MATCH_TOL: f64 = 1e-8;

/// Default limit on the number of ensemble states.
pub const DEFAULT_CAP: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Member {
    pub block: usize,
    pub state: StateVector,
}

/// `normalize(C_channel |source>) == |target>` up to a global phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransitionEdge {
    pub source: usize,
    pub channel: usize,
    pub target: usize,
}

/// One term `p |psi><psi|` of the initial decomposition of block `block`.
#[derive(Clone, Debug)]
pub struct InitialComponent {
    pub block: usize,
    pub state: StateVector,
    pub probability: f64,
}

impl InitialComponent {
    pub fn new(block: usize, state: StateVector, probability: f64) -> Self {
        Self { block, state, probability }
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleRegistry {
    block_count: usize,
    members: Vec<Member>,
    probabilities: Vec<f64>,
    edges: Vec<TransitionEdge>,
}

impl EnsembleRegistry {
    /// An edge-free registry; used for hand-built ensembles and in tests.
    pub fn from_members(block_count: usize, members: Vec<Member>, probabilities: Vec<f64>) -> Result<Self> {
        if members.len() != probabilities.len() {
            return Err(Error::Invalid("one probability per ensemble state is required".into()));
        }
        if members.iter().any(|m| m.block >= block_count) {
            return Err(Error::Invalid("ensemble state references an unknown block".into()));
        }
        Ok(Self {
            block_count,
            members,
            probabilities,
            edges: Vec::new(),
        })
    }

    pub fn n_eff(&self) -> usize {
        self.members.len()
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn state(&self, index: usize) -> &StateVector {
        &self.members[index].state
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn edges(&self) -> &[TransitionEdge] {
        &self.edges
    }

    pub fn dim(&self) -> usize {
        self.members.first().map_or(0, |m| m.state.dim())
    }

    /// Replaces the probabilities, e.g. to inspect a hand-picked mixture.
    pub fn with_probabilities(mut self, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != self.members.len() {
            return Err(Error::Invalid(format!(
                "expected {} probabilities, got {}",
                self.members.len(),
                probabilities.len()
            )));
        }
        self.probabilities = probabilities;
        Ok(self)
    }

    pub fn probability_sum(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub(crate) fn probabilities_mut(&mut self) -> &mut Vec<f64> {
        &mut self.probabilities
    }

    pub(crate) fn probabilities_and_edges_mut(&mut self) -> (&mut [f64], &[TransitionEdge]) {
        (&mut self.probabilities, &self.edges)
    }

    pub(crate) fn members_mut(&mut self) -> &mut [Member] {
        &mut self.members
    }

    /// Largest `|1 - |<target|normalize(C source)>||` over all edges at the
    /// current states. Zero when the transition map is still exact.
    pub fn edge_mismatch(&self, dynamics: &Dynamics) -> f64 {
        let mut image = nalgebra::DVector::zeros(self.dim());
        self.edges
            .iter()
            .map(|e| {
                let ch = &dynamics.channels()[e.channel];
                qcore::matvec_into(&mut image, C64::new(1.0, 0.0), &ch.operator.0, &self.state(e.source).0);
                let norm_sqr = image.norm_squared();
                if norm_sqr < qcore::ZERO_NORM * qcore::ZERO_NORM {
                    1.0
                } else {
                    (1.0 - (self.state(e.target).0.dotc(&image).norm_sqr() / norm_sqr).sqrt()).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// Pairs of distinct states in the same block that have drifted into
    /// coincidence. States are never merged.
    pub fn coincident_pairs(&self, tol: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.members.len() {
            for b in a + 1..self.members.len() {
                if self.members[a].block == self.members[b].block
                    && overlap_defect(&self.members[a].state, &self.members[b].state) <= tol
                {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

#[inline]
fn overlap_defect(a: &StateVector, b: &StateVector) -> f64 {
    (1.0 - a.inner(b).norm()).abs()
}

/// Finds the state of `block` equal to `candidate` up to a global phase.
pub fn match_state(
    candidate: &StateVector,
    registry: &EnsembleRegistry,
    block: usize,
    tol: f64,
) -> Result<Option<usize>> {
    find_match(candidate, &registry.members, block, tol)
}

fn find_match(candidate: &StateVector, members: &[Member], block: usize, tol: f64) -> Result<Option<usize>> {
    let mut found = None;
    for (k, m) in members.iter().enumerate() {
        if m.block != block || overlap_defect(&m.state, candidate) > tol {
            continue;
        }
        if let Some(prev) = found {
            return Err(Error::AmbiguousMatch(prev, k));
        }
        found = Some(k);
    }
    Ok(found)
}

/// Registers the initial decomposition and closes it under every jump
/// channel. New states enter with probability zero.
pub fn build_closure(
    initial: &[InitialComponent],
    dynamics: &Dynamics,
    cap: usize,
    tol: f64,
) -> Result<EnsembleRegistry> {
    if initial.is_empty() {
        return Err(Error::Invalid("initial decomposition is empty".into()));
    }
    let total: f64 = initial.iter().map(|c| c.probability).sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Invalid(format!("initial probabilities sum to {total}, not 1")));
    }
    let mut members: Vec<Member> = Vec::new();
    let mut probabilities = Vec::new();
    for (k, c) in initial.iter().enumerate() {
        if c.state.dim() != dynamics.dim() {
            return Err(Error::DimensionMismatch {
                expected: dynamics.dim(),
                found: c.state.dim(),
            });
        }
        if c.block >= dynamics.block_count() {
            return Err(Error::Invalid(format!(
                "initial component {k} is in block {} but the model has {} blocks",
                c.block,
                dynamics.block_count()
            )));
        }
        if !(c.probability >= 0.0) {
            return Err(Error::Invalid(format!("initial component {k} has probability {}", c.probability)));
        }
        if (c.state.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::Invalid(format!(
                "initial component {k} is not normalized (norm {})",
                c.state.norm()
            )));
        }
        if let Some(j) = find_match(&c.state, &members, c.block, tol)? {
            return Err(Error::Invalid(format!(
                "initial components {j} and {k} are the same state; combine their probabilities"
            )));
        }
        members.push(Member { block: c.block, state: c.state.clone() });
        probabilities.push(c.probability);
    }

    let mut edges = Vec::new();
    let mut next = 0;
    while next < members.len() {
        let source = next;
        next += 1;
        for (k, ch) in dynamics.channels().iter().enumerate() {
            if ch.source_block != members[source].block {
                continue;
            }
            let image = qcore::apply(&ch.operator, &members[source].state)?;
            let target_state = match qcore::normalize(&image) {
                Ok((v, _)) => v,
                Err(Error::ZeroNorm(_)) => continue,
                Err(e) => return Err(e),
            };
            let target = match find_match(&target_state, &members, ch.target_block, tol)? {
                Some(t) => t,
                None => {
                    if members.len() >= cap {
                        return Err(Error::ClosureCap { cap });
                    }
                    members.push(Member {
                        block: ch.target_block,
                        state: target_state,
                    });
                    probabilities.push(0.0);
                    members.len() - 1
                }
            };
            edges.push(TransitionEdge { source, channel: k, target });
        }
    }

    Ok(EnsembleRegistry {
        block_count: dynamics.block_count(),
        members,
        probabilities,
        edges,
    })
}

/// `rho_i = sum_a p_i^a |psi_i^a><psi_i^a|` per block and their sum.
pub fn assemble_density(registry: &EnsembleRegistry) -> (Vec<DensityMatrix>, DensityMatrix) {
    let dim = registry.dim();
    let mut blocks = vec![DensityMatrix::zeros(dim); registry.block_count()];
    for (m, &p) in registry.members.iter().zip(&registry.probabilities) {
        add_projector(&mut blocks[m.block], &m.state, p);
    }
    let mut total = DensityMatrix::zeros(dim);
    for b in &blocks {
        total.0 += &b.0;
    }
    (blocks, total)
}

/// The total density matrix and the trace of every block, without
/// materializing the blocks.
pub fn density_and_traces(registry: &EnsembleRegistry) -> (DensityMatrix, Vec<f64>) {
    let mut total = DensityMatrix::zeros(registry.dim());
    let mut traces = vec![0.0; registry.block_count()];
    for (m, &p) in registry.members.iter().zip(&registry.probabilities) {
        add_projector(&mut total, &m.state, p);
        traces[m.block] += p * m.state.norm_sqr();
    }
    (total, traces)
}

fn add_projector(rho: &mut DensityMatrix, psi: &StateVector, p: f64) {
    let dim = psi.dim();
    let amps = psi.0.as_slice();
    let data = rho.0.as_mut_slice();
    // column-major: entry (r, c) lives at c * dim + r
    for c in 0..dim {
        let conj = amps[c].conj() * p;
        for r in 0..dim {
            data[c * dim + r] += amps[r] * conj;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_jc_model, make_two_band_model, Dynamics, JcParams, TwoBandParams};
    use crate::qcore::{excited, ground, StateVector, C64};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn psi1() -> StateVector {
        StateVector::from_real(&[0.8, 0.6]).unwrap()
    }

    fn jc_registry() -> EnsembleRegistry {
        let d = make_jc_model(JcParams::DETUNED).unwrap();
        build_closure(
            &[InitialComponent::new(0, psi1(), 1.0)],
            &Dynamics::from(&d),
            DEFAULT_CAP,
            DEFAULT_MATCH_TOL,
        )
        .unwrap()
    }

    #[test]
    fn matching_ignores_global_phase() {
        let reg = EnsembleRegistry::from_members(1, vec![Member { block: 0, state: ground() }], vec![1.0]).unwrap();
        for phi in [0.0, 0.3, 1.7, std::f64::consts::PI, 5.0] {
            let cand = ground().scaled(C64::from_polar(1.0, phi));
            assert_eq!(match_state(&cand, &reg, 0, DEFAULT_MATCH_TOL).unwrap(), Some(0));
        }
        assert_eq!(match_state(&excited(), &reg, 0, DEFAULT_MATCH_TOL).unwrap(), None);
    }

    #[test]
    fn jump_target_matches_ground_state() {
        let reg = jc_registry();
        let image = qcore::apply(&qcore::sigma_minus(), &psi1()).unwrap();
        let (cand, _) = qcore::normalize(&image).unwrap();
        assert_eq!(match_state(&cand, &reg, 0, DEFAULT_MATCH_TOL).unwrap(), Some(1));
    }

    #[test]
    fn ambiguous_match_is_corruption() {
        let reg = EnsembleRegistry::from_members(
            1,
            vec![Member { block: 0, state: ground() }, Member { block: 0, state: ground() }],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert!(matches!(
            match_state(&ground(), &reg, 0, DEFAULT_MATCH_TOL),
            Err(Error::AmbiguousMatch(0, 1))
        ));
    }

    #[test]
    fn jc_closure() {
        let reg = jc_registry();
        assert_eq!(reg.n_eff(), 2);
        assert_eq!(reg.state(1), &ground());
        assert_eq!(reg.edges(), &[TransitionEdge { source: 0, channel: 0, target: 1 }]);
        assert_eq!(reg.probabilities(), &[1.0, 0.0]);
    }

    #[test]
    fn two_band_closure() {
        let m = make_two_band_model(TwoBandParams::REFERENCE).unwrap();
        let d = Dynamics::from(&m);
        let reg = build_closure(&[InitialComponent::new(0, excited(), 1.0)], &d, DEFAULT_CAP, DEFAULT_MATCH_TOL)
            .unwrap();
        assert_eq!(reg.n_eff(), 2);
        assert_eq!(reg.members()[1], Member { block: 1, state: ground() });
        // block 2's |g> maps back onto the existing block-1 |e>
        assert_eq!(
            reg.edges(),
            &[
                TransitionEdge { source: 0, channel: 1, target: 1 },
                TransitionEdge { source: 1, channel: 0, target: 0 },
            ]
        );
    }

    #[test]
    fn annihilated_initial_state_is_closed() {
        let d = Dynamics::from(&make_jc_model(JcParams::DETUNED).unwrap());
        let reg = build_closure(&[InitialComponent::new(0, ground(), 1.0)], &d, DEFAULT_CAP, DEFAULT_MATCH_TOL)
            .unwrap();
        assert_eq!(reg.n_eff(), 1);
        assert!(reg.edges().is_empty());
    }

    #[test]
    fn closure_is_idempotent() {
        let d = Dynamics::from(&make_jc_model(JcParams::DETUNED).unwrap());
        let reg = jc_registry();
        let again: Vec<_> = reg
            .members()
            .iter()
            .zip(reg.probabilities())
            .map(|(m, &p)| InitialComponent::new(m.block, m.state.clone(), p))
            .collect();
        let reg2 = build_closure(&again, &d, DEFAULT_CAP, DEFAULT_MATCH_TOL).unwrap();
        assert_eq!(reg2.n_eff(), reg.n_eff());
        assert_eq!(reg2.edges(), reg.edges());
    }

    #[test]
    fn closure_cap_is_enforced() {
        use crate::models::{Channel, Hamiltonian, RateFn, TimeLocalModel};
        use crate::qcore::Operator;
        // a generic rotation never closes
        let (c, s) = (0.6f64, 0.8f64);
        let rot = Operator::from_rows(&[
            vec![C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(0.0, 0.0)],
            vec![C64::new(s, 0.0), C64::new(c, 0.0), C64::new(0.0, 0.0)],
            vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        ])
        .unwrap();
        let m = TimeLocalModel::new(
            Hamiltonian::zero(3),
            vec![Channel { operator: rot, rate: RateFn::constant(1.0) }],
        )
        .unwrap();
        let init = StateVector::basis(3, 0);
        let err = build_closure(&[InitialComponent::new(0, init, 1.0)], &Dynamics::from(&m), 8, DEFAULT_MATCH_TOL)
            .unwrap_err();
        assert!(matches!(err, Error::ClosureCap { cap: 8 }));
    }

    #[test]
    fn closure_validates_initial_decomposition() {
        let d = Dynamics::from(&make_jc_model(JcParams::DETUNED).unwrap());
        let bad_sum = [InitialComponent::new(0, psi1(), 0.7)];
        assert!(build_closure(&bad_sum, &d, 8, DEFAULT_MATCH_TOL).is_err());
        let unnormalized = [InitialComponent::new(0, StateVector::from_real(&[1.0, 1.0]).unwrap(), 1.0)];
        assert!(build_closure(&unnormalized, &d, 8, DEFAULT_MATCH_TOL).is_err());
        let dup = [InitialComponent::new(0, ground(), 0.5), InitialComponent::new(0, ground(), 0.5)];
        assert!(build_closure(&dup, &d, 8, DEFAULT_MATCH_TOL).is_err());
        let wrong_block = [InitialComponent::new(1, ground(), 1.0)];
        assert!(build_closure(&wrong_block, &d, 8, DEFAULT_MATCH_TOL).is_err());
    }

    #[test]
    fn density_assembly_examples() {
        let reg = jc_registry();
        let (_, rho) = assemble_density(&reg);
        assert_abs_diff_eq!(rho.entry(0, 0).re, 0.64, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.entry(0, 1).re, 0.48, epsilon = 1e-15);

        let (_, rho) = assemble_density(&reg.clone().with_probabilities(vec![0.0, 1.0]).unwrap());
        assert_eq!(rho, ground().projector(1.0));

        let (_, rho) = assemble_density(&reg.with_probabilities(vec![0.5, 0.5]).unwrap());
        assert_abs_diff_eq!(rho.entry(0, 0).re, 0.32, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.entry(0, 1).re, 0.24, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-15);
    }

    fn arb_registry() -> impl Strategy<Value = EnsembleRegistry> {
        (1usize..5, 1usize..6).prop_flat_map(|(dim, n)| {
            (
                prop::collection::vec(prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), dim), n),
                prop::collection::vec(0.0..1.0f64, n),
            )
                .prop_filter_map("degenerate", move |(amps, weights)| {
                    let total: f64 = weights.iter().sum();
                    if total < 1e-3 {
                        return None;
                    }
                    let mut members = Vec::new();
                    for a in amps {
                        let s = StateVector::new(a.into_iter().map(|(r, i)| C64::new(r, i)).collect()).unwrap();
                        let (s, _) = qcore::normalize(&s).ok()?;
                        members.push(Member { block: 0, state: s });
                    }
                    let probs = weights.iter().map(|w| w / total).collect();
                    EnsembleRegistry::from_members(1, members, probs).ok()
                })
        })
    }

    proptest! {
        #[test]
        fn assembled_density_is_a_state(reg in arb_registry()) {
            let (_, rho) = assemble_density(&reg);
            prop_assert!(rho.hermiticity_defect() <= 1e-12);
            prop_assert!((rho.trace().re - 1.0).abs() <= 1e-10);
            prop_assert!(rho.trace().im.abs() <= 1e-12);
            prop_assert!(rho.eigenvalues()[0] >= -1e-10);
        }
    }
}

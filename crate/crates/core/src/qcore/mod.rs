//! Dense complex vectors and matrices for small Hilbert spaces, plus the
//! quadrature helpers used to integrate time-dependent coefficients.
//!
//! The two-level convention used throughout the crate puts the excited
//! state at index 0 and the ground state at index 1, so `sigma_minus()` is
//! `|g><e|` with a single nonzero entry at row 1, column 0.

mod quad;

pub use quad::{sine_integral, trapezoid_cumulative, SampledFunction};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Norms below this are treated as zero by [`normalize`].
pub const ZERO_NORM: f64 = 1e-14;

/// Amplitudes of a pure state over a fixed finite basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(pub DVector<C64>);

/// A square dense complex matrix acting on state vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(pub DMatrix<C64>);

/// A (block) density matrix. Trace is not forced to one; blocks of a
/// generalized model carry partial weight.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(pub DMatrix<C64>);

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::Invalid("state vector must have dimension >= 1".into()));
        }
        Ok(Self(DVector::from_vec(amplitudes)))
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// The `index`-th computational basis state.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Self(v)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `<self|other>`, antilinear in `self`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn amplitude(&self, index: usize) -> C64 {
        self.0[index]
    }

    pub fn scaled(&self, factor: C64) -> StateVector {
        StateVector(&self.0 * factor)
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: C64, other: &StateVector) -> StateVector {
        StateVector(&self.0 + &other.0 * factor)
    }

    /// `|self><self|` weighted by `weight`.
    pub fn projector(&self, weight: f64) -> DensityMatrix {
        DensityMatrix(&self.0 * self.0.adjoint() * C64::new(weight, 0.0))
    }
}

impl Operator {
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::Invalid(format!(
                "operator must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self(entries))
    }

    /// Builds an operator from row-major entries.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("operator rows must form a square matrix".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn adjoint(&self) -> Operator {
        Operator(self.0.adjoint())
    }

    pub fn scaled(&self, factor: C64) -> Operator {
        Operator(&self.0 * factor)
    }

    pub fn product(&self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_diff(&self.0, &self.0.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Expectation value `<s|self|s>`, not divided by the norm of `s`.
    pub fn expectation(&self, s: &StateVector) -> C64 {
        s.0.dotc(&(&self.0 * &s.0))
    }

    /// `tr(self * rho)`.
    pub fn expectation_in(&self, rho: &DensityMatrix) -> C64 {
        (&self.0 * &rho.0).trace()
    }
}

impl DensityMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_diff(&self.0, &self.0.adjoint())
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = herm.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        max_abs_diff(&self.0, &other.0)
    }
}

impl std::ops::Add<&DensityMatrix> for &DensityMatrix {
    type Output = DensityMatrix;
    fn add(self, rhs: &DensityMatrix) -> DensityMatrix {
        DensityMatrix(&self.0 + &rhs.0)
    }
}

pub(crate) fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `out = alpha * a * x` with plain loops over the column-major storage.
/// At the dimensions of typical ensemble states this beats the generic
/// BLAS-style kernels, which is what the solver's inner loop needs.
pub(crate) fn matvec_into(out: &mut DVector<C64>, alpha: C64, a: &DMatrix<C64>, x: &DVector<C64>) {
    let n = x.len();
    let data = a.as_slice();
    let x = x.as_slice();
    for (r, o) in out.as_mut_slice().iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for c in 0..n {
            acc += data[c * n + r] * x[c];
        }
        *o = alpha * acc;
    }
}

/// `op * s`, not normalized.
pub fn apply(op: &Operator, s: &StateVector) -> Result<StateVector> {
    if op.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            found: s.dim(),
        });
    }
    Ok(StateVector(&op.0 * &s.0))
}

/// Returns `(s / |s|, |s|)`. A norm below [`ZERO_NORM`] is reported as
/// [`Error::ZeroNorm`]; callers treat the corresponding jump channel as
/// closed.
pub fn normalize(s: &StateVector) -> Result<(StateVector, f64)> {
    let norm = s.norm();
    if norm < ZERO_NORM {
        return Err(Error::ZeroNorm(norm));
    }
    Ok((StateVector(&s.0 / C64::new(norm, 0.0)), norm))
}

/// The lowering operator `|g><e|`.
pub fn sigma_minus() -> Operator {
    let mut m = DMatrix::zeros(2, 2);
    m[(1, 0)] = C64::new(1.0, 0.0);
    Operator(m)
}

/// The raising operator `|e><g|`.
pub fn sigma_plus() -> Operator {
    sigma_minus().adjoint()
}

pub fn excited() -> StateVector {
    StateVector::basis(2, 0)
}

pub fn ground() -> StateVector {
    StateVector::basis(2, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn lowering_acts_on_basis() {
        let sm = sigma_minus();
        assert_eq!(apply(&sm, &excited()).unwrap(), ground());
        assert_eq!(apply(&sm, &ground()).unwrap(), StateVector::zeros(2));
    }

    #[test]
    fn lowering_on_superposition() {
        let psi = StateVector::from_real(&[0.8, 0.6]).unwrap();
        let out = apply(&sigma_minus(), &psi).unwrap();
        assert_abs_diff_eq!(out.amplitude(0).norm(), 0.0);
        assert_abs_diff_eq!(out.amplitude(1).re, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(out.norm(), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn apply_rejects_dimension_mismatch() {
        let err = apply(&Operator::identity(3), &excited()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 3, found: 2 }));
    }

    #[test]
    fn normalize_examples() {
        let (s, n) = normalize(&StateVector::from_real(&[0.0, 0.8]).unwrap()).unwrap();
        assert_eq!(s, ground());
        assert_abs_diff_eq!(n, 0.8, epsilon = 1e-15);

        let (s, n) = normalize(&excited()).unwrap();
        assert_eq!(s, excited());
        assert_eq!(n, 1.0);

        assert!(matches!(
            normalize(&StateVector::zeros(2)),
            Err(Error::ZeroNorm(_))
        ));
    }

    #[test]
    fn operator_constructors_validate() {
        assert!(Operator::new(DMatrix::zeros(2, 3)).is_err());
        assert!(Operator::from_rows(&[vec![c(1.0, 0.0)], vec![c(0.0, 0.0)]]).is_err());
        assert!(StateVector::new(vec![]).is_err());
        let h = Operator::from_rows(&[
            vec![c(1.0, 0.0), c(0.0, 2.0)],
            vec![c(0.0, -2.0), c(-1.0, 0.0)],
        ])
        .unwrap();
        assert!(h.is_hermitian(1e-12));
        assert!(!sigma_minus().is_hermitian(1e-12));
    }

    fn arb_c64() -> impl Strategy<Value = C64> {
        (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| c(re, im))
    }

    fn arb_vec(n: usize) -> impl Strategy<Value = StateVector> {
        prop::collection::vec(arb_c64(), n).prop_map(|v| StateVector::new(v).unwrap())
    }

    fn arb_op(n: usize) -> impl Strategy<Value = Operator> {
        prop::collection::vec(arb_c64(), n * n)
            .prop_map(move |v| Operator(DMatrix::from_vec(n, n, v)))
    }

    proptest! {
        #[test]
        fn apply_is_linear(op in arb_op(4), s1 in arb_vec(4), s2 in arb_vec(4), a in arb_c64(), b in arb_c64()) {
            let combo = s1.scaled(a).axpy(b, &s2);
            let lhs = apply(&op, &combo).unwrap();
            let rhs = apply(&op, &s1).unwrap().scaled(a).axpy(b, &apply(&op, &s2).unwrap());
            for k in 0..4 {
                prop_assert!((lhs.amplitude(k) - rhs.amplitude(k)).norm() <= 1e-12);
            }
        }

        #[test]
        fn normalize_is_idempotent(s in arb_vec(5)) {
            prop_assume!(s.norm() > 1e-6);
            let (once, _) = normalize(&s).unwrap();
            let (twice, n) = normalize(&once).unwrap();
            prop_assert!((n - 1.0).abs() <= 1e-14);
            for k in 0..5 {
                prop_assert!((once.amplitude(k) - twice.amplitude(k)).norm() <= 1e-14);
            }
        }
    }
}

//! Dense complex linear algebra on small Hilbert spaces.
//!
//! Everything here works on `nalgebra::DMatrix<Complex64>`. The newtypes
//! [`HermitianOperator`], [`UnitaryOperator`], [`StateVector`] and
//! [`DensityMatrix`] carry their defining invariant, checked on construction.
//! Units follow the crate-wide convention: ħ = 1, time in μs, angular
//! frequencies in rad/μs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative Hermiticity tolerance, `‖A − A†‖ ≤ tol · max(1, ‖A‖)`.
pub const HERMITICITY_TOL: f64 = 1e-12;
pub const UNITARITY_TOL: f64 = 1e-10;
pub const NORMALIZATION_TOL: f64 = 1e-10;
pub const DENSITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has dimension zero")]
    Empty,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not Hermitian: ‖A − A†‖ = {deviation:.3e} exceeds {tolerance:.3e}")]
    NotHermitian { deviation: f64, tolerance: f64 },
    #[error("matrix is not unitary: ‖U†U − I‖ = {deviation:.3e} exceeds {tolerance:.3e}")]
    NotUnitary { deviation: f64, tolerance: f64 },
    #[error("state vector is not normalized: ‖ψ‖ = {norm}")]
    NotNormalized { norm: f64 },
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn sigma_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn sigma_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Real scalar multiple of a complex matrix.
pub fn scale(a: &CMatrix, s: f64) -> CMatrix {
    a.map(|z| z * s)
}

pub fn check_square_finite(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.nrows() == 0 {
        return Err(LinalgError::Empty);
    }
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(LinalgError::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].norm();
    }
    m.clone().singular_values().max()
}

/// Sum of singular values.
pub fn trace_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().sum()
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    spectral_norm(&(m - m.adjoint()))
}

pub fn unitarity_defect(m: &CMatrix) -> f64 {
    spectral_norm(&(m.adjoint() * m - identity(m.nrows())))
}

/// `⟨a|b⟩`, antilinear in the first slot.
pub fn inner(a: &CVector, b: &CVector) -> C64 {
    a.dotc(b)
}

/// `⟨a|M|b⟩`.
pub fn sandwich(a: &CVector, m: &CMatrix, b: &CVector) -> C64 {
    a.dotc(&(m * b))
}

/// A Hermitian operator, e.g. a Hamiltonian or one of its time derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(CMatrix);

impl HermitianOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        check_square_finite(&m)?;
        let deviation = hermiticity_defect(&m);
        let tolerance = HERMITICITY_TOL * spectral_norm(&m).max(1.0);
        if deviation > tolerance {
            return Err(LinalgError::NotHermitian { deviation, tolerance });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix known to be Hermitian by construction.
    pub(crate) fn new_unchecked(m: CMatrix) -> Self {
        Self(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(CMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn norm(&self) -> f64 {
        spectral_norm(&self.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(scale(&self.0, s))
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn minus(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    /// `U A U†`, which stays Hermitian for any unitary `U`.
    pub fn conjugated_by(&self, u: &UnitaryOperator) -> Self {
        Self(u.matrix() * &self.0 * u.matrix().adjoint())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOperator(CMatrix);

impl UnitaryOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        check_square_finite(&m)?;
        let deviation = unitarity_defect(&m);
        if deviation > UNITARITY_TOL {
            return Err(LinalgError::NotUnitary { deviation, tolerance: UNITARITY_TOL });
        }
        Ok(Self(m))
    }

    pub(crate) fn new_unchecked(m: CMatrix) -> Self {
        Self(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self(identity(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    /// `self · other`
    pub fn compose(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0)
    }

    pub fn defect(&self) -> f64 {
        unitarity_defect(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(CVector);

impl StateVector {
    pub fn new(v: CVector) -> Result<Self> {
        if v.is_empty() {
            return Err(LinalgError::Empty);
        }
        let norm = v.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(LinalgError::NotNormalized { norm });
        }
        Ok(Self(v))
    }

    /// Normalizes `v`; fails only for the zero vector or non-finite input.
    pub fn normalized(v: CVector) -> Result<Self> {
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(LinalgError::NotNormalized { norm });
        }
        Ok(Self(v.unscale(norm)))
    }

    pub(crate) fn new_unchecked(v: CVector) -> Self {
        Self(v)
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = c(1.0, 0.0);
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn vector(&self) -> &CVector {
        &self.0
    }

    pub fn into_vector(self) -> CVector {
        self.0
    }

    pub fn inner(&self, other: &Self) -> C64 {
        inner(&self.0, &other.0)
    }

    pub fn with_phase(&self, phase: f64) -> Self {
        Self(&self.0 * C64::from_polar(1.0, phase))
    }

    pub fn projector(&self) -> CMatrix {
        &self.0 * self.0.adjoint()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        check_square_finite(&m)?;
        let herm = hermiticity_defect(&m);
        if herm > DENSITY_TOL {
            return Err(LinalgError::InvalidDensity(format!(
                "Hermiticity defect {herm:.3e} exceeds {DENSITY_TOL:.0e}"
            )));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > DENSITY_TOL || tr.im.abs() > DENSITY_TOL {
            return Err(LinalgError::InvalidDensity(format!("trace {tr} differs from 1")));
        }
        let sym = (&m + m.adjoint()).map(|z| z * 0.5);
        let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
        if min_eig < -DENSITY_TOL {
            return Err(LinalgError::InvalidDensity(format!(
                "negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(Self(m))
    }

    pub fn pure(psi: &StateVector) -> Self {
        Self(psi.projector())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }

    /// Diagonal element `⟨i|ρ|i⟩` in the computational basis.
    pub fn population(&self, i: usize) -> f64 {
        self.0[(i, i)].re
    }

    /// `⟨ψ|ρ|ψ⟩`
    pub fn expectation(&self, psi: &StateVector) -> f64 {
        sandwich(psi.vector(), &self.0, psi.vector()).re
    }

    pub fn conjugated_by(&self, u: &UnitaryOperator) -> Self {
        Self(u.matrix() * &self.0 * u.matrix().adjoint())
    }
}

/// Ascending eigenvalues and matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: Vec<StateVector>,
}

impl Eigensystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V` with the eigenvectors as columns.
    pub fn vector_matrix(&self) -> CMatrix {
        let cols: Vec<CVector> = self.vectors.iter().map(|v| v.vector().clone()).collect();
        CMatrix::from_columns(&cols)
    }

    pub fn reconstruct(&self) -> CMatrix {
        let v = self.vector_matrix();
        let d = CMatrix::from_diagonal(&CVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&l| c(l, 0.0)),
        ));
        &v * d * v.adjoint()
    }
}

/// Index of the entry carrying the gauge: the first entry whose modulus is
/// within a relative 1e-9 of the largest modulus.
fn gauge_pivot(v: &CVector) -> usize {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    v.iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-9))
        .unwrap_or(0)
}

/// Rotates `v` so its pivot entry is real and positive.
pub(crate) fn fix_gauge(v: CVector) -> CVector {
    let p = gauge_pivot(&v);
    let z = v[p];
    if z.norm() == 0.0 {
        return v;
    }
    let phase = z.conj() / z.norm();
    v * phase
}

/// Eigendecomposition of a Hermitian operator.
///
/// Eigenvalues come back ascending. Each eigenvector is gauge-fixed so that
/// its largest entry (lowest index on ties) is real positive; degenerate
/// eigenvalues are then ordered by that pivot index and the moduli of the
/// entries.
pub fn eig_hermitian(a: &HermitianOperator) -> Eigensystem {
    let m = a.matrix();
    let n = m.nrows();
    if n == 1 {
        return Eigensystem {
            values: vec![m[(0, 0)].re],
            vectors: vec![StateVector::basis(1, 0)],
        };
    }
    // Symmetrize against round-off so the solver sees an exactly Hermitian input.
    let sym = (m + m.adjoint()).map(|z| z * 0.5);
    let eig = SymmetricEigen::new(sym);
    let mut pairs: Vec<(f64, CVector)> = (0..n)
        .map(|j| {
            let col = eig.eigenvectors.column(j).into_owned();
            let norm = col.norm();
            (eig.eigenvalues[j], fix_gauge(col.unscale(norm)))
        })
        .collect();
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |acc, l| acc.max(l.abs()));
    let tie = 1e-12 * scale;
    pairs.sort_by(|(la, va), (lb, vb)| {
        if (la - lb).abs() > tie {
            return la.partial_cmp(lb).unwrap_or(std::cmp::Ordering::Equal);
        }
        let key = |v: &CVector| {
            let mut k = vec![gauge_pivot(v) as f64];
            k.extend(v.iter().map(|z| -z.norm()));
            k
        };
        key(va)
            .partial_cmp(&key(vb))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let (values, vectors) = pairs
        .into_iter()
        .map(|(l, v)| (l, StateVector::new_unchecked(v)))
        .unzip();
    Eigensystem { values, vectors }
}

/// `exp(−i·s·A)` for Hermitian `A`, via the spectral decomposition.
pub fn expm_hermitian(a: &HermitianOperator, s: f64) -> UnitaryOperator {
    if s == 0.0 {
        return UnitaryOperator::identity(a.dim());
    }
    let eig = eig_hermitian(a);
    let v = eig.vector_matrix();
    let phases = CVector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|&l| C64::from_polar(1.0, -s * l)),
    );
    UnitaryOperator::new_unchecked(&v * CMatrix::from_diagonal(&phases) * v.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn series_exp(a: &CMatrix, s: f64, terms: usize) -> CMatrix {
        // exp(−i s A) = Σ (−i s A)^k / k!
        let x = a.map(|z| z * c(0.0, -s));
        let mut term = identity(a.nrows());
        let mut sum = term.clone();
        for k in 1..terms {
            term = &term * &x / c(k as f64, 0.0);
            sum += &term;
        }
        sum
    }

    #[test]
    fn sigma_z_spectrum() {
        let eig = eig_hermitian(&HermitianOperator::new(sigma_z()).unwrap());
        assert_eq!(eig.values, vec![-1.0, 1.0]);
        assert_abs_diff_eq!(eig.vectors[0].vector()[1].re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.vectors[1].vector()[0].re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn sigma_x_spectrum() {
        let eig = eig_hermitian(&HermitianOperator::new(sigma_x()).unwrap());
        assert_abs_diff_eq!(eig.values[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.values[1], 1.0, epsilon = 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        // (|0⟩ − |1⟩)/√2 and (|0⟩ + |1⟩)/√2, up to the gauge convention.
        let minus = eig.vectors[0].vector();
        let plus = eig.vectors[1].vector();
        assert_abs_diff_eq!((minus[0] + minus[1]).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(minus[0].norm(), r, epsilon = 1e-14);
        assert_abs_diff_eq!((plus[0] - plus[1]).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(plus[0].norm(), r, epsilon = 1e-14);
    }

    #[test]
    fn driven_qubit_eigenvalues_match_characteristic_polynomial() {
        let (w0, wt, w, t) = (2.0 * PI, 0.04 * PI, 2.0 * PI, 0.25);
        let h = scale(&sigma_z(), w0) + scale(&sigma_x(), wt * (w * t).sin());
        let eig = eig_hermitian(&HermitianOperator::new(h.clone()).unwrap());
        // λ² − tr(H)λ + det(H) = 0 for the 2×2 case.
        let tr = h.trace().re;
        let det = (h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)]).re;
        let disc = (tr * tr - 4.0 * det).sqrt();
        let expected = ((tr - disc) / 2.0, (tr + disc) / 2.0);
        assert_abs_diff_eq!(eig.values[0], expected.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[1], expected.1, epsilon = 1e-12);
        let closed = (w0 * w0 + wt * wt * (w * t).sin().powi(2)).sqrt();
        assert_abs_diff_eq!(eig.values[1], closed, epsilon = 1e-12);
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.)]);
        match HermitianOperator::new(m) {
            Err(LinalgError::NotHermitian { deviation, tolerance }) => {
                assert!(deviation > tolerance);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expm_at_zero_is_identity() {
        let a = HermitianOperator::new(sigma_x() + sigma_z()).unwrap();
        assert_eq!(expm_hermitian(&a, 0.0).matrix(), &identity(2));
    }

    #[test]
    fn expm_of_sigma_z_quarter_turn() {
        let u = expm_hermitian(&HermitianOperator::new(sigma_z()).unwrap(), PI / 2.0);
        assert_abs_diff_eq!((u.matrix()[(0, 0)] - c(0., -1.)).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((u.matrix()[(1, 1)] - c(0., 1.)).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn expm_of_sigma_x_half_turn_against_series() {
        let a = HermitianOperator::new(sigma_x()).unwrap();
        let u = expm_hermitian(&a, PI);
        let oracle = series_exp(a.matrix(), PI, 30);
        assert!(spectral_norm(&(u.matrix() - &oracle)) < 1e-10);
        assert!(spectral_norm(&(u.matrix() + identity(2))) < 1e-10);
    }

    #[test]
    fn norms_of_simple_operators() {
        assert_abs_diff_eq!(spectral_norm(&identity(2)), 1.0, epsilon = 1e-14);
        let s = 2.0 * PI * 0.02;
        assert_abs_diff_eq!(spectral_norm(&scale(&sigma_x(), s)), s, epsilon = 1e-14);
        // Ḣ(0) = ω·ω_T·σx for the oscillating qubit; singular values via A†A.
        let (w, wt) = (2.0 * PI, 0.04 * PI);
        let hdot = scale(&sigma_x(), w * wt);
        let ata = hdot.adjoint() * &hdot;
        let sv = SymmetricEigen::new(ata).eigenvalues.max().sqrt();
        assert_abs_diff_eq!(spectral_norm(&hdot), sv, epsilon = 1e-12);
        assert_abs_diff_eq!(spectral_norm(&hdot), w * wt, epsilon = 1e-12);
    }

    #[test]
    fn density_matrix_validation() {
        let psi = StateVector::basis(2, 0);
        let rho = DensityMatrix::pure(&psi);
        assert!(DensityMatrix::new(rho.matrix().clone()).is_ok());
        assert!(DensityMatrix::new(identity(2)).is_err());
        let neg = CMatrix::from_row_slice(2, 2, &[c(1.5, 0.), c(0., 0.), c(0., 0.), c(-0.5, 0.)]);
        assert!(DensityMatrix::new(neg).is_err());
    }

    #[test]
    fn degenerate_ordering_is_deterministic() {
        let a = HermitianOperator::new(identity(3)).unwrap();
        let e1 = eig_hermitian(&a);
        let e2 = eig_hermitian(&a);
        assert_eq!(e1.vector_matrix(), e2.vector_matrix());
    }
}

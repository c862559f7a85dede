//! Non-inertial frames `O(t) = exp(iω_f G t)` and the frame-equivalence checks.
//!
//! In the frame, `H_O = O H O† + iȮO†`, and for this family the fictitious
//! term is exactly `−ω_f G`.

use std::sync::Arc;

use serde_json::{json, Value};
use thiserror::Error;

use crate::hamiltonians::{oscillating_qubit, oscillating_qubit_transition, HamiltonianModel};
use crate::linalg::{
    commutator, eig_hermitian, scale, sigma_x, sigma_y, sigma_z, spectral_norm, CMatrix,
    Eigensystem, HermitianOperator, StateVector, UnitaryOperator, C64,
};
use crate::output::{fmt_f64, json_f64, CsvTable};
use crate::spectral::{track_eigensystem, SpectralError, TimeGrid};

pub const DEFAULT_TOLERANCE: f64 = 1e-3;
/// `max ‖H_O(t) − H_O(t₀)‖` allowed by the constant-Hamiltonian check.
pub const CONSTANCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("frame dimension {frame} does not match model dimension {model}")]
    DimensionMismatch { frame: usize, model: usize },
    #[error("level index {index} out of range for dimension {dim}")]
    LevelOutOfRange { index: usize, dim: usize },
    #[error("frame generators do not commute; the composition is not an exponential frame")]
    NonCommutingGenerators,
    #[error(
        "the constant-Hamiltonian check requires constant H_O: \
         ‖H_O(t) − H_O(t0)‖ = {deviation:.3e} at t={t} exceeds {tolerance:.0e}"
    )]
    NonConstant { deviation: f64, t: f64, tolerance: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone)]
pub struct FrameSpec {
    pub id: String,
    generator: HermitianOperator,
    rate: f64,
    eig: Eigensystem,
}

impl FrameSpec {
    pub fn new(id: impl Into<String>, generator: HermitianOperator, rate: f64) -> Self {
        let eig = eig_hermitian(&generator);
        Self { id: id.into(), generator, rate, eig }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new("identity", HermitianOperator::zeros(dim), 0.0)
    }

    /// `O(t) = e^{iωtσz}`.
    pub fn rotating_z(omega: f64) -> Self {
        Self::new("rotating_z", HermitianOperator::new_unchecked(sigma_z()), omega)
    }

    /// `O(t) = e^{i(ω/2)tσz}`.
    pub fn rotating_z_half(omega: f64) -> Self {
        Self::new("rotating_z_half", HermitianOperator::new_unchecked(scale(&sigma_z(), 0.5)), omega)
    }

    pub fn generator(&self) -> &HermitianOperator {
        &self.generator
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    /// Largest minus smallest eigenvalue of `G`.
    pub fn spread(&self) -> f64 {
        self.eig.values.last().unwrap() - self.eig.values.first().unwrap()
    }

    pub fn operator(&self, t: f64) -> UnitaryOperator {
        let v = self.eig.vector_matrix();
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            self.eig.values.iter().map(|&l| C64::from_polar(1.0, self.rate * l * t)),
        ));
        UnitaryOperator::new_unchecked(&v * d * v.adjoint())
    }

    /// `iȮO† = −ω_f G`.
    pub fn fictitious_term(&self) -> CMatrix {
        scale(self.generator.matrix(), -self.rate)
    }

    /// The single frame `O₂(t)O₁(t)` with `self` applied after `first`.
    /// Only commuting generators stay inside the exponential family.
    pub fn compose_after(&self, first: &FrameSpec) -> Result<FrameSpec, FrameError> {
        if self.dim() != first.dim() {
            return Err(FrameError::DimensionMismatch { frame: self.dim(), model: first.dim() });
        }
        let c = commutator(self.generator.matrix(), first.generator.matrix());
        if spectral_norm(&c) > 1e-12 {
            return Err(FrameError::NonCommutingGenerators);
        }
        let g = scale(self.generator.matrix(), self.rate) + scale(first.generator.matrix(), first.rate);
        Ok(FrameSpec::new(
            format!("{}*{}", self.id, first.id),
            HermitianOperator::new_unchecked(g),
            1.0,
        ))
    }
}

fn conj(o: &CMatrix, x: &CMatrix) -> CMatrix {
    o * x * o.adjoint()
}

/// The model seen from `frame`:
///
/// * `H_O = O H O† − ω_f G`
/// * `Ḣ_O = O(Ḣ + iω_f[G,H])O†`
/// * `Ḧ_O = O(Ḧ + 2iω_f[G,Ḣ] − ω_f²[G,[G,H]])O†`
pub fn transform_hamiltonian(
    model: &HamiltonianModel,
    frame: &FrameSpec,
) -> Result<HamiltonianModel, FrameError> {
    if frame.dim() != model.dim() {
        return Err(FrameError::DimensionMismatch { frame: frame.dim(), model: model.dim() });
    }
    let r = frame.rate;
    let g = frame.generator.matrix().clone();
    let i = C64::i();
    let h = {
        let (m, f, fict) = (model.clone(), frame.clone(), frame.fictitious_term());
        move |t: f64| conj(f.operator(t).matrix(), &m.h_matrix(t)) + &fict
    };
    let h_dot = {
        let (m, f, g) = (model.clone(), frame.clone(), g.clone());
        move |t: f64| {
            let inner = m.h_dot_matrix(t) + commutator(&g, &m.h_matrix(t)) * (i * r);
            conj(f.operator(t).matrix(), &inner)
        }
    };
    let h_ddot = {
        let (m, f) = (model.clone(), frame.clone());
        move |t: f64| {
            let h = m.h_matrix(t);
            let inner = m.h_ddot_matrix(t)
                + commutator(&g, &m.h_dot_matrix(t)) * (i * 2.0 * r)
                - commutator(&g, &commutator(&g, &h)) * C64::new(r * r, 0.0);
            conj(f.operator(t).matrix(), &inner)
        }
    };
    let max_frequency = model.max_frequency() + r.abs() * frame.spread();
    let mut out = HamiltonianModel::new(
        format!("{}@{}", model.name(), frame.id),
        model.dim(),
        max_frequency,
        Arc::new(h),
    )
    .with_derivatives(Some(Arc::new(h_dot)), Some(Arc::new(h_ddot)))
    .with_fd_step(model.fd_step())
    .with_param("frame_rate", r);
    for (k, v) in model.params() {
        out = out.with_param(k, *v);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// `|⟨E_m^O(t)|O(t)|E_k(t)⟩|` constant in time.
    T1,
    /// `|⟨E_m^O(t)|E_k^0⟩|` constant in time, for a fixed reference state.
    T1Reduced,
    /// `|⟨E_k(t)|U_O(t,t₀)|E_n(t₀)⟩| = |⟨E_k(t₀)|E_n(t₀)⟩|`.
    T2,
}

impl Condition {
    pub fn id(self) -> &'static str {
        match self {
            Condition::T1 => "T1",
            Condition::T1Reduced => "T1-reduced",
            Condition::T2 => "T2",
        }
    }
}

#[derive(Debug, Clone)]
pub struct IndexDeviation {
    pub index: usize,
    pub max_deviation: f64,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct TheoremVerdict {
    pub condition: Condition,
    pub holds: bool,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub witness_t: f64,
    pub witness_index: usize,
    pub per_index: Vec<IndexDeviation>,
    pub times: Vec<f64>,
    /// `deviations[index][i]`
    pub deviations: Vec<Vec<f64>>,
}

impl TheoremVerdict {
    fn from_deviations(condition: Condition, times: Vec<f64>, deviations: Vec<Vec<f64>>, tolerance: f64) -> Self {
        let per_index: Vec<IndexDeviation> = deviations
            .iter()
            .enumerate()
            .map(|(index, d)| {
                let (i, &m) = d
                    .iter()
                    .enumerate()
                    .fold((0, &0.0), |acc, (i, x)| if *x > *acc.1 { (i, x) } else { acc });
                IndexDeviation { index, max_deviation: m, t: times[i] }
            })
            .collect();
        let worst = per_index
            .iter()
            .fold(&per_index[0], |a, b| if b.max_deviation > a.max_deviation { b } else { a });
        Self {
            condition,
            holds: worst.max_deviation <= tolerance,
            max_deviation: worst.max_deviation,
            tolerance,
            witness_t: worst.t,
            witness_index: worst.index,
            per_index,
            times,
            deviations,
        }
    }

    pub fn verdict(&self) -> &'static str {
        if self.holds {
            "holds"
        } else {
            "violated"
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "condition": self.condition.id(),
            "verdict": self.verdict(),
            "max_deviation": json_f64(self.max_deviation),
            "tolerance": json_f64(self.tolerance),
            "witness": { "t": json_f64(self.witness_t), "index": self.witness_index },
            "per_index": self.per_index.iter().map(|d| json!({
                "index": d.index,
                "max_deviation": json_f64(d.max_deviation),
                "t": json_f64(d.t),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn trace_csv(&self) -> CsvTable {
        let mut header = vec!["t".to_string()];
        header.extend((0..self.deviations.len()).map(|m| format!("deviation_{m}")));
        let mut table = CsvTable::new(&header);
        for (i, &t) in self.times.iter().enumerate() {
            table.push_row(
                std::iter::once(t).chain(self.deviations.iter().map(|d| d[i])).map(fmt_f64).collect(),
            );
        }
        table
    }
}

fn check_level(k: usize, dim: usize) -> Result<(), FrameError> {
    if k >= dim {
        return Err(FrameError::LevelOutOfRange { index: k, dim });
    }
    Ok(())
}

/// Checks that `|⟨E_m^O(t)|O(t)|E_k(t)⟩|` stays at its initial value for
/// every rotated-frame level `m`.
pub fn theorem1_check(
    model: &HamiltonianModel,
    frame: &FrameSpec,
    k: usize,
    grid: &TimeGrid,
    tol: f64,
) -> Result<TheoremVerdict, FrameError> {
    check_level(k, model.dim())?;
    let rotated = transform_hamiltonian(model, frame)?;
    let traj = track_eigensystem(model, grid)?;
    let traj_o = track_eigensystem(&rotated, grid)?;
    let times = grid.points();
    let dim = model.dim();
    let overlaps: Vec<Vec<f64>> = (0..dim)
        .map(|m| {
            times
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let o_ek = frame.operator(t).matrix() * traj.state(i, k).vector();
                    traj_o.state(i, m).vector().dotc(&o_ek).norm()
                })
                .collect()
        })
        .collect();
    let deviations = overlaps.iter().map(|row| row.iter().map(|x| (x - row[0]).abs()).collect()).collect();
    Ok(TheoremVerdict::from_deviations(Condition::T1, times, deviations, tol))
}

/// The resonance-regime form: `|⟨E_m^O(t)|ψ⟩|` constant for a fixed state
/// `ψ`, typically an eigenstate of the unperturbed Hamiltonian.
pub fn theorem1_reduced_check(
    model: &HamiltonianModel,
    frame: &FrameSpec,
    reference: &StateVector,
    grid: &TimeGrid,
    tol: f64,
) -> Result<TheoremVerdict, FrameError> {
    if reference.dim() != model.dim() {
        return Err(FrameError::DimensionMismatch { frame: reference.dim(), model: model.dim() });
    }
    let rotated = transform_hamiltonian(model, frame)?;
    let traj_o = track_eigensystem(&rotated, grid)?;
    let times = grid.points();
    let deviations = (0..model.dim())
        .map(|m| {
            let row: Vec<f64> = (0..times.len()).map(|i| traj_o.state(i, m).inner(reference).norm()).collect();
            row.iter().map(|x| (x - row[0]).abs()).collect()
        })
        .collect();
    Ok(TheoremVerdict::from_deviations(Condition::T1Reduced, times, deviations, tol))
}

/// Largest `‖H_O(t) − H_O(t₀)‖` on the grid and where it occurs.
pub fn constancy_defect(rotated: &HamiltonianModel, grid: &TimeGrid) -> (f64, f64) {
    let h0 = rotated.h_matrix(grid.t0);
    grid.points()
        .into_iter()
        .map(|t| (spectral_norm(&(rotated.h_matrix(t) - &h0)), t))
        .fold((0.0, grid.t0), |a, b| if b.0 > a.0 { b } else { a })
}

/// Checks `|⟨E_k(t)|U_O(t,t₀)|E_n(t₀)⟩| = |⟨E_k(t₀)|E_n(t₀)⟩|` with
/// `U_O = O†(t) e^{−iH_O(t−t₀)} O(t₀)`. `H_O` must be time independent.
pub fn theorem2_check(
    model: &HamiltonianModel,
    frame: &FrameSpec,
    n: usize,
    grid: &TimeGrid,
    tol: f64,
) -> Result<TheoremVerdict, FrameError> {
    check_level(n, model.dim())?;
    let rotated = transform_hamiltonian(model, frame)?;
    let (deviation, t) = constancy_defect(&rotated, grid);
    if deviation > CONSTANCY_TOL {
        return Err(FrameError::NonConstant { deviation, t, tolerance: CONSTANCY_TOL });
    }
    let h_o = HermitianOperator::new_unchecked(rotated.h_matrix(grid.t0));
    let eig = eig_hermitian(&h_o);
    let v = eig.vector_matrix();
    let traj = track_eigensystem(model, grid)?;
    let times = grid.points();
    let dim = model.dim();
    let en0 = frame.operator(grid.t0).matrix() * traj.state(0, n).vector();
    let evolved: Vec<nalgebra::DVector<C64>> = times
        .iter()
        .map(|&t| {
            let s = t - grid.t0;
            let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                dim,
                eig.values.iter().map(|&l| C64::from_polar(1.0, -l * s)),
            ));
            frame.operator(t).matrix().adjoint() * (&v * d * v.adjoint() * &en0)
        })
        .collect();
    let deviations = (0..dim)
        .map(|k| {
            let target = traj.state(0, k).inner(traj.state(0, n)).norm();
            evolved
                .iter()
                .enumerate()
                .map(|(i, psi)| (traj.state(i, k).vector().dotc(psi).norm() - target).abs())
                .collect()
        })
        .collect();
    Ok(TheoremVerdict::from_deviations(Condition::T2, times, deviations, tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrintedTheta {
    /// `tanθ = ω₀/ω_T`, as printed.
    SplittingOverCoupling,
    /// `tanθ = ω_T/ω₀`.
    CouplingOverSplitting,
}

#[derive(Debug, Clone)]
pub struct RotatedFormCandidate {
    /// Which model the oracle transforms.
    pub model: String,
    pub frame: String,
    pub theta: PrintedTheta,
    pub max_deviation: f64,
    pub at_t: f64,
    /// Relative to `max ‖H_O‖` of the oracle.
    pub relative_deviation: f64,
    pub singular: bool,
    pub deviations: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RotatedFormReport {
    pub omega0: f64,
    pub omega_t: f64,
    pub omega: f64,
    pub times: Vec<f64>,
    pub candidates: Vec<RotatedFormCandidate>,
}

impl RotatedFormReport {
    pub fn best(&self) -> &RotatedFormCandidate {
        self.candidates
            .iter()
            .filter(|c| !c.singular)
            .fold(&self.candidates[0], |a, b| if b.max_deviation < a.max_deviation { b } else { a })
    }

    pub fn to_json(&self) -> Value {
        json!({
            "omega0": json_f64(self.omega0),
            "omega_t": json_f64(self.omega_t),
            "omega": json_f64(self.omega),
            "points": self.times.len(),
            "candidates": self.candidates.iter().map(|c| json!({
                "model": c.model,
                "frame": c.frame,
                "tan_theta": match c.theta {
                    PrintedTheta::SplittingOverCoupling => "omega0/omega_t",
                    PrintedTheta::CouplingOverSplitting => "omega_t/omega0",
                },
                "max_deviation": json_f64(c.max_deviation),
                "relative_deviation": json_f64(c.relative_deviation),
                "at_t": json_f64(c.at_t),
                "singular": c.singular,
            })).collect::<Vec<_>>(),
        })
    }
}

/// The printed closed form
/// `(ω₀−ω)σz/2 + sin(ωt)·tanθ·ω₀[cos(ωt)σx − sin(ωt)σy]/2`.
pub fn printed_rotated_form(omega0: f64, omega_t: f64, omega: f64, theta: PrintedTheta, t: f64) -> CMatrix {
    let tan = match theta {
        PrintedTheta::SplittingOverCoupling => omega0 / omega_t,
        PrintedTheta::CouplingOverSplitting => omega_t / omega0,
    };
    let (s, c) = (omega * t).sin_cos();
    let transverse = if s == 0.0 { 0.0 } else { s * tan * omega0 / 2.0 };
    scale(&sigma_z(), (omega0 - omega) / 2.0) + scale(&sigma_x(), transverse * c)
        - scale(&sigma_y(), transverse * s)
}

/// Compares the printed rotated Hamiltonian with [`transform_hamiltonian`]
/// for both frame conventions and both readings of θ. The transformed model
/// is the oracle; the report is evidence, never an error.
pub fn printed_rotated_form_crosscheck(
    omega0: f64,
    omega_t: f64,
    omega: f64,
    grid: &TimeGrid,
) -> Result<RotatedFormReport, FrameError> {
    let times = grid.points();
    let printed = oscillating_qubit(omega0, omega_t, omega).map_err(|e| {
        FrameError::Spectral(SpectralError::InvalidGrid(format!("model construction failed: {e}")))
    })?;
    let transition = oscillating_qubit_transition(omega0, omega_t, omega).map_err(|e| {
        FrameError::Spectral(SpectralError::InvalidGrid(format!("model construction failed: {e}")))
    })?;
    let setups = [
        (&printed, FrameSpec::rotating_z(omega)),
        (&printed, FrameSpec::rotating_z_half(omega)),
        (&transition, FrameSpec::rotating_z_half(omega)),
    ];
    let mut candidates = Vec::new();
    for (model, frame) in setups {
        let oracle = transform_hamiltonian(model, &frame)?;
        let oracle_h: Vec<CMatrix> = times.iter().map(|&t| oracle.h_matrix(t)).collect();
        let scale_ref = oracle_h.iter().map(spectral_norm).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for theta in [PrintedTheta::SplittingOverCoupling, PrintedTheta::CouplingOverSplitting] {
            let deviations: Vec<f64> = times
                .iter()
                .zip(&oracle_h)
                .map(|(&t, h)| {
                    let p = printed_rotated_form(omega0, omega_t, omega, theta, t);
                    if p.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                        spectral_norm(&(p - h))
                    } else {
                        f64::INFINITY
                    }
                })
                .collect();
            let (at, max) = deviations
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |a, (i, &d)| if d > a.1 || d.is_nan() { (i, d) } else { a });
            candidates.push(RotatedFormCandidate {
                model: model.name().to_string(),
                frame: frame.id.clone(),
                theta,
                max_deviation: max,
                at_t: times[at],
                relative_deviation: max / scale_ref,
                singular: !max.is_finite(),
                deviations,
            });
        }
    }
    Ok(RotatedFormReport { omega0, omega_t, omega, times, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::{generic_decomposed, nmr_rotating, GenericDecomposition, TransverseFamily};
    use crate::linalg::{identity, kron};
    use std::f64::consts::PI;

    const W0: f64 = 2.0 * PI;
    const WT: f64 = 2.0 * PI * 0.02;

    fn dist(a: &CMatrix, b: &CMatrix) -> f64 {
        spectral_norm(&(a - b))
    }

    #[test]
    fn frame_operator_is_unitary_and_starts_at_identity() {
        let f = FrameSpec::rotating_z(3.3);
        assert!(dist(f.operator(0.0).matrix(), &identity(2)) < 1e-15);
        for t in [0.1, 1.7, 55.0] {
            assert!(f.operator(t).defect() < 1e-12);
        }
        let expected = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::from_polar(1.0, 3.3 * 0.4),
            C64::from_polar(1.0, -3.3 * 0.4),
        ]));
        assert!(dist(f.operator(0.4).matrix(), &expected) < 1e-14);
    }

    #[test]
    fn zero_rate_frame_is_identity_transform() {
        let m = oscillating_qubit(W0, WT, 1.3).unwrap();
        let r = transform_hamiltonian(&m, &FrameSpec::rotating_z(0.0)).unwrap();
        for t in [0.0, 0.3, 2.2] {
            assert!(dist(&r.h_matrix(t), &m.h_matrix(t)) < 1e-14);
        }
    }

    #[test]
    fn nmr_becomes_constant_in_half_angle_frame() {
        let (w0, wrf, w) = (W0, 0.3, 0.9 * W0);
        let m = nmr_rotating(w0, wrf, w).unwrap();
        let r = transform_hamiltonian(&m, &FrameSpec::rotating_z_half(w)).unwrap();
        let expected = scale(&sigma_z(), (w0 - w) / 2.0) + scale(&sigma_x(), wrf / 2.0);
        for i in 0..100 {
            let t = 0.137 * i as f64;
            assert!(dist(&r.h_matrix(t), &expected) < 1e-12);
            assert!(spectral_norm(&r.h_dot_matrix(t)) < 1e-12);
        }
    }

    #[test]
    fn generic_model_in_h0_frame() {
        let w = 0.8 * W0;
        let h0 = HermitianOperator::new(kron(&sigma_z(), &identity(2)) + kron(&identity(2), &sigma_z())).unwrap();
        let ht = HermitianOperator::new(kron(&sigma_x(), &identity(2))).unwrap();
        let m = generic_decomposed(GenericDecomposition {
            omega0: W0,
            omega_t: WT,
            h0: h0.clone(),
            ht: TransverseFamily::oscillating(&ht, w),
            omega: w,
        })
        .unwrap();
        let frame = FrameSpec::new("h0", h0.clone(), w);
        let r = transform_hamiltonian(&m, &frame).unwrap();
        for i in 0..50 {
            let t = 0.071 * i as f64;
            let o = frame.operator(t);
            let ht_o = conj(o.matrix(), &scale(ht.matrix(), (w * t).sin()));
            let expected = scale(h0.matrix(), W0 - w) + scale(&ht_o, WT);
            assert!(dist(&r.h_matrix(t), &expected) < 1e-12);
            let norm_t = spectral_norm(&scale(ht.matrix(), (w * t).sin()));
            assert!((spectral_norm(&ht_o) - norm_t).abs() < 1e-10);
        }
    }

    #[test]
    fn rotated_derivatives_match_finite_differences() {
        let m = oscillating_qubit(W0, WT, 1.1 * W0).unwrap();
        let r = transform_hamiltonian(&m, &FrameSpec::rotating_z(1.1 * W0)).unwrap();
        let t = 0.37;
        let err = |h: f64| {
            let fd = (r.h_matrix(t + h) - r.h_matrix(t - h)) / C64::new(2.0 * h, 0.0);
            dist(&fd, &r.h_dot_matrix(t))
        };
        let ratio = err(1e-3) / err(5e-4);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
        let err2 = |h: f64| {
            let fd = (r.h_dot_matrix(t + h) - r.h_dot_matrix(t - h)) / C64::new(2.0 * h, 0.0);
            dist(&fd, &r.h_ddot_matrix(t))
        };
        let ratio = err2(1e-3) / err2(5e-4);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn conjugation_preserves_spectrum() {
        let m = oscillating_qubit(W0, WT, 0.3).unwrap();
        let f = FrameSpec::rotating_z(2.1);
        for t in [0.2, 1.9] {
            let conj_part = conj(f.operator(t).matrix(), &m.h_matrix(t));
            let a = eig_hermitian(&HermitianOperator::new_unchecked(conj_part));
            let b = eig_hermitian(&m.hamiltonian(t));
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn composition_of_commuting_frames() {
        let m = oscillating_qubit(W0, WT, W0).unwrap();
        let f1 = FrameSpec::rotating_z(0.7);
        let f2 = FrameSpec::rotating_z_half(1.9);
        let twice = transform_hamiltonian(&transform_hamiltonian(&m, &f1).unwrap(), &f2).unwrap();
        let once = transform_hamiltonian(&m, &f2.compose_after(&f1).unwrap()).unwrap();
        for t in [0.0, 0.4, 3.3] {
            assert!(dist(&twice.h_matrix(t), &once.h_matrix(t)) < 1e-9);
        }
        let fx = FrameSpec::new("x", HermitianOperator::new(sigma_x()).unwrap(), 1.0);
        assert_eq!(fx.compose_after(&f1).unwrap_err(), FrameError::NonCommutingGenerators);
    }

    #[test]
    fn theorem1_identity_frame_has_zero_deviation() {
        let m = oscillating_qubit(W0, WT, 0.5 * W0).unwrap();
        let g = TimeGrid::resolved(0.0, 5.0, m.max_frequency(), 40).unwrap();
        let v = theorem1_check(&m, &FrameSpec::identity(2), 0, &g, DEFAULT_TOLERANCE).unwrap();
        assert!(v.holds);
        assert!(v.max_deviation < 1e-12);
    }

    #[test]
    fn theorem2_rejects_time_dependent_rotated_hamiltonian() {
        let m = oscillating_qubit(W0, WT, W0).unwrap();
        let g = TimeGrid::resolved(0.0, 2.0, 3.0 * W0, 40).unwrap();
        let err = theorem2_check(&m, &FrameSpec::rotating_z(W0), 0, &g, DEFAULT_TOLERANCE).unwrap_err();
        assert!(matches!(err, FrameError::NonConstant { .. }));
    }

    #[test]
    fn theorem2_diagonal_rotated_hamiltonian_is_exact() {
        // Without a transverse field H_O is diagonal in the same basis.
        let m = nmr_rotating(W0, 0.0, 0.5 * W0).unwrap();
        let f = FrameSpec::rotating_z_half(0.5 * W0);
        let g = TimeGrid::resolved(0.0, 10.0, m.max_frequency() + 0.5 * W0, 40).unwrap();
        let v = theorem2_check(&m, &f, 0, &g, DEFAULT_TOLERANCE).unwrap();
        assert!(v.max_deviation < 1e-12, "{}", v.max_deviation);
    }

    #[test]
    fn theorem2_nmr_resonance_flops() {
        let (w0, wrf) = (W0, 2.0 * PI * 0.02);
        let m = nmr_rotating(w0, wrf, w0).unwrap();
        let f = FrameSpec::rotating_z_half(w0);
        let g = TimeGrid::resolved(0.0, 100.0, m.max_frequency() + w0, 40).unwrap();
        let v = theorem2_check(&m, &f, 0, &g, DEFAULT_TOLERANCE).unwrap();
        assert!(!v.holds);
        assert!(v.max_deviation > 0.99);
    }

    #[test]
    fn printed_form_report_structure() {
        let g = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let r = printed_rotated_form_crosscheck(W0, WT, W0, &g).unwrap();
        assert_eq!(r.candidates.len(), 6);
        assert!(r.candidates.iter().all(|c| c.deviations.len() == 100));
        // No rotation: the printed form collapses to ω₀σz/2.
        let r = printed_rotated_form_crosscheck(W0, WT, 0.0, &g).unwrap();
        let p = printed_rotated_form(W0, WT, 0.0, PrintedTheta::SplittingOverCoupling, 0.3);
        assert!(dist(&p, &scale(&sigma_z(), W0 / 2.0)) < 1e-15);
        assert_eq!(r.candidates.len(), 6);
    }

    #[test]
    fn printed_form_diverges_without_coupling() {
        let g = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let r = printed_rotated_form_crosscheck(W0, 0.0, 0.9 * W0, &g).unwrap();
        let printed_theta: Vec<_> =
            r.candidates.iter().filter(|c| c.theta == PrintedTheta::SplittingOverCoupling).collect();
        assert!(printed_theta.iter().all(|c| c.singular));
    }
}

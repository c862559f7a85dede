//! Continuity-tracked instantaneous eigensystems on a uniform time grid.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::hamiltonians::HamiltonianModel;
use crate::linalg::{
    eig_hermitian, hermiticity_defect, inner, spectral_norm, CVector, Eigensystem,
    HermitianOperator, StateVector, C64, HERMITICITY_TOL,
};

pub const DEFAULT_POINTS_PER_PERIOD: usize = 40;
pub const CONTINUITY_THRESHOLD: f64 = 0.9;
/// Relative eigenvalue separation below which a cluster counts as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error(
        "grid spacing {dt:.4e} us exceeds the resolution limit {max_dt:.4e} us \
         (40 points per period of the fastest frequency); use at least {min_steps} steps \
         or override the resolution check"
    )]
    Resolution { dt: f64, max_dt: f64, min_steps: usize },
    #[error("grid too coarse near avoided crossing at t={t} (level {level}, overlap {overlap:.4})")]
    Discontinuity { t: f64, level: usize, overlap: f64 },
    #[error("H(t) is not Hermitian at t={t}: defect {defect:.3e}")]
    NotHermitian { t: f64, defect: f64 },
    #[error("H(t) has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub tau: f64,
    pub steps: usize,
    #[serde(skip)]
    pub resolution_override: bool,
}

impl TimeGrid {
    pub fn new(t0: f64, tau: f64, steps: usize) -> Result<Self, SpectralError> {
        if !t0.is_finite() || !tau.is_finite() {
            return Err(SpectralError::InvalidGrid("t0 and tau must be finite".into()));
        }
        if tau <= t0 {
            return Err(SpectralError::InvalidGrid(format!("tau ({tau}) must exceed t0 ({t0})")));
        }
        if steps < 2 {
            return Err(SpectralError::InvalidGrid(format!("steps must be at least 2, got {steps}")));
        }
        Ok(Self { t0, tau, steps, resolution_override: false })
    }

    /// The coarsest grid meeting `points_per_period` samples per period of
    /// `max_frequency`.
    pub fn resolved(
        t0: f64,
        tau: f64,
        max_frequency: f64,
        points_per_period: usize,
    ) -> Result<Self, SpectralError> {
        Self::new(t0, tau, required_steps(t0, tau, max_frequency, points_per_period))
    }

    pub fn overriding_resolution(mut self) -> Self {
        self.resolution_override = true;
        self
    }

    pub fn dt(&self) -> f64 {
        (self.tau - self.t0) / (self.steps - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.steps
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.steps {
            self.tau
        } else {
            self.t0 + self.dt() * i as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.steps).map(|i| self.point(i)).collect()
    }

    /// Same span with twice the intervals; every original point is kept.
    pub fn halved(&self) -> Self {
        Self { steps: 2 * (self.steps - 1) + 1, ..self.clone() }
    }

    pub fn check_resolution(&self, max_frequency: f64) -> Result<(), SpectralError> {
        if self.resolution_override || max_frequency <= 0.0 {
            return Ok(());
        }
        let max_dt = 2.0 * PI / max_frequency / DEFAULT_POINTS_PER_PERIOD as f64;
        let dt = self.dt();
        if dt > max_dt * (1.0 + 1e-12) {
            return Err(SpectralError::Resolution {
                dt,
                max_dt,
                min_steps: required_steps(self.t0, self.tau, max_frequency, DEFAULT_POINTS_PER_PERIOD),
            });
        }
        Ok(())
    }
}

pub fn required_steps(t0: f64, tau: f64, max_frequency: f64, points_per_period: usize) -> usize {
    if max_frequency <= 0.0 {
        return 2;
    }
    let max_dt = 2.0 * PI / max_frequency / points_per_period.max(1) as f64;
    let intervals = ((tau - t0) / max_dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    intervals + 1
}

#[derive(Debug, Clone)]
pub struct EigensystemTrajectory {
    grid: TimeGrid,
    energies: Vec<Vec<f64>>,
    states: Vec<Vec<StateVector>>,
    min_overlap: f64,
    min_overlap_at: f64,
}

impl EigensystemTrajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.energies[0].len()
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energy(&self, i: usize, n: usize) -> f64 {
        self.energies[i][n]
    }

    pub fn energies_at(&self, i: usize) -> &[f64] {
        &self.energies[i]
    }

    pub fn state(&self, i: usize, n: usize) -> &StateVector {
        &self.states[i][n]
    }

    pub fn states_at(&self, i: usize) -> &[StateVector] {
        &self.states[i]
    }

    /// `1 − min |⟨vₙ(tᵢ)|vₙ(tᵢ₊₁)⟩|` over all levels and steps.
    pub fn max_overlap_deficit(&self) -> f64 {
        1.0 - self.min_overlap
    }

    pub fn worst_overlap_time(&self) -> f64 {
        self.min_overlap_at
    }

    /// Copy with level `n` multiplied by the constant phase `e^{iφ}` at every
    /// grid point.
    pub fn with_level_phase(&self, n: usize, phase: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.states {
            row[n] = row[n].with_phase(phase);
        }
        out
    }

    pub fn eigensystem_at(&self, i: usize) -> Eigensystem {
        Eigensystem { values: self.energies[i].clone(), vectors: self.states[i].clone() }
    }
}

/// Diagonalizes `model` at every grid point and labels eigenvectors so that
/// each branch is continuous.
///
/// The first point is ordered by ascending energy. Afterwards each level is
/// matched to the eigenvector with maximal overlap, and its phase is chosen
/// so that the step-to-step overlap is real and positive. Exactly degenerate
/// points inherit the basis of the neighboring point projected onto the
/// degenerate subspace.
pub fn track_eigensystem(
    model: &HamiltonianModel,
    grid: &TimeGrid,
) -> Result<EigensystemTrajectory, SpectralError> {
    grid.check_resolution(model.max_frequency())?;
    let dim = model.dim();
    let points = grid.points();
    let raw: Vec<(Eigensystem, f64)> = points
        .par_iter()
        .map(|&t| {
            let m = model.h_matrix(t);
            if m.nrows() != dim || m.ncols() != dim {
                return Err(SpectralError::DimensionMismatch { expected: dim, found: m.nrows() });
            }
            let norm = spectral_norm(&m);
            let defect = hermiticity_defect(&m);
            if !(defect <= HERMITICITY_TOL * norm.max(1.0)) {
                return Err(SpectralError::NotHermitian { t, defect });
            }
            Ok((eig_hermitian(&HermitianOperator::new_unchecked(m)), norm))
        })
        .collect::<Result<_, _>>()?;
    track_raw(grid.clone(), raw)
}

fn clusters(values: &[f64], scale: f64) -> Vec<Vec<usize>> {
    let tol = DEGENERACY_TOL * scale.max(1.0);
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(c) if v - values[*c.last().unwrap()] <= tol => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

/// Rebuilds the basis of each degenerate cluster of `eig` from the projections
/// of `reference` onto that cluster.
fn resolve_degeneracy(eig: &mut Eigensystem, scale: f64, reference: &[StateVector]) {
    for cluster in clusters(&eig.values, scale) {
        if cluster.len() < 2 {
            continue;
        }
        let basis: Vec<CVector> = cluster.iter().map(|&k| eig.vectors[k].vector().clone()).collect();
        let project = |v: &CVector| -> CVector {
            basis.iter().fold(CVector::zeros(v.len()), |acc, b| acc + b * inner(b, v))
        };
        let mut weights: Vec<(f64, usize)> = reference
            .iter()
            .enumerate()
            .map(|(r, v)| (project(v.vector()).norm(), r))
            .collect();
        weights.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<CVector> = Vec::new();
        for &(_, r) in &weights {
            if chosen.len() == cluster.len() {
                break;
            }
            let mut v = project(reference[r].vector());
            for q in &chosen {
                v -= q * inner(q, &v);
            }
            let n = v.norm();
            if n > 1e-6 {
                chosen.push(v / C64::new(n, 0.0));
            }
        }
        for b in &basis {
            if chosen.len() == cluster.len() {
                break;
            }
            let mut v = b.clone();
            for q in &chosen {
                v -= q * inner(q, &v);
            }
            let n = v.norm();
            if n > 1e-6 {
                chosen.push(v / C64::new(n, 0.0));
            }
        }
        for (&k, v) in cluster.iter().zip(chosen) {
            eig.vectors[k] = StateVector::new_unchecked(v);
        }
    }
}

fn track_raw(grid: TimeGrid, raw: Vec<(Eigensystem, f64)>) -> Result<EigensystemTrajectory, SpectralError> {
    let n_pts = raw.len();
    let dim = raw[0].0.dim();
    let mut raw = raw;

    // A degenerate first point takes its basis from the first nondegenerate one.
    if clusters(&raw[0].0.values, raw[0].1).len() < dim {
        if let Some(j) = (1..n_pts).find(|&j| clusters(&raw[j].0.values, raw[j].1).len() == dim) {
            let reference = raw[j].0.vectors.clone();
            let scale = raw[0].1;
            resolve_degeneracy(&mut raw[0].0, scale, &reference);
        }
    }

    let mut energies = Vec::with_capacity(n_pts);
    let mut states: Vec<Vec<StateVector>> = Vec::with_capacity(n_pts);
    energies.push(raw[0].0.values.clone());
    states.push(raw[0].0.vectors.clone());
    let mut min_overlap = 1.0_f64;
    let mut min_overlap_at = grid.t0;

    for (i, (eig, scale)) in raw.into_iter().enumerate().skip(1) {
        let mut eig = eig;
        let prev = &states[i - 1];
        resolve_degeneracy(&mut eig, scale, prev);

        // Greedy assignment on the overlap matrix, largest overlaps first.
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(dim * dim);
        for (n, p) in prev.iter().enumerate() {
            for (m, w) in eig.vectors.iter().enumerate() {
                pairs.push((p.inner(w).norm(), n, m));
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut assigned = vec![usize::MAX; dim];
        let mut used = vec![false; dim];
        for &(_, n, m) in &pairs {
            if assigned[n] == usize::MAX && !used[m] {
                assigned[n] = m;
                used[m] = true;
            }
        }

        let t = grid.point(i);
        let mut row_e = Vec::with_capacity(dim);
        let mut row_v = Vec::with_capacity(dim);
        for n in 0..dim {
            let m = assigned[n];
            let w = &eig.vectors[m];
            let ov = prev[n].inner(w);
            let mag = ov.norm();
            if mag < min_overlap {
                min_overlap = mag;
                min_overlap_at = t;
            }
            if mag < CONTINUITY_THRESHOLD {
                return Err(SpectralError::Discontinuity { t, level: n, overlap: mag });
            }
            let phase = ov.conj() / C64::new(mag, 0.0);
            row_e.push(eig.values[m]);
            row_v.push(StateVector::new_unchecked(w.vector() * phase));
        }
        energies.push(row_e);
        states.push(row_v);
    }

    Ok(EigensystemTrajectory { grid, energies, states, min_overlap, min_overlap_at })
}

#[derive(Debug, Clone, Serialize)]
pub struct BerryTrace {
    pub level: usize,
    pub values: Vec<C64>,
    pub max_abs: f64,
    pub max_real: f64,
    /// Largest finite-difference `‖v̇‖`, the scale against which the real part
    /// is judged.
    pub derivative_scale: f64,
}

impl BerryTrace {
    /// `Re γ` must be a discretization artifact: at most `5e-3` of the larger
    /// of `max|γ|` and the state-derivative scale.
    pub fn real_part_is_negligible(&self) -> bool {
        self.max_real <= 5e-3 * self.max_abs.max(self.derivative_scale) + 1e-14
    }
}

/// `γₙ(tᵢ) = ⟨Eₙ(tᵢ)|Ėₙ(tᵢ)⟩` from central differences of the tracked states,
/// one-sided second-order at the endpoints.
pub fn berry_term(traj: &EigensystemTrajectory, n: usize) -> BerryTrace {
    let len = traj.len();
    let dt = traj.grid().dt();
    let v = |i: usize| traj.state(i, n).vector();
    let derivative = |i: usize| -> CVector {
        if len < 3 {
            return (v(1) - v(0)) / C64::new(dt, 0.0);
        }
        if i == 0 {
            (v(1) * C64::new(4.0, 0.0) - v(0) * C64::new(3.0, 0.0) - v(2)) / C64::new(2.0 * dt, 0.0)
        } else if i == len - 1 {
            (v(i) * C64::new(3.0, 0.0) - v(i - 1) * C64::new(4.0, 0.0) + v(i - 2))
                / C64::new(2.0 * dt, 0.0)
        } else {
            (v(i + 1) - v(i - 1)) / C64::new(2.0 * dt, 0.0)
        }
    };
    let mut values = Vec::with_capacity(len);
    let mut derivative_scale = 0.0_f64;
    for i in 0..len {
        let d = derivative(i);
        derivative_scale = derivative_scale.max(d.norm());
        values.push(inner(v(i), &d));
    }
    let max_abs = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let max_real = values.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    BerryTrace { level: n, values, max_abs, max_real, derivative_scale }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ThetaVariant {
    /// `θ = arctan(ω₀/ω_T)`, the printed choice.
    SplittingOverCoupling,
    /// `θ = arctan(ω_T/ω₀)`.
    CouplingOverSplitting,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedFormVariant {
    pub theta_variant: ThetaVariant,
    pub theta: f64,
    pub sigma: f64,
    pub alpha: [f64; 2],
    pub printed_energies: [f64; 2],
    /// `|E_printed − E_numeric|` per level, matched by ascending index.
    pub energy_deviation: [f64; 2],
    /// `1 − |⟨E_printed|E_numeric⟩|` per level.
    pub state_deviation: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedFormReport {
    pub t: f64,
    pub evaluable: bool,
    pub note: Option<String>,
    pub numeric_energies: [f64; 2],
    pub numeric_gap: f64,
    pub variants: Vec<ClosedFormVariant>,
}

impl ClosedFormReport {
    pub fn max_energy_deviation(&self) -> f64 {
        self.variants
            .iter()
            .flat_map(|v| v.energy_deviation)
            .fold(0.0, f64::max)
    }
}

/// Evaluates the printed eigensystem of `ω₀σz + ω_T sin(ωt)σx`,
///
/// `|Eₙ⟩ ∝ −(−1)ⁿαₙ|0⟩ + |1⟩`, `αₙ = ½cosθ csc(ωt)[−2(−1)ⁿcosθ + Σ]`,
/// `Σ² = 3 + cos2θ − 2cos(2ωt)sin²θ`, `Eₙ = −(−1)ⁿω₀Σ/2`,
///
/// for both readings of θ, and compares with direct diagonalization. The
/// numeric side is authoritative; mismatches are reported, never raised.
pub fn closed_form_crosscheck(omega0: f64, omega_t: f64, omega: f64, t: f64) -> ClosedFormReport {
    let s = omega * t;
    let h = crate::linalg::sigma_z() * C64::new(omega0, 0.0)
        + crate::linalg::sigma_x() * C64::new(omega_t * s.sin(), 0.0);
    let eig = eig_hermitian(&HermitianOperator::new_unchecked(h));
    let numeric_energies = [eig.values[0], eig.values[1]];
    let numeric_gap = eig.values[1] - eig.values[0];
    let sin_s = s.sin();
    if sin_s.abs() < 1e-12 {
        return ClosedFormReport {
            t,
            evaluable: false,
            note: Some(format!("not evaluable at this t: sin(omega t) = {sin_s:.3e}, csc is singular")),
            numeric_energies,
            numeric_gap,
            variants: Vec::new(),
        };
    }
    let variants = [ThetaVariant::SplittingOverCoupling, ThetaVariant::CouplingOverSplitting]
        .into_iter()
        .map(|variant| {
            let theta = match variant {
                ThetaVariant::SplittingOverCoupling => omega0.atan2(omega_t),
                ThetaVariant::CouplingOverSplitting => omega_t.atan2(omega0),
            };
            let sigma2 = 3.0 + (2.0 * theta).cos() - 2.0 * (2.0 * s).cos() * theta.sin().powi(2);
            let sigma = sigma2.max(0.0).sqrt();
            let mut alpha = [0.0; 2];
            let mut printed_energies = [0.0; 2];
            let mut energy_deviation = [0.0; 2];
            let mut state_deviation = [0.0; 2];
            for n in 0..2 {
                let sign = if n == 0 { 1.0 } else { -1.0 }; // (−1)ⁿ
                let a = 0.5 * theta.cos() / sin_s * (-2.0 * sign * theta.cos() + sigma);
                alpha[n] = a;
                printed_energies[n] = -sign * omega0 * sigma / 2.0;
                energy_deviation[n] = (printed_energies[n] - numeric_energies[n]).abs();
                let v = CVector::from_vec(vec![C64::new(-sign * a, 0.0), C64::new(1.0, 0.0)]);
                let v = &v / C64::new(v.norm(), 0.0);
                state_deviation[n] = 1.0 - inner(&v, eig.vectors[n].vector()).norm();
            }
            ClosedFormVariant {
                theta_variant: variant,
                theta,
                sigma,
                alpha,
                printed_energies,
                energy_deviation,
                state_deviation,
            }
        })
        .collect();
    ClosedFormReport { t, evaluable: true, note: None, numeric_energies, numeric_gap, variants }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::{nmr_rotating, oscillating_qubit, static_model};
    use crate::linalg::{scale, sigma_z};
    use approx::assert_abs_diff_eq;

    const W0: f64 = 2.0 * PI;
    const WT: f64 = 2.0 * PI * 0.02;

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(0.0, 1.0, 11).unwrap();
        assert_abs_diff_eq!(g.dt(), 0.1, epsilon = 1e-15);
        assert_eq!(g.point(10), 1.0);
        let h = g.halved();
        assert_eq!(h.steps, 21);
        for i in 0..11 {
            assert_eq!(h.point(2 * i).to_bits(), g.point(i).to_bits());
        }
        assert!(TimeGrid::new(1.0, 1.0, 5).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn resolution_rule() {
        // 2π/ω_max = 1 μs, so Δt must not exceed 0.025 μs.
        let g = TimeGrid::new(0.0, 100.0, 4001).unwrap();
        g.check_resolution(2.0 * PI).unwrap();
        let coarse = TimeGrid::new(0.0, 100.0, 4000).unwrap();
        match coarse.check_resolution(2.0 * PI) {
            Err(SpectralError::Resolution { min_steps, .. }) => assert_eq!(min_steps, 4001),
            other => panic!("{other:?}"),
        }
        coarse.overriding_resolution().check_resolution(2.0 * PI).unwrap();
        assert_eq!(required_steps(0.0, 100.0, 20.0 * PI, 40), 40001);
    }

    #[test]
    fn static_trajectory_is_constant() {
        let m = static_model("static", &HermitianOperator::new(scale(&sigma_z(), W0)).unwrap());
        let g = TimeGrid::new(0.0, 1.0, 101).unwrap();
        let tr = track_eigensystem(&m, &g).unwrap();
        for i in 0..tr.len() {
            assert_eq!(tr.energies_at(i), &[-W0, W0]);
            for n in 0..2 {
                assert!((tr.state(i, n).vector() - tr.state(0, n).vector()).norm() < 1e-15);
            }
        }
        let b = berry_term(&tr, 0);
        assert_eq!(b.max_abs, 0.0);
    }

    #[test]
    fn driven_qubit_energies_follow_characteristic_polynomial() {
        let m = oscillating_qubit(W0, WT, W0).unwrap();
        let g = TimeGrid::resolved(0.0, 100.0, m.max_frequency(), 40).unwrap();
        let tr = track_eigensystem(&m, &g).unwrap();
        for i in 0..tr.len() {
            let t = g.point(i);
            let e = (W0 * W0 + (WT * (W0 * t).sin()).powi(2)).sqrt();
            assert_abs_diff_eq!(tr.energy(i, 0), -e, epsilon = 1e-12);
            assert_abs_diff_eq!(tr.energy(i, 1), e, epsilon = 1e-12);
        }
    }

    #[test]
    fn no_label_swap_where_drive_vanishes() {
        let m = oscillating_qubit(W0, WT, W0).unwrap();
        let g = TimeGrid::resolved(0.0, 2.0, m.max_frequency(), 40).unwrap();
        let tr = track_eigensystem(&m, &g).unwrap();
        for i in 1..tr.len() {
            for n in 0..2 {
                for k in 0..2 {
                    let ov = tr.state(i - 1, n).inner(tr.state(i, k)).norm();
                    if n == k {
                        assert!(1.0 - ov < 1e-6);
                    } else {
                        assert!(ov < 1e-3);
                    }
                }
            }
        }
    }

    #[test]
    fn tracked_overlaps_are_real_positive_and_states_orthonormal() {
        let m = nmr_rotating(W0, 0.3, 0.5 * W0).unwrap();
        let g = TimeGrid::resolved(0.0, 5.0, m.max_frequency(), 40).unwrap();
        let tr = track_eigensystem(&m, &g).unwrap();
        for i in 0..tr.len() {
            for n in 0..2 {
                for k in 0..2 {
                    let z = tr.state(i, n).inner(tr.state(i, k));
                    let expected = if n == k { 1.0 } else { 0.0 };
                    assert!((z - C64::new(expected, 0.0)).norm() < 1e-10);
                }
                if i > 0 {
                    let z = tr.state(i - 1, n).inner(tr.state(i, n));
                    assert!(z.im.abs() < 1e-14 && z.re > 0.0);
                }
            }
            let rec = tr.eigensystem_at(i).reconstruct();
            let h = m.h_matrix(g.point(i));
            assert!(spectral_norm(&(rec - &h)) <= 1e-8 * spectral_norm(&h));
        }
    }

    #[test]
    fn exact_crossing_is_tracked_through() {
        // H = sin(t)·n̂(t)·σ vanishes at t = 0 and t = π with a smooth axis.
        use std::sync::Arc;
        let m = HamiltonianModel::new(
            "crossing",
            2,
            2.0,
            Arc::new(|t: f64| {
                let (s, c) = t.sin_cos();
                crate::linalg::sigma_x() * C64::new(s * c, 0.0)
                    - crate::linalg::sigma_y() * C64::new(s * s, 0.0)
            }),
        );
        let g = TimeGrid::new(0.0, 2.0 * PI, 801).unwrap();
        let tr = track_eigensystem(&m, &g).unwrap();
        assert!(tr.max_overlap_deficit() < 1e-3);
        // The branch label follows the eigenvector, so energies change sign at t = π.
        let before = tr.energy(390, 0);
        let after = tr.energy(410, 0);
        assert!(before * after < 0.0);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let m = oscillating_qubit(W0, 3.0 * W0, 5.0).unwrap();
        let g = TimeGrid::new(0.0, 10.0, 12).unwrap().overriding_resolution();
        assert!(matches!(track_eigensystem(&m, &g), Err(SpectralError::Discontinuity { .. })));
    }

    #[test]
    fn berry_term_richardson_consistency() {
        let m = oscillating_qubit(W0, WT, W0).unwrap();
        let g = TimeGrid::resolved(0.0, 10.0, m.max_frequency(), 40).unwrap();
        let coarse = berry_term(&track_eigensystem(&m, &g).unwrap(), 0);
        let fine = berry_term(&track_eigensystem(&m, &g.halved()).unwrap(), 0);
        assert!(coarse.real_part_is_negligible());
        assert!(fine.real_part_is_negligible());
        let dt = g.dt();
        let diff = (0..g.len())
            .map(|i| (coarse.values[i] - fine.values[2 * i]).norm())
            .fold(0.0, f64::max);
        assert!(diff <= 10.0 * dt * dt * coarse.derivative_scale.max(1.0), "diff {diff}");
    }

    #[test]
    fn nmr_berry_magnitude_is_constant() {
        let m = nmr_rotating(W0, 0.3, 0.5 * W0).unwrap();
        for ppp in [40, 80] {
            let g = TimeGrid::resolved(0.0, 10.0, m.max_frequency(), ppp).unwrap();
            let b = berry_term(&track_eigensystem(&m, &g).unwrap(), 1);
            let interior: Vec<f64> = b.values[1..b.values.len() - 1].iter().map(|z| z.norm()).collect();
            let lo = interior.iter().copied().fold(f64::MAX, f64::min);
            let hi = interior.iter().copied().fold(0.0, f64::max);
            assert!(hi - lo < 1e-6, "spread {}", hi - lo);
        }
    }

    #[test]
    fn global_phase_leaves_energies_and_projectors() {
        let m = oscillating_qubit(W0, WT, 0.7).unwrap();
        let g = TimeGrid::resolved(0.0, 3.0, m.max_frequency(), 40).unwrap();
        let tr = track_eigensystem(&m, &g).unwrap();
        let rotated = tr.with_level_phase(1, 0.9);
        for i in 0..tr.len() {
            let d = tr.state(i, 1).projector() - rotated.state(i, 1).projector();
            assert!(spectral_norm(&d) < 1e-15);
        }
    }

    #[test]
    fn closed_form_peak_gap_and_singularity() {
        let w = W0;
        let r = closed_form_crosscheck(W0, WT, w, PI / (2.0 * w));
        assert!(r.evaluable);
        assert_abs_diff_eq!(r.numeric_gap, 2.0 * (W0 * W0 + WT * WT).sqrt(), epsilon = 1e-12);
        assert_eq!(r.variants.len(), 2);
        let r = closed_form_crosscheck(W0, WT, w, PI / w);
        assert!(!r.evaluable);
        assert!(r.note.unwrap().contains("not evaluable"));
    }
}

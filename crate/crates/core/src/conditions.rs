//! The four adiabatic-condition coefficients for a pair of tracked levels.
//!
//! With `E₀`, `E₁` the selected levels:
//!
//! * `C₁ = max |⟨E₀|Ḣ|E₁⟩| / (E₀−E₁)²`
//! * `C₂ = τ · max |d/dt[⟨E₀|Ḣ|E₁⟩ / (E₀−E₁)²]|`
//! * `C₃ = max |d₁₀| / |E₁ − E₀ − Δ₁₀|`, where
//!   `d₁₀ = ⟨E₁|Ḣ|E₀⟩/(E₀−E₁)` and `Δ₁₀ = iγ₁ − iγ₀ + d/dt arg[i·d₁₀]`
//! * `C₄ = τ² · max max{‖Ḣ‖³/|E₀−E₁|⁴, ‖Ḣ‖‖Ḧ‖/|E₀−E₁|³}`

use std::fmt;
use std::f64::consts::PI;

use serde_json::{json, Value};
use thiserror::Error;

use crate::hamiltonians::HamiltonianModel;
use crate::linalg::{sandwich, spectral_norm, DensityMatrix, C64};
use crate::output::{fmt_f64, json_f64, CsvTable};
use crate::spectral::{berry_term, EigensystemTrajectory};

/// Gap below which the coefficients are undefined (rad/μs).
pub const GAP_TOL: f64 = 1e-12;
/// `|E₁ − E₀ − Δ₁₀|` below which C₃ is reported as a pole.
pub const POLE_TOL: f64 = 1e-12;
/// `|d₁₀|` relative to its maximum below which `arg(i·d₁₀)` is undefined.
pub const PHASE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditionError {
    #[error("degenerate gap at t={t} (|E0 - E1| = {gap:.3e})")]
    DegenerateGap { t: f64, gap: f64 },
    #[error("level index {index} out of range for dimension {dim}")]
    LevelOutOfRange { index: usize, dim: usize },
    #[error("levels of a pair must differ")]
    SameLevel,
    #[error("dimension {dim} > 2: name the level pair explicitly")]
    LevelPairRequired { dim: usize },
    #[error("model dimension {model} does not match trajectory dimension {traj}")]
    DimensionMismatch { model: usize, traj: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameTag {
    Inertial,
    NonInertial(String),
}

impl fmt::Display for FrameTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameTag::Inertial => write!(f, "inertial"),
            FrameTag::NonInertial(id) => write!(f, "non-inertial({id})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelPair {
    pub ground: usize,
    pub excited: usize,
}

impl LevelPair {
    pub fn new(ground: usize, excited: usize, dim: usize) -> Result<Self, ConditionError> {
        for index in [ground, excited] {
            if index >= dim {
                return Err(ConditionError::LevelOutOfRange { index, dim });
            }
        }
        if ground == excited {
            return Err(ConditionError::SameLevel);
        }
        Ok(Self { ground, excited })
    }

    /// For a qubit: the tracked level with the largest initial population in
    /// `rho0`, paired with the other level.
    pub fn from_initial_state(
        traj: &EigensystemTrajectory,
        rho0: &DensityMatrix,
    ) -> Result<Self, ConditionError> {
        let dim = traj.dim();
        if dim != 2 {
            return Err(ConditionError::LevelPairRequired { dim });
        }
        let k = initial_level(traj, rho0);
        Ok(Self { ground: k, excited: 1 - k })
    }
}

/// The tracked level with maximal population in `rho0` at the first grid
/// point; ties go to the lower index.
pub fn initial_level(traj: &EigensystemTrajectory, rho0: &DensityMatrix) -> usize {
    let mut best = (f64::MIN, 0);
    for (n, v) in traj.states_at(0).iter().enumerate() {
        let p = rho0.expectation(v);
        if p > best.0 + 1e-12 {
            best = (p, n);
        }
    }
    best.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixElementKind {
    /// `⟨E₀|Ḣ|E₁⟩`
    HDot,
    /// `⟨E₁|Ḣ|E₀⟩/(E₀−E₁)`
    D10,
    /// `iγ₁ − iγ₀ + d/dt arg[i·d₁₀]`
    Delta10,
}

#[derive(Debug, Clone)]
pub struct MatrixElementTrace {
    pub kind: MatrixElementKind,
    pub values: Vec<C64>,
}

#[derive(Debug, Clone)]
pub struct CoefficientTrace {
    pub value: f64,
    pub argmax: f64,
    pub integrand: Vec<f64>,
}

impl CoefficientTrace {
    fn from_integrand(times: &[f64], integrand: Vec<f64>) -> Self {
        let mut value = 0.0;
        let mut argmax = times[0];
        for (&t, &x) in times.iter().zip(&integrand) {
            if x > value || (x.is_infinite() && !value.is_infinite()) {
                value = x;
                argmax = t;
            }
        }
        Self { value, argmax, integrand }
    }
}

#[derive(Debug, Clone)]
pub struct C3Trace {
    pub trace: CoefficientTrace,
    pub d10: MatrixElementTrace,
    pub delta10: MatrixElementTrace,
    /// Unwrapped `arg(i·d₁₀)`.
    pub phase: Vec<f64>,
    /// Grid indices where `d₁₀` vanished and the phase was interpolated.
    pub interpolated: Vec<usize>,
    /// Time of the first pole `E₁ − E₀ = Δ₁₀`, if any.
    pub pole: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub c: [f64; 4],
    pub argmax_times: [f64; 4],
    pub times: Vec<f64>,
    pub integrands: [Vec<f64>; 4],
    pub hdot_element: MatrixElementTrace,
    pub c3_detail: C3Trace,
    pub levels: LevelPair,
    pub frame: FrameTag,
    pub tau: f64,
}

struct PairData {
    times: Vec<f64>,
    gaps: Vec<f64>,
    hdot01: Vec<C64>,
}

fn pair_data(
    traj: &EigensystemTrajectory,
    model: &HamiltonianModel,
    levels: LevelPair,
) -> Result<PairData, ConditionError> {
    if model.dim() != traj.dim() {
        return Err(ConditionError::DimensionMismatch { model: model.dim(), traj: traj.dim() });
    }
    LevelPair::new(levels.ground, levels.excited, traj.dim())?;
    let times = traj.grid().points();
    let mut gaps = Vec::with_capacity(times.len());
    let mut hdot01 = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let gap = traj.energy(i, levels.ground) - traj.energy(i, levels.excited);
        if !(gap.abs() > GAP_TOL) {
            return Err(ConditionError::DegenerateGap { t, gap: gap.abs() });
        }
        let hd = model.h_dot_matrix(t);
        let e0 = traj.state(i, levels.ground).vector();
        let e1 = traj.state(i, levels.excited).vector();
        gaps.push(gap);
        hdot01.push(sandwich(e0, &hd, e1));
    }
    Ok(PairData { times, gaps, hdot01 })
}

/// Central differences in the interior, one-sided second order at the ends.
fn grid_derivative<T>(values: &[T], dt: f64) -> Vec<T>
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let n = values.len();
    if n < 3 {
        let d = (values[n - 1] - values[0]) * (1.0 / (dt * (n - 1) as f64));
        return vec![d; n];
    }
    let h = 1.0 / (2.0 * dt);
    (0..n)
        .map(|i| {
            if i == 0 {
                (values[1] * 4.0 - values[0] * 3.0 - values[2]) * h
            } else if i == n - 1 {
                (values[n - 1] * 3.0 - values[n - 2] * 4.0 + values[n - 3]) * h
            } else {
                (values[i + 1] - values[i - 1]) * h
            }
        })
        .collect()
}

pub fn coefficient_c1(
    traj: &EigensystemTrajectory,
    model: &HamiltonianModel,
    levels: LevelPair,
) -> Result<CoefficientTrace, ConditionError> {
    let d = pair_data(traj, model, levels)?;
    let integrand = d.hdot01.iter().zip(&d.gaps).map(|(m, g)| m.norm() / (g * g)).collect();
    Ok(CoefficientTrace::from_integrand(&d.times, integrand))
}

pub fn coefficient_c2(
    traj: &EigensystemTrajectory,
    model: &HamiltonianModel,
    levels: LevelPair,
    tau: f64,
) -> Result<CoefficientTrace, ConditionError> {
    let d = pair_data(traj, model, levels)?;
    Ok(c2_from(&d, traj.grid().dt(), tau))
}

fn c2_from(d: &PairData, dt: f64, tau: f64) -> CoefficientTrace {
    let f: Vec<C64> = d.hdot01.iter().zip(&d.gaps).map(|(m, g)| m / (g * g)).collect();
    let integrand = grid_derivative(&f, dt).iter().map(|z| z.norm() * tau).collect();
    CoefficientTrace::from_integrand(&d.times, integrand)
}

/// Wraps a phase increment into `(−π/2, π/2]`. A sign flip of `d₁₀` shifts
/// its argument by exactly π, which is removable.
fn wrap_half_turn(x: f64) -> f64 {
    let mut y = x.rem_euclid(PI);
    if y > PI / 2.0 {
        y -= PI;
    }
    y
}

pub fn coefficient_c3(
    traj: &EigensystemTrajectory,
    model: &HamiltonianModel,
    levels: LevelPair,
) -> Result<C3Trace, ConditionError> {
    let d = pair_data(traj, model, levels)?;
    Ok(c3_from(traj, &d, levels))
}

fn c3_from(traj: &EigensystemTrajectory, d: &PairData, levels: LevelPair) -> C3Trace {
    let n = d.times.len();
    let dt = traj.grid().dt();
    // ⟨E₁|Ḣ|E₀⟩ = conj⟨E₀|Ḣ|E₁⟩ for Hermitian Ḣ.
    let d10: Vec<C64> = d.hdot01.iter().zip(&d.gaps).map(|(m, g)| m.conj() / *g).collect();
    let scale = d10.iter().map(|z| z.norm()).fold(0.0, f64::max);

    let defined: Vec<bool> = d10.iter().map(|z| z.norm() > PHASE_FLOOR * scale && scale > 0.0).collect();
    let raw: Vec<f64> = d10.iter().map(|z| (C64::i() * z).arg()).collect();
    let mut phase = vec![0.0; n];
    let mut last: Option<(usize, f64)> = None;
    for i in 0..n {
        if !defined[i] {
            continue;
        }
        phase[i] = match last {
            Some((_, prev)) => prev + wrap_half_turn(raw[i] - prev),
            None => raw[i],
        };
        last = Some((i, phase[i]));
    }
    let interpolated: Vec<usize> = (0..n).filter(|&i| !defined[i]).collect();
    fill_undefined(&mut phase, &defined);

    let dphase = grid_derivative(&phase, dt);
    let g0 = berry_term(traj, levels.ground);
    let g1 = berry_term(traj, levels.excited);
    let i = C64::i();
    let delta10: Vec<C64> = (0..n)
        .map(|k| i * g1.values[k] - i * g0.values[k] + C64::new(dphase[k], 0.0))
        .collect();

    let mut pole = None;
    let integrand: Vec<f64> = (0..n)
        .map(|k| {
            // E₁ − E₀ = −gap
            let denom = (C64::new(-d.gaps[k], 0.0) - delta10[k]).norm();
            if denom < POLE_TOL {
                pole.get_or_insert(d.times[k]);
                f64::INFINITY
            } else {
                d10[k].norm() / denom
            }
        })
        .collect();

    C3Trace {
        trace: CoefficientTrace::from_integrand(&d.times, integrand),
        d10: MatrixElementTrace { kind: MatrixElementKind::D10, values: d10 },
        delta10: MatrixElementTrace { kind: MatrixElementKind::Delta10, values: delta10 },
        phase,
        interpolated,
        pole,
    }
}

/// Linear interpolation over runs of undefined points; constant
/// extrapolation at the ends.
fn fill_undefined(values: &mut [f64], defined: &[bool]) {
    let n = values.len();
    let known: Vec<usize> = (0..n).filter(|&i| defined[i]).collect();
    if known.is_empty() {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    for i in 0..n {
        if defined[i] {
            continue;
        }
        let right = known.iter().position(|&k| k > i);
        values[i] = match right {
            Some(0) => values[known[0]],
            None => values[*known.last().unwrap()],
            Some(r) => {
                let (a, b) = (known[r - 1], known[r]);
                let w = (i - a) as f64 / (b - a) as f64;
                values[a] * (1.0 - w) + values[b] * w
            }
        };
    }
}

pub fn coefficient_c4(
    traj: &EigensystemTrajectory,
    model: &HamiltonianModel,
    levels: LevelPair,
    tau: f64,
) -> Result<CoefficientTrace, ConditionError> {
    let d = pair_data(traj, model, levels)?;
    Ok(c4_from(model, &d, tau))
}

fn c4_from(model: &HamiltonianModel, d: &PairData, tau: f64) -> CoefficientTrace {
    let integrand = d
        .times
        .iter()
        .zip(&d.gaps)
        .map(|(&t, g)| {
            let hd = spectral_norm(&model.h_dot_matrix(t));
            let hdd = spectral_norm(&model.h_ddot_matrix(t));
            let g = g.abs();
            let a = tau * tau * hd.powi(3) / g.powi(4);
            let b = tau * tau * hd * hdd / g.powi(3);
            a.max(b)
        })
        .collect();
    CoefficientTrace::from_integrand(&d.times, integrand)
}

/// All four coefficients in one pass over the trajectory.
pub fn condition_report(
    traj: &EigensystemTrajectory,
    model: &HamiltonianModel,
    levels: LevelPair,
    tau: f64,
    frame: FrameTag,
) -> Result<ConditionReport, ConditionError> {
    let d = pair_data(traj, model, levels)?;
    let integrand1: Vec<f64> = d.hdot01.iter().zip(&d.gaps).map(|(m, g)| m.norm() / (g * g)).collect();
    let c1 = CoefficientTrace::from_integrand(&d.times, integrand1);
    let c2 = c2_from(&d, traj.grid().dt(), tau);
    let c3 = c3_from(traj, &d, levels);
    let c4 = c4_from(model, &d, tau);
    Ok(ConditionReport {
        c: [c1.value, c2.value, c3.trace.value, c4.value],
        argmax_times: [c1.argmax, c2.argmax, c3.trace.argmax, c4.argmax],
        times: d.times.clone(),
        integrands: [c1.integrand, c2.integrand, c3.trace.integrand.clone(), c4.integrand],
        hdot_element: MatrixElementTrace { kind: MatrixElementKind::HDot, values: d.hdot01 },
        c3_detail: c3,
        levels,
        frame,
        tau,
    })
}

impl ConditionReport {
    pub fn max_coefficient(&self) -> f64 {
        self.c.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "c1": json_f64(self.c[0]),
            "c2": json_f64(self.c[1]),
            "c3": json_f64(self.c[2]),
            "c4": json_f64(self.c[3]),
            "argmax_times": self.argmax_times.iter().map(|&t| json_f64(t)).collect::<Vec<_>>(),
            "frame": self.frame.to_string(),
            "levels": [self.levels.ground, self.levels.excited],
        })
    }

    pub fn trace_csv(&self) -> CsvTable {
        let mut table =
            CsvTable::new(&["t", "c1_integrand", "c2_integrand", "c3_integrand", "c4_integrand"]);
        for (i, &t) in self.times.iter().enumerate() {
            table.push_row(
                std::iter::once(t)
                    .chain(self.integrands.iter().map(|v| v[i]))
                    .map(fmt_f64)
                    .collect(),
            );
        }
        table
    }
}

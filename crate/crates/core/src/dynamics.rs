//! Closed-system density-matrix propagation and adiabatic fidelity.

use serde_json::{json, Value};
use thiserror::Error;

use crate::conditions::{initial_level, FrameTag};
use crate::frames::{transform_hamiltonian, FrameError, FrameSpec};
use crate::hamiltonians::HamiltonianModel;
use crate::linalg::{expm_hermitian, trace_norm, DensityMatrix, HermitianOperator, UnitaryOperator};
use crate::output::{fmt_f64, json_f64, CsvTable};
use crate::spectral::{EigensystemTrajectory, SpectralError, TimeGrid};

pub const TRACE_TOL: f64 = 1e-8;
pub const PURITY_TOL: f64 = 1e-7;
pub const ACCUMULATED_UNITARITY_TOL: f64 = 1e-9;
pub const FRAME_CONSISTENCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("initial state has dimension {state}, model has dimension {model}")]
    DimensionMismatch { state: usize, model: usize },
    #[error("trace drifted by {deviation:.3e} at step {step} (t={t})")]
    TraceDrift { step: usize, t: f64, deviation: f64 },
    #[error("purity drifted by {deviation:.3e} at step {step} (t={t})")]
    PurityDrift { step: usize, t: f64, deviation: f64 },
    #[error("accumulated propagator lost unitarity ({defect:.3e}) at step {step} (t={t})")]
    UnitarityDrift { step: usize, t: f64, defect: f64 },
    #[error("grid mismatch: {0} points vs {1}")]
    GridMismatch(usize, usize),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Clone)]
pub struct PropagationResult {
    pub grid: TimeGrid,
    pub states: Vec<DensityMatrix>,
    /// `‖U†U − I‖` of the accumulated propagator at the end of the run.
    pub unitarity_drift: f64,
    /// Largest single-step `‖U†U − I‖`.
    pub max_step_defect: f64,
    pub purity_drift: f64,
    pub propagator: UnitaryOperator,
    pub frame: FrameTag,
}

/// Midpoint-exponential stepping: `Uᵢ = exp(−iH(tᵢ + Δt/2)Δt)`,
/// `ρᵢ₊₁ = UᵢρᵢUᵢ†`.
pub fn propagate(
    model: &HamiltonianModel,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<PropagationResult, DynamicsError> {
    propagate_in(model, rho0, grid, FrameTag::Inertial)
}

pub fn propagate_in(
    model: &HamiltonianModel,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    frame: FrameTag,
) -> Result<PropagationResult, DynamicsError> {
    if rho0.dim() != model.dim() {
        return Err(DynamicsError::DimensionMismatch { state: rho0.dim(), model: model.dim() });
    }
    grid.check_resolution(model.max_frequency())?;
    let dt = grid.dt();
    let purity0 = rho0.purity();
    let mut states = Vec::with_capacity(grid.len());
    states.push(rho0.clone());
    let mut total = UnitaryOperator::identity(model.dim());
    let mut max_step_defect = 0.0_f64;
    let mut purity_drift = 0.0_f64;
    for step in 0..grid.len() - 1 {
        let t = grid.point(step);
        let h = HermitianOperator::new_unchecked(model.h_matrix(t + 0.5 * dt));
        let u = expm_hermitian(&h, dt);
        max_step_defect = max_step_defect.max(u.defect());
        total = u.compose(&total);
        let rho = states[step].conjugated_by(&u);
        let t_next = grid.point(step + 1);
        let trace_dev = (rho.trace() - 1.0).norm();
        if trace_dev > TRACE_TOL {
            return Err(DynamicsError::TraceDrift { step: step + 1, t: t_next, deviation: trace_dev });
        }
        let pd = (rho.purity() - purity0).abs();
        purity_drift = purity_drift.max(pd);
        if pd > PURITY_TOL {
            return Err(DynamicsError::PurityDrift { step: step + 1, t: t_next, deviation: pd });
        }
        states.push(rho);
    }
    let unitarity_drift = total.defect();
    if unitarity_drift > ACCUMULATED_UNITARITY_TOL {
        return Err(DynamicsError::UnitarityDrift {
            step: grid.len() - 1,
            t: grid.tau,
            defect: unitarity_drift,
        });
    }
    Ok(PropagationResult {
        grid: grid.clone(),
        states,
        unitarity_drift,
        max_step_defect,
        purity_drift,
        propagator: total,
        frame,
    })
}

/// Projectors onto tracked level `level` at every grid point.
pub fn adiabatic_reference(traj: &EigensystemTrajectory, level: usize) -> Vec<DensityMatrix> {
    (0..traj.len()).map(|i| DensityMatrix::pure(traj.state(i, level))).collect()
}

/// Level with maximal overlap with `rho0` at the first grid point.
pub fn reference_level(traj: &EigensystemTrajectory, rho0: &DensityMatrix) -> usize {
    initial_level(traj, rho0)
}

#[derive(Debug, Clone)]
pub struct FidelityTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub level: usize,
}

impl FidelityTrace {
    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_at(&self) -> f64 {
        let (i, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
        self.times[i]
    }
}

/// `F(tᵢ) = |Tr[ρ(tᵢ)ρ_ad(tᵢ)]|`.
pub fn fidelity(
    result: &PropagationResult,
    reference: &[DensityMatrix],
    level: usize,
) -> Result<FidelityTrace, DynamicsError> {
    if reference.len() != result.states.len() {
        return Err(DynamicsError::GridMismatch(result.states.len(), reference.len()));
    }
    let values = result
        .states
        .iter()
        .zip(reference)
        .map(|(rho, r)| (rho.matrix() * r.matrix()).trace().norm())
        .collect();
    Ok(FidelityTrace { times: result.grid.points(), values, level })
}

#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    pub max_deviation: f64,
    pub at_t: f64,
    pub deviations: Vec<f64>,
}

impl ConsistencyReport {
    pub fn consistent(&self) -> bool {
        self.max_deviation <= FRAME_CONSISTENCY_TOL
    }
}

/// Propagates in the inertial frame and conjugates by `O(t)`, propagates the
/// rotated model directly, and reports the largest trace-norm difference.
pub fn frame_consistency_check(
    model: &HamiltonianModel,
    frame: &FrameSpec,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<ConsistencyReport, DynamicsError> {
    let rotated = transform_hamiltonian(model, frame)?;
    let inertial = propagate(model, rho0, grid)?;
    let rho0_o = rho0.conjugated_by(&frame.operator(grid.t0));
    let direct = propagate_in(&rotated, &rho0_o, grid, FrameTag::NonInertial(frame.id.clone()))?;
    let times = grid.points();
    let deviations: Vec<f64> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let moved = inertial.states[i].conjugated_by(&frame.operator(t));
            trace_norm(&(moved.matrix() - direct.states[i].matrix()))
        })
        .collect();
    let (i, max_deviation) = deviations
        .iter()
        .enumerate()
        .fold((0, 0.0_f64), |a, (i, &d)| if d > a.1 { (i, d) } else { a });
    if max_deviation > FRAME_CONSISTENCY_TOL {
        log::warn!(
            "frame {}: dual propagation differs by {max_deviation:.3e} at t={}",
            frame.id,
            times[i]
        );
    }
    Ok(ConsistencyReport { max_deviation, at_t: times[i], deviations })
}

pub fn trace_csv(result: &PropagationResult, fid: &FidelityTrace) -> CsvTable {
    let dim = result.states[0].dim();
    let mut header = vec!["t_us".to_string(), "fidelity".into(), "purity".into()];
    header.extend((0..dim).map(|k| format!("population_{k}")));
    let mut table = CsvTable::new(&header);
    for (i, rho) in result.states.iter().enumerate() {
        let mut row = vec![fid.times[i], fid.values[i], rho.purity()];
        row.extend((0..dim).map(|k| rho.population(k)));
        table.push_row(row.into_iter().map(fmt_f64).collect());
    }
    table
}

pub fn summary_json(result: &PropagationResult, fid: &FidelityTrace) -> Value {
    json!({
        "terminal_fidelity": json_f64(fid.terminal()),
        "min_fidelity": json_f64(fid.min()),
        "min_fidelity_t": json_f64(fid.min_at()),
        "unitarity_drift": json_f64(result.unitarity_drift),
        "purity_drift": json_f64(result.purity_drift),
        "steps": result.grid.len(),
        "reference_level": fid.level,
        "frame": result.frame.to_string(),
    })
}

/// Repeats [`frame_consistency_check`] on successively halved grids until
/// the deviation meets [`FRAME_CONSISTENCY_TOL`] or `max_halvings` is spent.
/// Returns the last report and the grid it was computed on.
pub fn frame_consistency_refined(
    model: &HamiltonianModel,
    frame: &FrameSpec,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    max_halvings: usize,
) -> Result<(ConsistencyReport, TimeGrid), DynamicsError> {
    let mut g = grid.clone();
    let mut report = frame_consistency_check(model, frame, rho0, &g)?;
    for _ in 0..max_halvings {
        if report.consistent() {
            break;
        }
        g = g.halved();
        log::info!("frame {}: refining to {} steps", frame.id, g.len());
        report = frame_consistency_check(model, frame, rho0, &g)?;
    }
    Ok((report, g))
}

//! One scenario point end to end, and parallel sweeps over a parameter.

use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::config::{Diagnostic, ScenarioConfig};
use crate::conditions::{condition_report, ConditionError, ConditionReport, FrameTag, LevelPair};
use crate::dynamics::{
    adiabatic_reference, fidelity, frame_consistency_refined, propagate, reference_level, summary_json,
    trace_csv, ConsistencyReport, DynamicsError, FidelityTrace, PropagationResult,
};
use crate::frames::{
    constancy_defect, theorem1_check, theorem2_check, transform_hamiltonian, FrameError, TheoremVerdict,
    CONSTANCY_TOL,
};
use crate::linalg::{DensityMatrix, StateVector};
use crate::output::{fmt_f64, json_f64, write_json, CsvTable};
use crate::spectral::{track_eigensystem, SpectralError};

#[derive(Debug, Clone)]
pub enum PipelineError {
    Config(Vec<Diagnostic>),
    Numerical { message: String, t: Option<f64> },
    Io(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Io(_) => 2,
            PipelineError::Numerical { .. } => 3,
        }
    }

    fn numerical(message: impl Into<String>, t: Option<f64>) -> Self {
        PipelineError::Numerical { message: message.into(), t }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Config(d) => {
                writeln!(f, "invalid configuration:")?;
                for x in d {
                    writeln!(f, "  {x}")?;
                }
                Ok(())
            }
            PipelineError::Numerical { message, t: Some(t) } => write!(f, "numerical failure at t={t}: {message}"),
            PipelineError::Numerical { message, t: None } => write!(f, "numerical failure: {message}"),
            PipelineError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<SpectralError> for PipelineError {
    fn from(e: SpectralError) -> Self {
        let t = match &e {
            SpectralError::Discontinuity { t, .. } | SpectralError::NotHermitian { t, .. } => Some(*t),
            _ => None,
        };
        match e {
            SpectralError::InvalidGrid(_) | SpectralError::Resolution { .. } => PipelineError::Config(vec![Diagnostic {
                line: None,
                field: "grid".into(),
                message: e.to_string(),
            }]),
            _ => PipelineError::numerical(e.to_string(), t),
        }
    }
}

impl From<DynamicsError> for PipelineError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Spectral(s) => s.into(),
            DynamicsError::Frame(f) => f.into(),
            DynamicsError::TraceDrift { t, .. }
            | DynamicsError::PurityDrift { t, .. }
            | DynamicsError::UnitarityDrift { t, .. } => PipelineError::numerical(e.to_string(), Some(t)),
            _ => PipelineError::numerical(e.to_string(), None),
        }
    }
}

impl From<FrameError> for PipelineError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Spectral(s) => s.into(),
            FrameError::NonConstant { t, .. } => PipelineError::numerical(e.to_string(), Some(t)),
            _ => PipelineError::Config(vec![Diagnostic { line: None, field: "frame".into(), message: e.to_string() }]),
        }
    }
}

impl From<ConditionError> for PipelineError {
    fn from(e: ConditionError) -> Self {
        match e {
            ConditionError::DegenerateGap { t, .. } => PipelineError::numerical(e.to_string(), Some(t)),
            _ => PipelineError::Config(vec![Diagnostic { line: None, field: "levels".into(), message: e.to_string() }]),
        }
    }
}

/// Grid halvings allowed when the dual-propagation check has not converged.
pub const CONSISTENCY_HALVINGS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub dynamics: bool,
    pub conditions: bool,
    pub theorem1: bool,
    pub theorem2: bool,
    pub consistency: bool,
}

impl Stages {
    pub const ALL: Stages = Stages { dynamics: true, conditions: true, theorem1: true, theorem2: true, consistency: true };
    pub const SWEEP: Stages = Stages { consistency: false, ..Stages::ALL };
    pub const NONE: Stages =
        Stages { dynamics: false, conditions: false, theorem1: false, theorem2: false, consistency: false };
}

/// Coefficients, or the `+∞` sentinel when the gap closes on the grid.
#[derive(Debug, Clone)]
pub enum Coefficients {
    Report(Box<ConditionReport>),
    GapCollapse { t: f64, message: String },
}

impl Coefficients {
    pub fn values(&self) -> [f64; 4] {
        match self {
            Coefficients::Report(r) => r.c,
            Coefficients::GapCollapse { .. } => [f64::INFINITY; 4],
        }
    }

    pub fn report(&self) -> Option<&ConditionReport> {
        match self {
            Coefficients::Report(r) => Some(r),
            Coefficients::GapCollapse { .. } => None,
        }
    }

    pub fn to_json(&self, frame: &FrameTag, levels: LevelPair) -> Value {
        match self {
            Coefficients::Report(r) => r.to_json(),
            Coefficients::GapCollapse { t, message } => json!({
                "c1": "inf", "c2": "inf", "c3": "inf", "c4": "inf",
                "argmax_times": [json_f64(*t), json_f64(*t), json_f64(*t), json_f64(*t)],
                "frame": frame.to_string(),
                "levels": [levels.ground, levels.excited],
                "note": message,
            }),
        }
    }
}

fn coefficients(
    traj: &crate::spectral::EigensystemTrajectory,
    model: &crate::hamiltonians::HamiltonianModel,
    levels: LevelPair,
    tau: f64,
    frame: FrameTag,
) -> Result<Coefficients, PipelineError> {
    match condition_report(traj, model, levels, tau, frame) {
        Ok(r) => Ok(Coefficients::Report(Box::new(r))),
        Err(ConditionError::DegenerateGap { t, gap }) => Ok(Coefficients::GapCollapse {
            t,
            message: format!("degenerate gap at t={t} (|E0 - E1| = {gap:.3e})"),
        }),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub value: Option<f64>,
    pub model_name: String,
    pub frame_id: Option<String>,
    pub grid: crate::spectral::TimeGrid,
    pub reference_level: usize,
    pub levels: LevelPair,
    pub propagation: Option<PropagationResult>,
    pub fidelity: Option<FidelityTrace>,
    pub inertial: Option<Coefficients>,
    pub noninertial: Option<Coefficients>,
    pub noninertial_levels: Option<LevelPair>,
    pub theorem1: Option<TheoremVerdict>,
    /// `Err` carries the reason the constant-Hamiltonian check was skipped.
    pub theorem2: Option<Result<TheoremVerdict, String>>,
    pub consistency: Option<ConsistencyReport>,
    /// Grid size at which the dual-propagation check was finally run.
    pub consistency_steps: Option<usize>,
    pub warnings: Vec<String>,
}

fn initial_density(cfg: &ScenarioConfig, dim: usize) -> DensityMatrix {
    DensityMatrix::pure(&StateVector::basis(dim, cfg.initial_state))
}

fn level_pair(
    cfg: &ScenarioConfig,
    traj: &crate::spectral::EigensystemTrajectory,
    rho0: &DensityMatrix,
) -> Result<LevelPair, PipelineError> {
    Ok(match cfg.levels {
        Some((g, e)) => LevelPair::new(g, e, traj.dim())?,
        None => LevelPair::from_initial_state(traj, rho0)?,
    })
}

/// Runs the selected stages for a single parameter point.
pub fn run_point(cfg: &ScenarioConfig, stages: Stages, value: Option<f64>) -> Result<PointResult, PipelineError> {
    let model = cfg
        .build_model()
        .map_err(|e| PipelineError::Config(vec![Diagnostic { line: None, field: "model".into(), message: e.to_string() }]))?;
    let frame = cfg.build_frame(&model);
    let grid = cfg.build_grid(&model)?;
    let rho0 = initial_density(cfg, model.dim());
    let traj = track_eigensystem(&model, &grid)?;
    let reference = reference_level(&traj, &rho0);
    let levels = level_pair(cfg, &traj, &rho0)?;
    let tau = grid.tau - grid.t0;

    let mut out = PointResult {
        value,
        model_name: model.name().to_string(),
        frame_id: frame.as_ref().map(|f| f.id.clone()),
        grid: grid.clone(),
        reference_level: reference,
        levels,
        propagation: None,
        fidelity: None,
        inertial: None,
        noninertial: None,
        noninertial_levels: None,
        theorem1: None,
        theorem2: None,
        consistency: None,
        consistency_steps: None,
        warnings: model.warnings().to_vec(),
    };

    if stages.dynamics {
        let prop = propagate(&model, &rho0, &grid)?;
        let fid = fidelity(&prop, &adiabatic_reference(&traj, reference), reference)?;
        out.propagation = Some(prop);
        out.fidelity = Some(fid);
    }
    if stages.conditions {
        out.inertial = Some(coefficients(&traj, &model, levels, tau, FrameTag::Inertial)?);
    }
    let Some(frame) = frame else {
        return Ok(out);
    };
    let rotated = transform_hamiltonian(&model, &frame)?;
    if stages.conditions {
        let traj_o = track_eigensystem(&rotated, &grid)?;
        let rho0_o = rho0.conjugated_by(&frame.operator(grid.t0));
        let lp = level_pair(cfg, &traj_o, &rho0_o)?;
        out.noninertial_levels = Some(lp);
        out.noninertial = Some(coefficients(&traj_o, &rotated, lp, tau, FrameTag::NonInertial(frame.id.clone()))?);
    }
    if stages.theorem1 {
        out.theorem1 = Some(theorem1_check(&model, &frame, reference, &grid, cfg.theorem_tolerance)?);
    }
    if stages.theorem2 {
        let (defect, t) = constancy_defect(&rotated, &grid);
        out.theorem2 = Some(if defect > CONSTANCY_TOL {
            Err(format!("H_O is not constant (deviation {defect:.3e} at t={t})"))
        } else {
            Ok(theorem2_check(&model, &frame, reference, &grid, cfg.theorem_tolerance)?)
        });
    }
    if stages.consistency {
        let (report, g) = frame_consistency_refined(&model, &frame, &rho0, &grid, CONSISTENCY_HALVINGS)?;
        out.consistency = Some(report);
        out.consistency_steps = Some(g.len());
    }
    Ok(out)
}

impl PointResult {
    pub fn summary_json(&self) -> Value {
        let mut v = json!({
            "model": self.model_name,
            "frame": self.frame_id,
            "value": self.value.map(json_f64),
            "grid": { "t0": json_f64(self.grid.t0), "tau": json_f64(self.grid.tau), "steps": self.grid.steps },
            "reference_level": self.reference_level,
            "warnings": self.warnings,
        });
        let m = v.as_object_mut().unwrap();
        if let (Some(p), Some(f)) = (&self.propagation, &self.fidelity) {
            m.insert("dynamics".into(), summary_json(p, f));
        }
        if let Some(c) = &self.inertial {
            m.insert("conditions_inertial".into(), c.to_json(&FrameTag::Inertial, self.levels));
        }
        if let (Some(c), Some(id)) = (&self.noninertial, &self.frame_id) {
            let lp = self.noninertial_levels.unwrap_or(self.levels);
            m.insert("conditions_noninertial".into(), c.to_json(&FrameTag::NonInertial(id.clone()), lp));
        }
        if let Some(t) = &self.theorem1 {
            m.insert("theorem1".into(), t.to_json());
        }
        match &self.theorem2 {
            Some(Ok(t)) => {
                m.insert("theorem2".into(), t.to_json());
            }
            Some(Err(reason)) => {
                m.insert("theorem2".into(), json!({ "skipped": reason }));
            }
            None => {}
        }
        if let Some(c) = &self.consistency {
            m.insert(
                "frame_consistency".into(),
                json!({
                    "max_deviation": json_f64(c.max_deviation),
                    "t": json_f64(c.at_t),
                    "steps": self.consistency_steps,
                    "consistent": c.consistent(),
                }),
            );
        }
        v
    }

    /// Writes every artifact of this point under `dir` and returns the paths.
    pub fn write_artifacts(&self, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>, PipelineError> {
        let io = |e: std::io::Error| PipelineError::Io(e.to_string());
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut written = Vec::new();
        let put_csv = |name: String, t: CsvTable, w: &mut Vec<PathBuf>| -> Result<(), PipelineError> {
            let p = dir.join(name);
            t.write(&p).map_err(io)?;
            w.push(p);
            Ok(())
        };
        if let (Some(p), Some(f)) = (&self.propagation, &self.fidelity) {
            put_csv(format!("{prefix}_dynamics.csv"), trace_csv(p, f), &mut written)?;
        }
        if let Some(Coefficients::Report(r)) = &self.inertial {
            put_csv(format!("{prefix}_conditions_inertial.csv"), r.trace_csv(), &mut written)?;
        }
        if let Some(Coefficients::Report(r)) = &self.noninertial {
            put_csv(format!("{prefix}_conditions_noninertial.csv"), r.trace_csv(), &mut written)?;
        }
        if let Some(t) = &self.theorem1 {
            put_csv(format!("{prefix}_theorem1.csv"), t.trace_csv(), &mut written)?;
        }
        if let Some(Ok(t)) = &self.theorem2 {
            put_csv(format!("{prefix}_theorem2.csv"), t.trace_csv(), &mut written)?;
        }
        let p = dir.join(format!("{prefix}_summary.json"));
        write_json(&p, &self.summary_json()).map_err(io)?;
        written.push(p);
        Ok(written)
    }
}

#[derive(Debug, Clone)]
pub struct RowData {
    pub terminal_fidelity: f64,
    pub min_fidelity: f64,
    pub inertial: [f64; 4],
    pub noninertial: [f64; 4],
    pub theorem1: Option<(f64, bool)>,
    pub theorem2: Option<(f64, bool)>,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub outcome: Result<RowData, String>,
}

impl SweepRow {
    fn from_point(value: f64, p: &PointResult) -> Self {
        let mut notes = Vec::new();
        let inertial = p.inertial.as_ref().map(|c| c.values()).unwrap_or([f64::NAN; 4]);
        let noninertial = p.noninertial.as_ref().map(|c| c.values()).unwrap_or([f64::NAN; 4]);
        for c in [&p.inertial, &p.noninertial].into_iter().flatten() {
            match c {
                Coefficients::GapCollapse { message, .. } => notes.push(message.clone()),
                Coefficients::Report(r) => {
                    if let Some(t) = r.c3_detail.pole {
                        notes.push(format!("C3 pole at t={t}"));
                    }
                }
            }
        }
        let theorem2 = match &p.theorem2 {
            Some(Ok(v)) => Some((v.max_deviation, v.holds)),
            Some(Err(reason)) => {
                notes.push(reason.clone());
                None
            }
            None => None,
        };
        let (terminal_fidelity, min_fidelity) =
            p.fidelity.as_ref().map(|f| (f.terminal(), f.min())).unwrap_or((f64::NAN, f64::NAN));
        SweepRow {
            value,
            outcome: Ok(RowData {
                terminal_fidelity,
                min_fidelity,
                inertial,
                noninertial,
                theorem1: p.theorem1.as_ref().map(|v| (v.max_deviation, v.holds)),
                theorem2,
                note: if notes.is_empty() { "ok".into() } else { notes.join("; ") },
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub parameter: String,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_COLUMNS: &[&str] = &[
    "value",
    "terminal_fidelity",
    "min_fidelity",
    "c1_inertial",
    "c2_inertial",
    "c3_inertial",
    "c4_inertial",
    "c1_noninertial",
    "c2_noninertial",
    "c3_noninertial",
    "c4_noninertial",
    "theorem1_deviation",
    "theorem1_verdict",
    "theorem2_deviation",
    "theorem2_verdict",
    "note",
];

fn verdict_cells(v: Option<(f64, bool)>) -> [String; 2] {
    match v {
        Some((d, h)) => [fmt_f64(d), if h { "holds" } else { "violated" }.into()],
        None => [fmt_f64(f64::NAN), "n/a".into()],
    }
}

fn csv_text(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(SWEEP_COLUMNS);
        for r in &self.rows {
            let mut cells = vec![fmt_f64(r.value)];
            match &r.outcome {
                Ok(d) => {
                    cells.push(fmt_f64(d.terminal_fidelity));
                    cells.push(fmt_f64(d.min_fidelity));
                    cells.extend(d.inertial.iter().chain(&d.noninertial).map(|&x| fmt_f64(x)));
                    cells.extend(verdict_cells(d.theorem1));
                    cells.extend(verdict_cells(d.theorem2));
                    cells.push(csv_text(&d.note));
                }
                Err(msg) => {
                    cells.extend((0..10).map(|_| fmt_f64(f64::NAN)));
                    cells.extend(verdict_cells(None));
                    cells.extend(verdict_cells(None));
                    cells.push(csv_text(&format!("failed: {msg}")));
                }
            }
            t.push_row(cells);
        }
        t
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| match &r.outcome {
                Ok(d) => json!({
                    "value": json_f64(r.value),
                    "terminal_fidelity": json_f64(d.terminal_fidelity),
                    "min_fidelity": json_f64(d.min_fidelity),
                    "inertial": d.inertial.iter().map(|&x| json_f64(x)).collect::<Vec<_>>(),
                    "noninertial": d.noninertial.iter().map(|&x| json_f64(x)).collect::<Vec<_>>(),
                    "theorem1": d.theorem1.map(|(x, h)| json!({"max_deviation": json_f64(x), "holds": h})),
                    "theorem2": d.theorem2.map(|(x, h)| json!({"max_deviation": json_f64(x), "holds": h})),
                    "note": d.note,
                }),
                Err(msg) => json!({ "value": json_f64(r.value), "error": msg }),
            })
            .collect();
        json!({ "parameter": self.parameter, "rows": rows, "failures": self.failures() })
    }
}

/// Runs every sweep value on a pool of `workers` threads. Rows come back in
/// sweep order and a failing row records its message instead of aborting
/// the sweep.
pub fn sweep(cfg: &ScenarioConfig, stages: Stages, workers: usize) -> Result<SweepResult, PipelineError> {
    let spec = cfg.sweep.clone().ok_or_else(|| {
        PipelineError::Config(vec![Diagnostic { line: None, field: "sweep".into(), message: "no sweep.parameter/sweep.values".into() }])
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Io(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        use rayon::prelude::*;
        spec.values
            .par_iter()
            .map(|&v| {
                let c = cfg.with_sweep_value(v);
                match run_point(&c, stages, Some(v)) {
                    Ok(p) => SweepRow::from_point(v, &p),
                    Err(e) => SweepRow { value: v, outcome: Err(e.to_string().trim().replace('\n', " ")) },
                }
            })
            .collect()
    });
    let result = SweepResult { parameter: spec.parameter, rows };
    if result.failures() == result.rows.len() {
        let first = result.rows[0].outcome.as_ref().err().cloned().unwrap_or_default();
        return Err(PipelineError::numerical(format!("every sweep row failed; first: {first}"), None));
    }
    Ok(result)
}

pub fn write_sweep(result: &SweepResult, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>, PipelineError> {
    let io = |e: std::io::Error| PipelineError::Io(e.to_string());
    std::fs::create_dir_all(dir).map_err(io)?;
    let csv = dir.join(format!("{prefix}_sweep.csv"));
    result.to_csv().write(&csv).map_err(io)?;
    let js = dir.join(format!("{prefix}_sweep.json"));
    write_json(&js, &result.to_json()).map_err(io)?;
    Ok(vec![csv, js])
}

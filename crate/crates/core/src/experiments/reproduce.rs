//! Canned recipes for the oscillating-qubit figures and the NMR check.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::config::{parse_config, ScenarioConfig};
use super::pipeline::{run_point, sweep, write_sweep, PipelineError, Stages, SweepResult};
use crate::dynamics::trace_csv;
use crate::dynamics::reference_level;
use crate::frames::{constancy_defect, theorem2_check, transform_hamiltonian, FrameSpec, DEFAULT_TOLERANCE};
use crate::hamiltonians::nmr_rotating;
use crate::linalg::{DensityMatrix, StateVector};
use crate::output::{fmt_f64, json_f64, write_json, CsvTable};
use crate::spectral::{track_eigensystem, TimeGrid, DEFAULT_POINTS_PER_PERIOD};

pub const OMEGA0: f64 = 2.0 * PI;
pub const OMEGA_T: f64 = 2.0 * PI * 0.02;
pub const TAU: f64 = 100.0;
/// Drive ratios `a = ω/ω₀` shown in the fidelity figure.
pub const FIGURE_RATIOS: [f64; 5] = [10.0, 1.0173, 1.0, 0.9827, 0.1];
pub const SWEEP_POINTS: usize = 61;
/// Detuning `|ω − ω₀|/ω_rf` of the off-resonant NMR cases.
pub const NMR_DETUNING_RATIOS: [f64; 3] = [50.0, 100.0, 200.0];

/// Which two-level Hamiltonian stands in for the oscillating qubit.
///
/// `Printed` is `ω₀σz + ω_T sin(ωt)σx` with the `e^{iωtσz}` frame. Its level
/// splitting is `2ω₀`, so the resonance sits at `a = 2`. `Transition` is
/// `(ω₀/2)σz + ω_T sin(ωt)σx` with the `e^{iωtσz/2}` frame, which puts the
/// resonance at `a = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    Printed,
    Transition,
}

impl Convention {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "printed" => Some(Convention::Printed),
            "transition" => Some(Convention::Transition),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Convention::Printed => "printed",
            Convention::Transition => "transition",
        }
    }

    fn model(self) -> &'static str {
        match self {
            Convention::Printed => "oscillating_qubit",
            Convention::Transition => "oscillating_qubit_transition",
        }
    }

    fn frame(self) -> &'static str {
        match self {
            Convention::Printed => "rotating_z",
            Convention::Transition => "rotating_z_half",
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RecipeOptions {
    pub convention: Convention,
    pub workers: usize,
    pub points_per_period: usize,
}

impl Default for RecipeOptions {
    fn default() -> Self {
        Self { convention: Convention::Transition, workers: 1, points_per_period: DEFAULT_POINTS_PER_PERIOD }
    }
}

/// The oscillating-qubit scenario at drive ratio `a`, written in the config
/// grammar so that recipes and user files go through the same validation.
/// The recipes always attach the frame so that every figure shares the grid
/// resolved for the faster of the two pictures.
pub fn figure_config(opts: &RecipeOptions, a: f64, with_frame: bool) -> ScenarioConfig {
    let mut text = format!(
        "model.name = {}\nmodel.omega0 = 1 MHz\nmodel.omega_t = 0.02 MHz\nmodel.a = {a:?}\n\
         grid.tau = {TAU:?}\ngrid.points_per_period = {}\n",
        opts.convention.model(),
        opts.points_per_period
    );
    if with_frame {
        text.push_str(&format!("frame.kind = {}\n", opts.convention.frame()));
    }
    parse_config(&text, None).expect("built-in recipe config is valid")
}

/// 61 log-spaced ratios over `[0.1, 10]` with the figure ratios merged in.
pub fn sweep_ratios() -> Vec<f64> {
    let mut v: Vec<f64> = (0..SWEEP_POINTS)
        .map(|i| 10f64.powf(-1.0 + 2.0 * i as f64 / (SWEEP_POINTS - 1) as f64))
        .collect();
    v.extend(FIGURE_RATIOS);
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    v
}

#[derive(Debug, Clone)]
pub struct FidelityCurve {
    pub a: f64,
    pub terminal: f64,
    pub min: f64,
    pub min_at: f64,
    pub steps: usize,
    pub trace: CsvTable,
}

fn io(e: std::io::Error) -> PipelineError {
    PipelineError::Io(e.to_string())
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| PipelineError::Io(e.to_string()))
}

/// Adiabatic fidelity against time at each figure ratio.
pub fn fig2a(opts: &RecipeOptions) -> Result<Vec<FidelityCurve>, PipelineError> {
    let stages = Stages { dynamics: true, ..Stages::NONE };
    pool(opts.workers)?.install(|| {
        use rayon::prelude::*;
        FIGURE_RATIOS
            .par_iter()
            .map(|&a| {
                let p = run_point(&figure_config(opts, a, true), stages, Some(a))?;
                let (prop, fid) = (p.propagation.unwrap(), p.fidelity.unwrap());
                Ok(FidelityCurve {
                    a,
                    terminal: fid.terminal(),
                    min: fid.min(),
                    min_at: fid.min_at(),
                    steps: prop.grid.len(),
                    trace: trace_csv(&prop, &fid),
                })
            })
            .collect()
    })
}

pub fn write_fig2a(curves: &[FidelityCurve], dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut out = Vec::new();
    let mut summary = CsvTable::new(&["a", "terminal_fidelity", "min_fidelity", "min_fidelity_t", "steps"]);
    for c in curves {
        let p = dir.join(format!("fig2a_a{}.csv", c.a));
        c.trace.write(&p).map_err(io)?;
        out.push(p);
        summary.push_row(vec![fmt_f64(c.a), fmt_f64(c.terminal), fmt_f64(c.min), fmt_f64(c.min_at), c.steps.to_string()]);
    }
    let p = dir.join("fig2a_summary.csv");
    summary.write(&p).map_err(io)?;
    out.push(p);
    let js: Vec<Value> = curves
        .iter()
        .map(|c| {
            json!({ "a": json_f64(c.a), "terminal_fidelity": json_f64(c.terminal),
                    "min_fidelity": json_f64(c.min), "min_fidelity_t": json_f64(c.min_at), "steps": c.steps })
        })
        .collect();
    let p = dir.join("fig2a_summary.json");
    write_json(&p, &Value::Array(js)).map_err(io)?;
    out.push(p);
    Ok(out)
}

/// Condition coefficients against `a` in both frames.
pub fn coefficient_sweep(opts: &RecipeOptions) -> Result<SweepResult, PipelineError> {
    let mut cfg = figure_config(opts, 1.0, true);
    cfg.sweep = Some(super::config::SweepSpec { parameter: "a".into(), values: sweep_ratios() });
    let stages = Stages { dynamics: true, conditions: true, ..Stages::NONE };
    sweep(&cfg, stages, opts.workers)
}

/// `noninertial` picks which coefficient set goes in the compact table.
pub fn write_coefficient_sweep(
    result: &SweepResult,
    noninertial: bool,
    dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let name = if noninertial { "fig2c" } else { "fig2b" };
    let mut table = CsvTable::new(&["a", "c1", "c2", "c3", "c4", "terminal_fidelity", "note"]);
    for r in &result.rows {
        let mut cells = vec![fmt_f64(r.value)];
        match &r.outcome {
            Ok(d) => {
                let c = if noninertial { d.noninertial } else { d.inertial };
                cells.extend(c.iter().map(|&x| fmt_f64(x)));
                cells.push(fmt_f64(d.terminal_fidelity));
                cells.push(d.note.replace(',', ";"));
            }
            Err(m) => {
                cells.extend((0..5).map(|_| fmt_f64(f64::NAN)));
                cells.push(format!("failed: {}", m.replace(',', ";")));
            }
        }
        table.push_row(cells);
    }
    std::fs::create_dir_all(dir).map_err(io)?;
    let p = dir.join(format!("{name}.csv"));
    table.write(&p).map_err(io)?;
    let mut out = vec![p];
    out.extend(write_sweep(result, dir, name)?);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct NmrCase {
    pub label: String,
    pub omega: f64,
    /// `|ω − ω₀|/ω_rf`.
    pub detuning_ratio: f64,
    pub max_deviation: f64,
    pub witness_t: f64,
    pub holds: bool,
    pub constancy_defect: f64,
}

/// The constant-frame check on the NMR Hamiltonian, far from resonance and
/// on resonance. Every case starts in `|0⟩`, like the scenario default.
pub fn nmr(opts: &RecipeOptions) -> Result<Vec<NmrCase>, PipelineError> {
    let omega_rf = OMEGA_T;
    let mut cases: Vec<(String, f64)> = NMR_DETUNING_RATIOS
        .iter()
        .map(|&r| (format!("detuned_{r}"), OMEGA0 + r * omega_rf))
        .collect();
    cases.push(("resonance".into(), OMEGA0));
    pool(opts.workers)?.install(|| {
        use rayon::prelude::*;
        cases
            .par_iter()
            .map(|(label, omega)| {
                let model = nmr_rotating(OMEGA0, omega_rf, *omega)
                    .map_err(|e| PipelineError::Numerical { message: e.to_string(), t: None })?;
                let frame = FrameSpec::rotating_z_half(*omega);
                let maxf = model.max_frequency() + omega.abs() * frame.spread();
                let grid = TimeGrid::resolved(0.0, TAU, maxf, opts.points_per_period)?;
                let rotated = transform_hamiltonian(&model, &frame)?;
                let (defect, _) = constancy_defect(&rotated, &grid);
                let traj = track_eigensystem(&model, &grid)?;
                let rho0 = DensityMatrix::pure(&StateVector::basis(2, 0));
                let n = reference_level(&traj, &rho0);
                let v = theorem2_check(&model, &frame, n, &grid, DEFAULT_TOLERANCE)?;
                Ok(NmrCase {
                    label: label.clone(),
                    omega: *omega,
                    detuning_ratio: (omega - OMEGA0).abs() / omega_rf,
                    max_deviation: v.max_deviation,
                    witness_t: v.witness_t,
                    holds: v.holds,
                    constancy_defect: defect,
                })
            })
            .collect()
    })
}

pub fn write_nmr(cases: &[NmrCase], dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut t = CsvTable::new(&[
        "case",
        "omega",
        "detuning_ratio",
        "max_deviation",
        "witness_t",
        "verdict",
        "constancy_defect",
    ]);
    for c in cases {
        t.push_row(vec![
            c.label.clone(),
            fmt_f64(c.omega),
            fmt_f64(c.detuning_ratio),
            fmt_f64(c.max_deviation),
            fmt_f64(c.witness_t),
            if c.holds { "holds" } else { "violated" }.into(),
            fmt_f64(c.constancy_defect),
        ]);
    }
    let csv = dir.join("nmr.csv");
    t.write(&csv).map_err(io)?;
    let js: Vec<Value> = cases
        .iter()
        .map(|c| {
            json!({ "case": c.label, "omega": json_f64(c.omega), "detuning_ratio": json_f64(c.detuning_ratio),
                    "max_deviation": json_f64(c.max_deviation), "witness_t": json_f64(c.witness_t),
                    "holds": c.holds, "constancy_defect": json_f64(c.constancy_defect),
                    "tolerance": json_f64(DEFAULT_TOLERANCE) })
        })
        .collect();
    let p = dir.join("nmr.json");
    write_json(&p, &Value::Array(js)).map_err(io)?;
    Ok(vec![csv, p])
}

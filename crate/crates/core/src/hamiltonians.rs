//! Time-parametrized Hamiltonian families.
//!
//! A [`HamiltonianModel`] evaluates `H(t)`, `Ḣ(t)` and `Ḧ(t)`. Built-in models
//! carry analytic derivatives; anything else falls back to central finite
//! differences with a step tied to the drive period.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::{
    commutator, scale, sigma_x, sigma_y, sigma_z, spectral_norm, CMatrix, HermitianOperator,
    LinalgError, C64, HERMITICITY_TOL,
};

pub type MatrixFn = Arc<dyn Fn(f64) -> CMatrix + Send + Sync>;

/// Ratio below which `|ω₀| ≫ |ω_T|` is considered violated.
pub const REGIME_RATIO: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("omega0 must be nonzero")]
    ZeroSplitting,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("H(t) is not Hermitian at t = {t}: defect {defect:.3e}")]
    NotHermitian { t: f64, defect: f64 },
    #[error("[H_T(t), H0] vanishes at every sampled time; the transverse term must not commute with H0")]
    CommutingTransverse,
    #[error("non-finite parameter {0}")]
    NonFinite(String),
    #[error("tabulated model: {0}")]
    Table(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone)]
pub struct HamiltonianModel {
    name: String,
    dim: usize,
    params: BTreeMap<String, f64>,
    h: MatrixFn,
    h_dot: Option<MatrixFn>,
    h_ddot: Option<MatrixFn>,
    fd_step: f64,
    max_frequency: f64,
    warnings: Vec<String>,
}

impl fmt::Debug for HamiltonianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("params", &self.params)
            .field("analytic_derivatives", &self.has_analytic_derivatives())
            .field("max_frequency", &self.max_frequency)
            .finish()
    }
}

impl HamiltonianModel {
    /// A model with finite-difference derivatives. `max_frequency` (rad/μs) is
    /// the fastest rate at which `H(t)` or the state it drives varies; it sets
    /// the time-grid resolution requirement and the default difference step.
    pub fn new(name: impl Into<String>, dim: usize, max_frequency: f64, h: MatrixFn) -> Self {
        let fd_step = default_fd_step(max_frequency);
        Self {
            name: name.into(),
            dim,
            params: BTreeMap::new(),
            h,
            h_dot: None,
            h_ddot: None,
            fd_step,
            max_frequency: max_frequency.abs(),
            warnings: Vec::new(),
        }
    }

    pub fn with_derivatives(mut self, h_dot: Option<MatrixFn>, h_ddot: Option<MatrixFn>) -> Self {
        self.h_dot = h_dot;
        self.h_ddot = h_ddot;
        self
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    pub(crate) fn with_warning(mut self, w: String) -> Self {
        log::warn!("{}: {}", self.name, w);
        self.warnings.push(w);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    pub fn max_frequency(&self) -> f64 {
        self.max_frequency
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.h_dot.is_some() && self.h_ddot.is_some()
    }

    pub fn h_matrix(&self, t: f64) -> CMatrix {
        (self.h)(t)
    }

    pub fn h_dot_matrix(&self, t: f64) -> CMatrix {
        match &self.h_dot {
            Some(f) => f(t),
            None => {
                let s = self.fd_step;
                ((self.h)(t + s) - (self.h)(t - s)) / C64::new(2.0 * s, 0.0)
            }
        }
    }

    pub fn h_ddot_matrix(&self, t: f64) -> CMatrix {
        match (&self.h_ddot, &self.h_dot) {
            (Some(f), _) => f(t),
            (None, Some(d)) => {
                let s = self.fd_step;
                (d(t + s) - d(t - s)) / C64::new(2.0 * s, 0.0)
            }
            (None, None) => {
                let s = self.fd_step;
                ((self.h)(t + s) - (self.h)(t) * C64::new(2.0, 0.0) + (self.h)(t - s))
                    / C64::new(s * s, 0.0)
            }
        }
    }

    pub fn hamiltonian(&self, t: f64) -> HermitianOperator {
        HermitianOperator::new_unchecked(self.h_matrix(t))
    }

    pub fn derivative(&self, t: f64) -> HermitianOperator {
        HermitianOperator::new_unchecked(self.h_dot_matrix(t))
    }

    pub fn second_derivative(&self, t: f64) -> HermitianOperator {
        HermitianOperator::new_unchecked(self.h_ddot_matrix(t))
    }

    /// Checks Hermiticity of `H(t)` at each of `times`.
    pub fn check_hermitian(&self, times: &[f64]) -> Result<(), ModelError> {
        for &t in times {
            let m = self.h_matrix(t);
            if m.nrows() != self.dim || m.ncols() != self.dim {
                return Err(ModelError::DimensionMismatch(format!(
                    "H({t}) is {}x{}, model dimension is {}",
                    m.nrows(),
                    m.ncols(),
                    self.dim
                )));
            }
            let defect = spectral_norm(&(&m - m.adjoint()));
            if defect > HERMITICITY_TOL * spectral_norm(&m).max(1.0) || !defect.is_finite() {
                return Err(ModelError::NotHermitian { t, defect });
            }
        }
        Ok(())
    }
}

fn default_fd_step(max_frequency: f64) -> f64 {
    if max_frequency > 0.0 {
        1e-3_f64.min(1e-3 * 2.0 * PI / max_frequency)
    } else {
        1e-3
    }
}

fn finite(name: &str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFinite(name.to_string()))
    }
}

fn regime_warning(omega0: f64, coupling: f64, coupling_name: &str) -> Option<String> {
    (omega0.abs() <= REGIME_RATIO * coupling.abs()).then(|| {
        format!(
            "|omega0| = {:.4} is not much larger than |{coupling_name}| = {:.4}; \
             the weak-transverse-field regime does not hold",
            omega0.abs(),
            coupling.abs()
        )
    })
}

fn add_warning(model: HamiltonianModel, w: Option<String>) -> HamiltonianModel {
    match w {
        Some(w) => model.with_warning(w),
        None => model,
    }
}

/// `H(t) = ω₀σz + ω_T sin(ωt)σx` with the splitting written without a 1/2,
/// so the bare transition frequency is `2ω₀`.
pub fn oscillating_qubit(omega0: f64, omega_t: f64, omega: f64) -> Result<HamiltonianModel, ModelError> {
    driven_sigma_x("oscillating_qubit", omega0, omega0, omega_t, omega)
}

/// `H(t) = (ω₀/2)σz + ω_T sin(ωt)σx`: same drive, but `ω₀` is the transition
/// frequency, so `ω = ω₀` is the resonance.
pub fn oscillating_qubit_transition(
    omega0: f64,
    omega_t: f64,
    omega: f64,
) -> Result<HamiltonianModel, ModelError> {
    driven_sigma_x("oscillating_qubit_transition", omega0, omega0 / 2.0, omega_t, omega)
}

fn driven_sigma_x(
    name: &str,
    omega0: f64,
    z_coeff: f64,
    omega_t: f64,
    omega: f64,
) -> Result<HamiltonianModel, ModelError> {
    finite("omega0", omega0)?;
    finite("omega_t", omega_t)?;
    finite("omega", omega)?;
    if omega0 == 0.0 {
        return Err(ModelError::ZeroSplitting);
    }
    let z = scale(&sigma_z(), z_coeff);
    let x = sigma_x();
    let h = {
        let (z, x) = (z.clone(), x.clone());
        move |t: f64| &z + scale(&x, omega_t * (omega * t).sin())
    };
    let h_dot = {
        let x = x.clone();
        move |t: f64| scale(&x, omega * omega_t * (omega * t).cos())
    };
    let h_ddot = move |t: f64| scale(&x, -omega * omega * omega_t * (omega * t).sin());
    let splitting = 2.0 * (z_coeff * z_coeff + omega_t * omega_t).sqrt();
    let model = HamiltonianModel::new(name, 2, omega.abs().max(splitting), Arc::new(h))
        .with_derivatives(Some(Arc::new(h_dot)), Some(Arc::new(h_ddot)))
        .with_param("omega0", omega0)
        .with_param("omega_t", omega_t)
        .with_param("omega", omega);
    Ok(add_warning(model, regime_warning(omega0, omega_t, "omega_t")))
}

/// Spin-1/2 in a static field along z and a transverse field rotating at `ω`:
/// `H(t) = (ω₀/2)σz + (ω_rf/2)[cos(ωt)σx + sin(ωt)σy]`.
pub fn nmr_rotating(omega0: f64, omega_rf: f64, omega: f64) -> Result<HamiltonianModel, ModelError> {
    finite("omega0", omega0)?;
    finite("omega_rf", omega_rf)?;
    finite("omega", omega)?;
    if omega0 == 0.0 {
        return Err(ModelError::ZeroSplitting);
    }
    let z = scale(&sigma_z(), omega0 / 2.0);
    let (x, y) = (sigma_x(), sigma_y());
    let a = omega_rf / 2.0;
    let h = {
        let (z, x, y) = (z.clone(), x.clone(), y.clone());
        move |t: f64| {
            let (s, c) = (omega * t).sin_cos();
            &z + scale(&x, a * c) + scale(&y, a * s)
        }
    };
    let h_dot = {
        let (x, y) = (x.clone(), y.clone());
        move |t: f64| {
            let (s, c) = (omega * t).sin_cos();
            scale(&x, -a * omega * s) + scale(&y, a * omega * c)
        }
    };
    let h_ddot = move |t: f64| {
        let (s, c) = (omega * t).sin_cos();
        scale(&x, -a * omega * omega * c) + scale(&y, -a * omega * omega * s)
    };
    let splitting = (omega0 * omega0 + omega_rf * omega_rf).sqrt();
    let model = HamiltonianModel::new("nmr_rotating", 2, omega.abs().max(splitting), Arc::new(h))
        .with_derivatives(Some(Arc::new(h_dot)), Some(Arc::new(h_ddot)))
        .with_param("omega0", omega0)
        .with_param("omega_rf", omega_rf)
        .with_param("omega", omega);
    Ok(add_warning(model, regime_warning(omega0, omega_rf, "omega_rf")))
}

/// A time-dependent Hermitian family `H_T(ω, t)`, with optional analytic
/// derivatives.
#[derive(Clone)]
pub struct TransverseFamily {
    pub dim: usize,
    pub h: MatrixFn,
    pub h_dot: Option<MatrixFn>,
    pub h_ddot: Option<MatrixFn>,
}

impl TransverseFamily {
    /// `sin(ωt)·op`, the single oscillating field.
    pub fn oscillating(op: &HermitianOperator, omega: f64) -> Self {
        let (a, b, c) = (op.matrix().clone(), op.matrix().clone(), op.matrix().clone());
        Self {
            dim: op.dim(),
            h: Arc::new(move |t| scale(&a, (omega * t).sin())),
            h_dot: Some(Arc::new(move |t| scale(&b, omega * (omega * t).cos()))),
            h_ddot: Some(Arc::new(move |t| scale(&c, -omega * omega * (omega * t).sin()))),
        }
    }

    /// A family without analytic derivatives.
    pub fn from_fn(dim: usize, h: MatrixFn) -> Self {
        Self { dim, h, h_dot: None, h_ddot: None }
    }
}

/// `H(ω,t) = ω₀H₀ + ω_T·H_T(ω,t)` with ħ = 1.
#[derive(Clone)]
pub struct GenericDecomposition {
    pub omega0: f64,
    pub omega_t: f64,
    pub h0: HermitianOperator,
    pub ht: TransverseFamily,
    pub omega: f64,
}

pub fn generic_decomposed(g: GenericDecomposition) -> Result<HamiltonianModel, ModelError> {
    finite("omega0", g.omega0)?;
    finite("omega_t", g.omega_t)?;
    finite("omega", g.omega)?;
    let dim = g.h0.dim();
    if g.ht.dim != dim {
        return Err(ModelError::DimensionMismatch(format!(
            "H0 is {dim}x{dim}, H_T is {0}x{0}",
            g.ht.dim
        )));
    }
    let period = if g.omega != 0.0 { 2.0 * PI / g.omega.abs() } else { 1.0 };
    let samples: Vec<f64> = (0..64).map(|i| period * i as f64 / 64.0).collect();
    let mut max_ht = 0.0_f64;
    let mut commutes = true;
    for &t in &samples {
        let ht = (g.ht.h)(t);
        if ht.nrows() != dim || ht.ncols() != dim {
            return Err(ModelError::DimensionMismatch(format!(
                "H_T({t}) is {}x{}, H0 is {dim}x{dim}",
                ht.nrows(),
                ht.ncols()
            )));
        }
        HermitianOperator::new(ht.clone())?;
        if spectral_norm(&commutator(&ht, g.h0.matrix())) > 1e-12 {
            commutes = false;
        }
        max_ht = max_ht.max(spectral_norm(&ht));
    }
    if commutes {
        return Err(ModelError::CommutingTransverse);
    }

    let eig = crate::linalg::eig_hermitian(&g.h0);
    let spread = eig.values.last().unwrap() - eig.values.first().unwrap();
    let max_frequency = g.omega.abs().max(g.omega0.abs() * spread + 2.0 * g.omega_t.abs() * max_ht);

    let (w0, wt) = (g.omega0, g.omega_t);
    let h0 = scale(g.h0.matrix(), w0);
    let h = {
        let (h0, f) = (h0.clone(), g.ht.h.clone());
        move |t: f64| &h0 + scale(&f(t), wt)
    };
    let mut model = HamiltonianModel::new("generic_decomposed", dim, max_frequency, Arc::new(h))
        .with_param("omega0", w0)
        .with_param("omega_t", wt)
        .with_param("omega", g.omega);
    let h_dot: Option<MatrixFn> = g.ht.h_dot.clone().map(|d| {
        let f: MatrixFn = Arc::new(move |t: f64| scale(&d(t), wt));
        f
    });
    let h_ddot: Option<MatrixFn> = g.ht.h_ddot.clone().map(|d| {
        let f: MatrixFn = Arc::new(move |t: f64| scale(&d(t), wt));
        f
    });
    model = model.with_derivatives(h_dot, h_ddot);
    if g.omega != 0.0 {
        model = model.with_fd_step(1e-3_f64.min(1e-3 * 2.0 * PI / g.omega.abs()));
    }
    let warn = regime_warning(w0 * spread / 2.0, wt * max_ht, "omega_t·‖H_T‖");
    Ok(add_warning(model, warn))
}

/// A time-independent model, `Ḣ = Ḧ = 0`.
pub fn static_model(name: &str, h: &HermitianOperator) -> HamiltonianModel {
    let dim = h.dim();
    let m = h.matrix().clone();
    let eig = crate::linalg::eig_hermitian(h);
    let spread = eig.values.last().unwrap() - eig.values.first().unwrap();
    let zero: MatrixFn = Arc::new(move |_| CMatrix::zeros(dim, dim));
    HamiltonianModel::new(name, dim, spread, Arc::new(move |_| m.clone()))
        .with_derivatives(Some(zero.clone()), Some(zero))
}

/// Parses a tabulated model from CSV text.
///
/// Header: `t,re_00,im_00,re_01,im_01,...` over the `(i, j)` entries in
/// row-major order. Times must be uniformly spaced. Between samples `H(t)` is
/// a Catmull-Rom cubic; derivatives are central differences with the table
/// spacing as step.
pub fn tabulated(name: &str, csv_text: &str) -> Result<HamiltonianModel, ModelError> {
    let err = |m: String| ModelError::Table(m);
    let mut lines = csv_text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| err("empty table".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") {
        return Err(err("first header column must be `t`".into()));
    }
    let n_entries = (cols.len() - 1) / 2;
    let dim = (n_entries as f64).sqrt().round() as usize;
    if dim == 0 || dim * dim * 2 + 1 != cols.len() {
        return Err(err(format!("{} columns do not describe a square matrix", cols.len())));
    }
    for i in 0..dim {
        for j in 0..dim {
            let k = 1 + 2 * (i * dim + j);
            let (re, im) = (format!("re_{i}{j}"), format!("im_{i}{j}"));
            if cols[k] != re || cols[k + 1] != im {
                return Err(err(format!(
                    "column {k} is `{}`, expected `{re}` followed by `{im}`",
                    cols[k]
                )));
            }
        }
    }
    let mut times = Vec::new();
    let mut mats = Vec::new();
    for (row, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| err(format!("row {}: {e}", row + 2)))?;
        if vals.len() != cols.len() {
            return Err(err(format!("row {}: expected {} fields, found {}", row + 2, cols.len(), vals.len())));
        }
        times.push(vals[0]);
        let entries: Vec<C64> = (0..dim * dim)
            .map(|k| C64::new(vals[1 + 2 * k], vals[2 + 2 * k]))
            .collect();
        let m = CMatrix::from_row_slice(dim, dim, &entries);
        HermitianOperator::new(m.clone())
            .map_err(|e| err(format!("row {} at t = {}: {e}", row + 2, vals[0])))?;
        mats.push(m);
    }
    if times.len() < 4 {
        return Err(err(format!("need at least 4 samples, found {}", times.len())));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(err("times must increase".into()));
    }
    for (i, &t) in times.iter().enumerate() {
        let expected = times[0] + dt * i as f64;
        if (t - expected).abs() > 1e-9 * dt.max(t.abs()) {
            return Err(err(format!("non-uniform spacing at row {}: t = {t}, expected {expected}", i + 2)));
        }
    }
    let t0 = times[0];
    let mats = Arc::new(mats);
    let h = move |t: f64| catmull_rom(&mats, t0, dt, t);
    // The table is assumed to resolve its own dynamics at the native spacing.
    let max_frequency = 2.0 * PI / (40.0 * dt);
    Ok(HamiltonianModel::new(name, dim, max_frequency, Arc::new(h))
        .with_fd_step(dt)
        .with_param("t0", t0)
        .with_param("dt", dt)
        .with_param("samples", times.len() as f64))
}

fn catmull_rom(mats: &[CMatrix], t0: f64, dt: f64, t: f64) -> CMatrix {
    let n = mats.len();
    let x = ((t - t0) / dt).clamp(0.0, (n - 1) as f64);
    let i = (x.floor() as usize).min(n - 2);
    let u = x - i as f64;
    let p = |k: isize| &mats[(k.clamp(0, n as isize - 1)) as usize];
    let (p0, p1, p2, p3) = (p(i as isize - 1), p(i as isize), p(i as isize + 1), p(i as isize + 2));
    let (u2, u3) = (u * u, u * u * u);
    let w0 = -0.5 * u3 + u2 - 0.5 * u;
    let w1 = 1.5 * u3 - 2.5 * u2 + 1.0;
    let w2 = -1.5 * u3 + 2.0 * u2 + 0.5 * u;
    let w3 = 0.5 * u3 - 0.5 * u2;
    scale(p0, w0) + scale(p1, w1) + scale(p2, w2) + scale(p3, w3)
}

//! Random models and the numerical hygiene properties shared by the property
//! suite and the acceptance run.
#![allow(dead_code)]

use std::sync::Arc;

use adiaframe::conditions::{condition_report, FrameTag, LevelPair};
use adiaframe::dynamics::{adiabatic_reference, fidelity, propagate};
use adiaframe::hamiltonians::HamiltonianModel;
use adiaframe::linalg::{c, eig_hermitian, spectral_norm, trace_norm, CMatrix, DensityMatrix, HermitianOperator, StateVector};
use adiaframe::spectral::{track_eigensystem, TimeGrid};
use proptest::prelude::*;

pub const UNITARITY_DRIFT_TOL: f64 = 1e-9;
pub const PURITY_DRIFT_TOL: f64 = 1e-7;
pub const RECONSTRUCTION_TOL: f64 = 1e-8;
pub const GAUGE_TOL: f64 = 1e-9;
/// Accepted window for the observed step-halving order.
pub const ORDER_WINDOW: (f64, f64) = (1.7, 2.3);

/// Hermitian matrix from `dim²` reals: the diagonal first, then real and
/// imaginary parts of the upper triangle.
pub fn hermitian_from(dim: usize, xs: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    let mut it = xs.iter().copied();
    for i in 0..dim {
        m[(i, i)] = c(it.next().unwrap(), 0.0);
    }
    for i in 0..dim {
        for j in i + 1..dim {
            let z = c(it.next().unwrap(), it.next().unwrap());
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// `H(t) = D + A + B sin(ωt + φ) + C cos(2ωt)` with level spacing 3 in `D`
/// and perturbations of size `0.3`, so levels stay apart.
#[derive(Debug, Clone)]
pub struct RandomModel {
    pub dim: usize,
    pub coeffs: Vec<f64>,
    pub omega: f64,
    pub phi: f64,
}

pub fn random_model_strategy(dim: usize) -> impl Strategy<Value = RandomModel> {
    (prop::collection::vec(-1.0..1.0f64, 3 * dim * dim), 0.5..3.0f64, 0.0..6.28f64)
        .prop_map(move |(coeffs, omega, phi)| RandomModel { dim, coeffs, omega, phi })
}

impl RandomModel {
    pub fn build(&self) -> HamiltonianModel {
        let d = self.dim;
        let n = d * d;
        let mut base = hermitian_from(d, &self.coeffs[..n]) * c(0.3, 0.0);
        for i in 0..d {
            base[(i, i)] += c(3.0 * i as f64, 0.0);
        }
        let b = hermitian_from(d, &self.coeffs[n..2 * n]) * c(0.3, 0.0);
        let cc = hermitian_from(d, &self.coeffs[2 * n..]) * c(0.3, 0.0);
        let (w, phi) = (self.omega, self.phi);
        let scale = spectral_norm(&base) + spectral_norm(&b) + spectral_norm(&cc);
        let h = {
            let (base, b, cc) = (base.clone(), b.clone(), cc.clone());
            move |t: f64| &base + &b * c((w * t + phi).sin(), 0.0) + &cc * c((2.0 * w * t).cos(), 0.0)
        };
        let hd = {
            let (b, cc) = (b.clone(), cc.clone());
            move |t: f64| &b * c(w * (w * t + phi).cos(), 0.0) - &cc * c(2.0 * w * (2.0 * w * t).sin(), 0.0)
        };
        let hdd = move |t: f64| {
            -(&b * c(w * w * (w * t + phi).sin(), 0.0)) - &cc * c(4.0 * w * w * (2.0 * w * t).cos(), 0.0)
        };
        HamiltonianModel::new("random", d, 2.0 * w + scale, Arc::new(h))
            .with_derivatives(Some(Arc::new(hd)), Some(Arc::new(hdd)))
    }
}

const TAU: f64 = 3.0;

fn rho0(dim: usize) -> DensityMatrix {
    DensityMatrix::pure(&StateVector::basis(dim, 0))
}

pub fn check_unitarity_and_purity(m: &RandomModel) -> Result<(), String> {
    let model = m.build();
    let grid = TimeGrid::resolved(0.0, TAU, model.max_frequency(), 40).map_err(|e| e.to_string())?;
    let r = propagate(&model, &rho0(m.dim), &grid).map_err(|e| e.to_string())?;
    if r.unitarity_drift > UNITARITY_DRIFT_TOL {
        return Err(format!("unitarity drift {:.3e}", r.unitarity_drift));
    }
    if r.purity_drift > PURITY_DRIFT_TOL {
        return Err(format!("purity drift {:.3e}", r.purity_drift));
    }
    Ok(())
}

/// Observed order from three successively halved grids.
pub fn observed_order(m: &RandomModel) -> Result<f64, String> {
    let model = m.build();
    let g1 = TimeGrid::resolved(0.0, TAU, model.max_frequency(), 20).map_err(|e| e.to_string())?.overriding_resolution();
    let g2 = g1.halved();
    let g3 = g2.halved();
    let last = |g: &TimeGrid| -> Result<CMatrix, String> {
        let r = propagate(&model, &rho0(m.dim), g).map_err(|e| e.to_string())?;
        Ok(r.states.last().unwrap().matrix().clone())
    };
    let (a, b, cc) = (last(&g1)?, last(&g2)?, last(&g3)?);
    let e1 = trace_norm(&(&a - &b));
    let e2 = trace_norm(&(&b - &cc));
    if e2 < 1e-12 {
        return Ok(2.0);
    }
    Ok((e1 / e2).log2())
}

pub fn check_order_two(m: &RandomModel) -> Result<(), String> {
    let p = observed_order(m)?;
    if p < ORDER_WINDOW.0 || p > ORDER_WINDOW.1 {
        return Err(format!("observed order {p:.3}"));
    }
    Ok(())
}

pub fn check_reconstruction(m: &RandomModel, times: &[f64]) -> Result<(), String> {
    let model = m.build();
    for &t in times {
        let h = model.h_matrix(t);
        let eig = eig_hermitian(&HermitianOperator::new(h.clone()).map_err(|e| e.to_string())?);
        let err = spectral_norm(&(eig.reconstruct() - &h));
        if err > RECONSTRUCTION_TOL * spectral_norm(&h).max(1.0) {
            return Err(format!("reconstruction error {err:.3e} at t={t}"));
        }
    }
    Ok(())
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Coefficients and fidelities must not move when every tracked eigenvector
/// picks up an arbitrary constant phase.
pub fn check_gauge_independence(m: &RandomModel, phases: &[f64]) -> Result<(), String> {
    let model = m.build();
    let grid = TimeGrid::resolved(0.0, TAU, model.max_frequency(), 40).map_err(|e| e.to_string())?;
    let traj = track_eigensystem(&model, &grid).map_err(|e| e.to_string())?;
    let mut moved = traj.clone();
    for (n, &p) in phases.iter().enumerate().take(m.dim) {
        moved = moved.with_level_phase(n, p);
    }
    let lp = LevelPair::new(0, 1, m.dim).map_err(|e| e.to_string())?;
    let a = condition_report(&traj, &model, lp, TAU, FrameTag::Inertial).map_err(|e| e.to_string())?;
    let b = condition_report(&moved, &model, lp, TAU, FrameTag::Inertial).map_err(|e| e.to_string())?;
    for n in 0..4 {
        if rel(a.c[n], b.c[n]) > GAUGE_TOL {
            return Err(format!("C{} moved from {} to {}", n + 1, a.c[n], b.c[n]));
        }
    }
    let r = propagate(&model, &rho0(m.dim), &grid).map_err(|e| e.to_string())?;
    let fa = fidelity(&r, &adiabatic_reference(&traj, 0), 0).map_err(|e| e.to_string())?;
    let fb = fidelity(&r, &adiabatic_reference(&moved, 0), 0).map_err(|e| e.to_string())?;
    if rel(fa.terminal(), fb.terminal()) > GAUGE_TOL || rel(fa.min(), fb.min()) > GAUGE_TOL {
        return Err("fidelity depends on the eigenvector phase".into());
    }
    Ok(())
}

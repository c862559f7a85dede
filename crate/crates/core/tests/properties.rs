mod common;

use std::f64::consts::PI;

use adiaframe::hamiltonians::{
    generic_decomposed, nmr_rotating, oscillating_qubit, oscillating_qubit_transition, GenericDecomposition,
    HamiltonianModel, TransverseFamily,
};
use adiaframe::linalg::{
    eig_hermitian, expm_hermitian, hermiticity_defect, sigma_x, sigma_z, spectral_norm, CMatrix, HermitianOperator,
};
use proptest::prelude::*;

use common::*;

fn hermitian_strategy() -> impl Strategy<Value = CMatrix> {
    (2usize..=8).prop_flat_map(|d| {
        prop::collection::vec(-5.0..5.0f64, d * d).prop_map(move |xs| hermitian_from(d, &xs))
    })
}

fn builtin(kind: usize, w0: f64, wt: f64, a: f64) -> HamiltonianModel {
    let w = a * w0;
    match kind {
        0 => oscillating_qubit(w0, wt, w).unwrap(),
        1 => oscillating_qubit_transition(w0, wt, w).unwrap(),
        2 => nmr_rotating(w0, wt, w).unwrap(),
        _ => generic_decomposed(GenericDecomposition {
            omega0: w0,
            omega_t: wt,
            h0: HermitianOperator::new(sigma_z()).unwrap(),
            ht: TransverseFamily::oscillating(&HermitianOperator::new(sigma_x()).unwrap(), w),
            omega: w,
        })
        .unwrap(),
    }
}

/// Error of the central difference of `f` at step `h` against `exact`.
fn fd_error(f: &dyn Fn(f64) -> CMatrix, exact: &CMatrix, t: f64, h: f64) -> f64 {
    spectral_norm(&((f(t + h) - f(t - h)) / adiaframe::linalg::c(2.0 * h, 0.0) - exact))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eig_reconstructs(m in hermitian_strategy()) {
        let eig = eig_hermitian(&HermitianOperator::new(m.clone()).unwrap());
        prop_assert!(spectral_norm(&(eig.reconstruct() - &m)) <= RECONSTRUCTION_TOL * spectral_norm(&m).max(1.0));
        prop_assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn expm_is_unitary_and_a_group(m in hermitian_strategy(), s in -3.0..3.0f64, r in -3.0..3.0f64) {
        let a = HermitianOperator::new(m).unwrap();
        let us = expm_hermitian(&a, s);
        let ur = expm_hermitian(&a, r);
        prop_assert!(us.defect() <= 1e-10);
        let lhs = us.compose(&ur);
        let rhs = expm_hermitian(&a, s + r);
        prop_assert!(spectral_norm(&(lhs.matrix() - rhs.matrix())) <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn analytic_derivatives_match_second_order_differences(
        kind in 0usize..4,
        w0 in 1.0..8.0f64,
        ratio in 0.005..0.05f64,
        a in 0.1..10.0f64,
        t in 0.0..50.0f64,
    ) {
        let m = builtin(kind, w0, ratio * w0, a);
        let h = 1e-2 / m.max_frequency();
        let f = |x: f64| m.h_matrix(x);
        let fd = |x: f64| m.h_dot_matrix(x);
        for (func, exact) in [(&f as &dyn Fn(f64) -> CMatrix, m.h_dot_matrix(t)), (&fd, m.h_ddot_matrix(t))] {
            let e1 = fd_error(func, &exact, t, h);
            let e2 = fd_error(func, &exact, t, h / 2.0);
            let scale = spectral_norm(&exact).max(1e-300);
            if e1 > 1e-7 * scale {
                let order = (e1 / e2).log2();
                prop_assert!((1.8..=2.2).contains(&order), "kind {kind}: order {order} (e1={e1:.3e}, e2={e2:.3e})");
            }
        }
    }

    #[test]
    fn builtin_models_are_hermitian(
        kind in 0usize..4,
        a in 0.1..10.0f64,
        times in prop::collection::vec(-100.0..100.0f64, 1000),
    ) {
        let m = builtin(kind, 2.0 * PI, 2.0 * PI * 0.02, a);
        for &t in &times {
            let h = m.h_matrix(t);
            prop_assert!(hermiticity_defect(&h) <= 1e-12 * spectral_norm(&h).max(1.0));
        }
        prop_assert!(m.check_hermitian(&times).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn hygiene_dim2(m in random_model_strategy(2), times in prop::collection::vec(0.0..3.0f64, 16),
                    phases in prop::collection::vec(-PI..PI, 2)) {
        prop_assert_eq!(check_unitarity_and_purity(&m), Ok(()));
        prop_assert_eq!(check_order_two(&m), Ok(()));
        prop_assert_eq!(check_reconstruction(&m, &times), Ok(()));
        prop_assert_eq!(check_gauge_independence(&m, &phases), Ok(()));
    }

    #[test]
    fn hygiene_dim4(m in random_model_strategy(4), times in prop::collection::vec(0.0..3.0f64, 16),
                    phases in prop::collection::vec(-PI..PI, 4)) {
        prop_assert_eq!(check_unitarity_and_purity(&m), Ok(()));
        prop_assert_eq!(check_order_two(&m), Ok(()));
        prop_assert_eq!(check_reconstruction(&m, &times), Ok(()));
        prop_assert_eq!(check_gauge_independence(&m, &phases), Ok(()));
    }
}

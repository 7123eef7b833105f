mod common;

use common::reference_shell;
use evstab::mathur::{classify, kernel_k, mode_bound, run_gates, synthetic_kernel, KernelOptions, MathurKernel, Verdict, VERDICT_TOLERANCE};
use evstab::phase_space::GridOptions;
use evstab::EvError;
use proptest::prelude::*;

fn coarse() -> KernelOptions {
    KernelOptions { n_nodes: 48, n_e: 4, n_l: 4, n_velocity: 24, grid: GridOptions { n_theta: 32, n_s: 12, n_kappa: 12, ..GridOptions::default() }, ..KernelOptions::default() }
}

#[test]
fn synthetic_kernels_are_classified() {
    for (l1, verdict, n) in [(0.5, Verdict::LinearlyStable, 0), (1.0, Verdict::ZeroFrequencyMode, 0), (2.0, Verdict::Unstable, 1)] {
        let k = synthetic_kernel(&[l1, 0.25], 64).unwrap();
        assert!((k.operator_norm() - l1).abs() < 1e-10);
        assert_eq!(classify(&k.eigenvalues, VERDICT_TOLERANCE), (verdict, n));
    }
    let k = synthetic_kernel(&[2.0, 1.5], 64).unwrap();
    assert_eq!(classify(&k.eigenvalues, VERDICT_TOLERANCE), (Verdict::Unstable, 2));
    assert!(2.0 < k.hs_norm * k.hs_norm);
}

#[test]
fn shell_kernel_is_symmetric_positive_and_small() {
    let ss = reference_shell(1e-3);
    run_gates(&ss).unwrap();
    let k = kernel_k(&ss, &coarse()).unwrap();
    assert!(k.symmetry_defect() < 1e-8 * k.max_abs());
    assert!(k.lambda_min() >= -1e-8);
    assert!(k.operator_norm() < 1.0 && k.hs_norm < 1.0);
    assert!(k.boundary_adjacent() < 1e-3 * k.max_abs());
    assert!(((k.hs_norm.powi(2) - k.hs_from_eigenvalues().powi(2)) / k.hs_norm.powi(2)).abs() < 1e-4);
}

#[test]
fn zero_kernel_is_rejected_and_shape_is_checked() {
    let k = nalgebra::DMatrix::zeros(3, 2);
    assert!(matches!(MathurKernel::from_matrix(vec![0.0, 0.5, 1.0], vec![0.3; 3], k), Err(EvError::Input(_))));
}

proptest! {
    #[test]
    fn spectral_identities_of_separable_kernels(eigs in proptest::collection::vec(0.0f64..3.0, 1..5)) {
        let k = synthetic_kernel(&eigs, 64).unwrap();
        let sum_sq: f64 = eigs.iter().map(|l| l * l).sum();
        prop_assert!((k.hs_norm.powi(2) - sum_sq).abs() < 1e-9 * sum_sq.max(1e-12));
        let above = eigs.iter().filter(|&&l| l > 1.0 + VERDICT_TOLERANCE).count();
        let (_, n) = classify(&k.eigenvalues, VERDICT_TOLERANCE);
        prop_assert_eq!(n, above);
        prop_assert!(n <= mode_bound(k.hs_norm));
        prop_assert!(k.lambda_min() >= -1e-10);
    }

    #[test]
    fn mode_bound_is_the_largest_count_below_the_squared_norm(hs in 0.0f64..10.0) {
        let b = mode_bound(hs);
        prop_assert!((b as f64) < hs * hs || (b == 0 && hs == 0.0));
        prop_assert!((b + 1) as f64 >= hs * hs);
    }
}

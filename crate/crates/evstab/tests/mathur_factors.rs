mod common;

use common::{polytrope_cluster, reference_shell};
use evstab::mathur::{alpha0, beta0, i_matrix, indicator_profile, kernel_k, KernelOptions, MathurKernel};
use evstab::operators::KernelBasis;
use evstab::phase_space::{GridOptions, PhaseGrid};
use evstab::EvError;

fn coarse() -> KernelOptions {
    KernelOptions { n_nodes: 32, n_e: 3, n_l: 3, n_velocity: 24, grid: GridOptions { n_theta: 32, n_s: 12, n_kappa: 12, ..GridOptions::default() }, ..KernelOptions::default() }
}

#[test]
fn beta0_matches_metric_derivatives_by_finite_differences() {
    let ss = reference_shell(1e-3);
    let sup = ss.support.unwrap();
    for i in 1..10 {
        let r = sup.rmin + (sup.rmax - sup.rmin) * i as f64 / 10.0;
        let h = 1e-5 * r;
        let (lo, mid, hi) = (ss.local(r - h).unwrap(), ss.local(r).unwrap(), ss.local(r + h).unwrap());
        let mu_prime = (hi.mu - lo.mu) / (2.0 * h);
        let expected = (1.5 * mid.mu - 0.5 * mid.lambda).exp() * (2.0 * r * mu_prime + 1.0).sqrt() / r;
        let got = beta0(&ss, r).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-7, "r = {r}: {got} vs {expected}");
    }
}

#[test]
fn alpha0_is_defined_only_inside_the_matter() {
    let ss = polytrope_cluster();
    let sup = ss.support.unwrap();
    let r = 0.5 * sup.rmax;
    let st = ss.local(r).unwrap();
    let expected = ((st.lambda + st.mu) / 2.0).exp() / (r * (st.lambda_prime + st.mu_prime)).sqrt();
    assert!(((alpha0(&ss, r).unwrap() - expected) / expected).abs() < 1e-12);
    assert!(matches!(alpha0(&ss, 2.0 * sup.rmax), Err(EvError::OutOfSupport(_))));
}

#[test]
fn i_matrix_vanishes_at_the_inner_edge_and_is_symmetric() {
    let ss = reference_shell(1e-3);
    let sup = ss.support.unwrap();
    let o = coarse();
    let grid = PhaseGrid::new(&ss, o.grid).unwrap();
    let basis = KernelBasis::build(&ss, &grid, &o.basis_options()).unwrap();
    let nodes: Vec<f64> = (0..8).map(|i| sup.rmin + (sup.rmax - sup.rmin) * (i as f64 + 0.5) / 8.0).collect();
    let i = i_matrix(&basis, &nodes, &nodes);
    let scale = i.amax();
    assert!(scale > 0.0);
    assert!((&i - i.transpose()).amax() < 1e-12 * scale);
    let edge = i_matrix(&basis, &[sup.rmin], &nodes);
    assert!(edge.amax() < 1e-10 * scale, "{}", edge.amax());
}

#[test]
fn assembled_kernel_respects_cauchy_schwarz() {
    let ss = reference_shell(1e-3);
    let k = kernel_k(&ss, &coarse()).unwrap();
    let d = k.d.as_ref().unwrap();
    let dmax = d.iter().fold(0.0f64, |a, &x| a.max(x));
    assert!(k.cauchy_schwarz_excess().unwrap() <= 1e-10 * dmax);
}

#[test]
fn rank_one_kernel_has_its_norm_as_only_eigenvalue() {
    let k = MathurKernel::from_fn(0.0, 1.0, 24, |r, s| r * s).unwrap();
    assert!((k.operator_norm() - 1.0 / 3.0).abs() < 1e-12);
    assert!((k.hs_norm - 1.0 / 3.0).abs() < 1e-12);
    assert!(k.eigenvalues[1].abs() < 1e-12);
    assert_eq!(k.count_above(1.0), 0);
}

#[test]
fn projection_of_the_outer_indicator_is_orthogonal() {
    let ss = reference_shell(1e-3);
    let sup = ss.support.unwrap();
    let o = coarse();
    let grid = PhaseGrid::new(&ss, o.grid).unwrap();
    let basis = KernelBasis::build(&ss, &grid, &o.basis_options()).unwrap();
    let lifted = basis.lift_on_grid(&ss, &grid).unwrap();
    let f = indicator_profile(&ss, &grid, sup.rmax);
    let pf = lifted.project(&f).unwrap();
    let rest = f.combine(1.0, &pf, -1.0).unwrap();
    let residual = rest.norm() / f.norm();
    assert!((0.0..1.0).contains(&residual), "{residual}");
    assert!(rest.inner(&pf).unwrap().abs() < 1e-8 * f.norm() * f.norm());
}

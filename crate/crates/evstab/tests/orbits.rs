mod common;

use common::{polytrope_cluster, reference_shell};
use evstab::equilibria::SteadyState;
use evstab::potential_orbits::{effective_potential, single_well_report, OrbitSolver, WellOptions, ORBIT_NODES};
use proptest::prelude::*;

/// `T = 2 ∫ e^{λ−μ} ε / w dr` over `r = c + h sin u`, by the midpoint rule in `u`.
fn period_oracle(ss: &SteadyState, e: f64, ang: f64, rm: f64, rp: f64) -> f64 {
    let (c, h) = (0.5 * (rp + rm), 0.5 * (rp - rm));
    let n = 20000;
    let du = std::f64::consts::PI / n as f64;
    let mut t = 0.0;
    for i in 0..n {
        let u = -0.5 * std::f64::consts::PI + (i as f64 + 0.5) * du;
        let r = c + h * u.sin();
        let eps = e * (-ss.mu0_at(r)).exp();
        let w = (eps * eps - 1.0 - ang / (r * r)).max(0.0).sqrt();
        t += (ss.lambda0_at(r) - ss.mu0_at(r)).exp() * eps / w * h * u.cos() * du;
    }
    2.0 * t
}

fn interior(solver: &OrbitSolver, u: f64, v: f64) -> (f64, f64) {
    let ang = solver.l0 + (solver.l_max - solver.l0) * (0.02 + 0.96 * u);
    let (_, emin) = solver.e_min(ang).unwrap();
    (ang, emin + (solver.e0 - emin) * (0.02 + 0.96 * v))
}

#[test]
fn shell_periods_match_radial_quadrature() {
    let ss = reference_shell(1e-3);
    let solver = OrbitSolver::new(&ss, ORBIT_NODES).unwrap();
    for (u, v) in [(0.1, 0.1), (0.5, 0.5), (0.9, 0.3), (0.3, 0.95), (0.7, 0.7)] {
        let (ang, e) = interior(&solver, u, v);
        let o = solver.orbit(e, ang).unwrap();
        let t = period_oracle(&ss, e, ang, o.r_minus, o.r_plus);
        assert!(((o.period - t) / t).abs() < 1e-6, "(E, L) = ({e}, {ang}): {} vs {t}", o.period);
        assert!((effective_potential(&ss, ang, o.r_minus) - e).abs() < 1e-10);
        assert!((effective_potential(&ss, ang, o.r_plus) - e).abs() < 1e-10);
    }
}

#[test]
fn reference_states_are_single_well() {
    for ss in [reference_shell(1e-3), polytrope_cluster()] {
        let rep = single_well_report(&ss, &WellOptions::default()).unwrap();
        assert!(rep.pass);
        let sup = rep.support.unwrap();
        assert!(sup.t_min > 0.0 && sup.t_max.is_finite());
    }
}

#[test]
fn isotropic_cluster_satisfies_the_sufficient_condition() {
    let rep = single_well_report(&polytrope_cluster(), &WellOptions::default()).unwrap();
    assert_eq!(rep.sufficient_condition, Some(true));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn angle_map_is_monotone_and_spans_half_a_period(u in 0.0f64..1.0, v in 0.0f64..1.0, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let ss = reference_shell(1e-3);
        let solver = OrbitSolver::new(&ss, ORBIT_NODES).unwrap();
        let (ang, e) = interior(&solver, u, v);
        let o = solver.orbit(e, ang).unwrap();
        prop_assert!(o.r_minus < o.r_l && o.r_l < o.r_plus);
        prop_assert!(o.theta_of_r(o.r_minus).abs() < 1e-9);
        prop_assert!((o.theta_of_r(o.r_plus) - 0.5).abs() < 1e-9);
        let (a, b) = (x.min(y), x.max(y));
        let ra = o.r_minus + (o.r_plus - o.r_minus) * a;
        let rb = o.r_minus + (o.r_plus - o.r_minus) * b;
        prop_assert!(o.theta_of_r(ra) <= o.theta_of_r(rb) + 1e-12);
    }
}

mod common;

use std::f64::consts::PI;

use common::simpson;
use evstab::eos::EquationOfState;
use proptest::prelude::*;

/// `(ρ, p, q)` by direct quadrature over the momentum half-plane `(w, s)` with
/// `s` the tangential speed, `L = r²s²`, `ε = √(1 + w² + s²)` and `E/E₀ = ε e^{−y}`.
fn velocity_moments(eos: &EquationOfState, r: f64, y: f64, n: usize) -> (f64, f64, f64) {
    let vmax2 = (2.0 * y).exp() - 1.0;
    let s0 = (eos.l0 / (r * r)).sqrt();
    let smax = vmax2.sqrt();
    let weight = |w: f64, s: f64| {
        let eps = (1.0 + w * w + s * s).sqrt();
        let excess = (r * r * (s * s - s0 * s0)).max(0.0);
        eos.big_phi(1.0 - eps * (-y).exp()) * excess.powf(eos.l) * eos.delta
    };
    let inner = |s: f64, g: &dyn Fn(f64, f64) -> f64| {
        let wm = (vmax2 - s * s).max(0.0).sqrt();
        simpson(|u| { let w = wm * u.sin(); g(w, s) * weight(w, s) * wm * u.cos() }, -0.5 * PI, 0.5 * PI, n)
    };
    let outer = |g: &dyn Fn(f64, f64) -> f64| {
        simpson(|t| { let s = smax - (smax - s0) * t * t; 2.0 * PI * s * inner(s, g) * 2.0 * (smax - s0) * t }, 0.0, 1.0, n)
    };
    let eps = |w: f64, s: f64| (1.0 + w * w + s * s).sqrt();
    let rho = outer(&|w, s| eps(w, s));
    let p = outer(&|w, s| w * w / eps(w, s));
    let q = outer(&|w, s| 0.5 * s * s / eps(w, s));
    (rho, p, q)
}

fn check(eos: EquationOfState, r: f64, y: f64) {
    let (rho, p, q) = velocity_moments(&eos, r, y, 800);
    let g = eos.profile_g(r, y).unwrap();
    let h = eos.profile_h(r, y).unwrap();
    let qq = eos.profile_q(r, y).unwrap();
    assert!(((g - rho) / rho).abs() < 1e-7, "rho {g} vs {rho}");
    assert!(((h - p) / p).abs() < 1e-7, "p {h} vs {p}");
    assert!(((qq - q) / q).abs() < 1e-7, "q {qq} vs {q}");
}

#[test]
fn isotropic_polytrope_profiles_match_velocity_quadrature() {
    check(EquationOfState::polytrope(1.0, 0.0, 0.0, 1.0).unwrap(), 2.0, 0.08);
}

#[test]
fn shell_polytrope_profiles_match_velocity_quadrature() {
    check(EquationOfState::polytrope(1.0, 0.0, 15.0, 1e-3).unwrap(), 6.0, 0.25);
}

#[test]
fn anisotropic_king_profiles_match_velocity_quadrature() {
    check(EquationOfState::king(1.5, 2.0, 0.5).unwrap(), 3.0, 0.3);
}

#[test]
fn higher_polytrope_profiles_match_velocity_quadrature() {
    check(EquationOfState::polytrope(2.0, 1.0, 1.0, 1.0).unwrap(), 2.0, 0.2);
}

proptest! {
    #[test]
    fn phi_is_nonnegative_and_nonincreasing_in_energy(kf in 0.0f64..1.0, l in 0.0f64..2.0, l0 in 0.0f64..20.0,
                                                     e in 0.5f64..1.0, de in 0.0f64..0.1, ang in 0.0f64..40.0) {
        let k = 1.0 + kf * (l + 0.5);
        let eos = EquationOfState::polytrope(k, l, l0, 1.0).unwrap().with_cutoff(0.95);
        let a = eos.phi(e, ang).unwrap();
        let b = eos.phi(e + de, ang).unwrap();
        prop_assert!(a >= 0.0 && b <= a);
        prop_assert!(eos.phi_prime(e, ang).unwrap() <= 0.0);
        if e >= 0.95 || ang < l0 {
            prop_assert_eq!(a, 0.0);
        }
    }

    #[test]
    fn pressure_is_bounded_by_density(r in 1.0f64..10.0, y in 0.01f64..0.5) {
        let eos = EquationOfState::king(0.0, 0.0, 1.0).unwrap();
        let g = eos.profile_g(r, y).unwrap();
        let h = eos.profile_h(r, y).unwrap();
        prop_assert!(h >= 0.0 && h <= g / 3.0 + 1e-15);
    }
}

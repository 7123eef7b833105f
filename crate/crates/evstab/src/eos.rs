//! Microscopic equations of state `φ(E, L) = δ Φ(1 − E/E₀) (L − L₀)₊^l` and the
//! reduced profile functions `G(r, y)`, `H(r, y)` giving density and pressure.
//!
//! All velocity integrals are reduced to one-dimensional integrals in the
//! variable `α = 1 − E/E₀`. With `e^y = E₀ e^{−μ}` the local particle energy is
//! `ε = e^y (1 − α)` and the radial momentum squared available after fixing the
//! angular momentum cut is `X = e^{2y}(1 − α)² − 1 − L₀/r²`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{EvError, Result};
use crate::quad::GaussRule;

/// Order of the Gauss–Legendre rule for α-integrals.
pub const ALPHA_ORDER: usize = 64;

fn alpha_rule() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::legendre(ALPHA_ORDER, 0.0, 1.0))
}

/// Euler beta function.
pub fn beta_fn(a: f64, b: f64) -> f64 {
    libm::tgamma(a) * libm::tgamma(b) / libm::tgamma(a + b)
}

/// Ansatz family for `Φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `Φ(α) = α₊^k`.
    Polytrope,
    /// `Φ(α) = (e^α − 1)₊`.
    King,
}

/// Parameters of the microscopic equation of state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquationOfState {
    pub family: Family,
    /// Polytropic exponent (ignored for King).
    pub k: f64,
    /// Exponent of the angular-momentum factor.
    pub l: f64,
    /// Angular-momentum cut `L₀`.
    #[serde(rename = "L0")]
    pub l0: f64,
    /// Amplitude `δ`.
    pub delta: f64,
    /// Cut-off energy `E₀`, fixed once the equilibrium is constructed.
    pub cutoff_energy: Option<f64>,
}

impl EquationOfState {
    /// Polytropic ansatz; requires `0 ≤ k < l + 3/2` and `l > −1/2`.
    pub fn polytrope(k: f64, l: f64, l0: f64, delta: f64) -> Result<Self> {
        let eos = EquationOfState { family: Family::Polytrope, k, l, l0, delta, cutoff_energy: None };
        eos.validate()?;
        Ok(eos)
    }

    /// King-type ansatz.
    pub fn king(l: f64, l0: f64, delta: f64) -> Result<Self> {
        let eos = EquationOfState { family: Family::King, k: 0.0, l, l0, delta, cutoff_energy: None };
        eos.validate()?;
        Ok(eos)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.l > -0.5) || !self.l.is_finite() {
            errs.push(format!("l = {} must exceed -1/2", self.l));
        }
        if !(self.l0 >= 0.0) || !self.l0.is_finite() {
            errs.push(format!("L0 = {} must be non-negative", self.l0));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            errs.push(format!("delta = {} must be non-negative", self.delta));
        }
        if self.family == Family::Polytrope && !(self.k >= 0.0 && self.k < self.l + 1.5) {
            errs.push(format!("polytrope needs 0 <= k < l + 3/2, got k = {}, l = {}", self.k, self.l));
        }
        if let Some(e0) = self.cutoff_energy {
            if !(e0 > 0.0 && e0 < 1.0) {
                errs.push(format!("cut-off energy {e0} must lie in ]0, 1["));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(EvError::Config(errs.join("; ")))
        }
    }

    /// Copy with the cut-off energy set.
    pub fn with_cutoff(mut self, e0: f64) -> Self {
        self.cutoff_energy = Some(e0);
        self
    }

    pub fn cutoff(&self) -> Result<f64> {
        self.cutoff_energy.ok_or_else(|| EvError::Config("cut-off energy E0 has not been set".into()))
    }

    /// `Φ(α)`.
    pub fn big_phi(&self, alpha: f64) -> f64 {
        if alpha <= 0.0 {
            return 0.0;
        }
        match self.family {
            Family::Polytrope => alpha.powf(self.k),
            Family::King => alpha.exp_m1(),
        }
    }

    /// `Φ′(α)` for `α > 0`; zero for `α ≤ 0`.
    pub fn big_phi_prime(&self, alpha: f64) -> f64 {
        if alpha <= 0.0 {
            return 0.0;
        }
        match self.family {
            Family::Polytrope => {
                if self.k == 0.0 {
                    0.0
                } else {
                    self.k * alpha.powf(self.k - 1.0)
                }
            }
            Family::King => alpha.exp(),
        }
    }

    /// One-sided limit `Φ′(0⁺)`.
    fn big_phi_prime_at_zero(&self) -> f64 {
        match self.family {
            Family::Polytrope if self.k == 1.0 => 1.0,
            Family::Polytrope if self.k < 1.0 && self.k > 0.0 => f64::INFINITY,
            Family::Polytrope => 0.0,
            Family::King => 1.0,
        }
    }

    /// `(L − L₀)₊^l`, with the `l = 0` factor equal to the indicator of `L ≥ L₀`.
    pub fn l_factor(&self, ang: f64) -> f64 {
        let d = ang - self.l0;
        if self.l == 0.0 {
            if d >= 0.0 {
                1.0
            } else {
                0.0
            }
        } else if d > 0.0 {
            d.powf(self.l)
        } else {
            0.0
        }
    }

    /// `φ(E, L)`.
    pub fn phi(&self, e: f64, ang: f64) -> Result<f64> {
        let e0 = self.cutoff()?;
        check_el(e, ang)?;
        Ok(self.delta * self.big_phi(1.0 - e / e0) * self.l_factor(ang))
    }

    /// `∂_E φ(E, L)`; exactly zero outside the support.
    pub fn phi_prime(&self, e: f64, ang: f64) -> Result<f64> {
        Ok(self.phi_prime_flagged(e, ang)?.0)
    }

    /// `∂_E φ` together with a flag set when `(E, L)` sits on a support boundary
    /// where `φ′` jumps; the returned value is then the interior one-sided limit.
    pub fn phi_prime_flagged(&self, e: f64, ang: f64) -> Result<(f64, bool)> {
        let e0 = self.cutoff()?;
        check_el(e, ang)?;
        let alpha = 1.0 - e / e0;
        let lf = self.l_factor(ang);
        if alpha == 0.0 && lf > 0.0 {
            let lim = self.big_phi_prime_at_zero();
            return Ok((-self.delta / e0 * lim * lf, lim != 0.0));
        }
        let on_l_edge = self.l == 0.0 && ang == self.l0 && alpha > 0.0;
        Ok((-self.delta / e0 * self.big_phi_prime(alpha) * lf, on_l_edge))
    }

    /// `|φ′(E, L)|` without argument checks, for inner loops.
    pub fn abs_phi_prime_unchecked(&self, e0: f64, e: f64, ang: f64) -> f64 {
        self.delta / e0 * self.big_phi_prime(1.0 - e / e0) * self.l_factor(ang)
    }

    /// `φ(E, L)` without argument checks, for inner loops.
    pub fn phi_unchecked(&self, e0: f64, e: f64, ang: f64) -> f64 {
        self.delta * self.big_phi(1.0 - e / e0) * self.l_factor(ang)
    }

    /// `e^{−y}√(1 + L₀/r²)`; matter is present where this is below one.
    pub fn activation(&self, r: f64, y: f64) -> f64 {
        (-y).exp() * (1.0 + self.l0 / (r * r)).sqrt()
    }

    /// `∫₀^{α_max} F(α, X(α)) dα` with the substitution `α = α_max(1 − t²)` that
    /// makes the `X^{l+1/2}` endpoint behaviour smooth. Returns 0 without support.
    pub fn alpha_integral(&self, r: f64, y: f64, mut integrand: impl FnMut(f64, f64) -> f64) -> f64 {
        let am = 1.0 - self.activation(r, y);
        if !(am > 0.0) {
            return 0.0;
        }
        let e2y = (2.0 * y).exp();
        alpha_rule().integrate(|t| {
            let alpha = am * (1.0 - t * t);
            let x = e2y * am * t * t * (2.0 - alpha - am);
            integrand(alpha, x) * 2.0 * am * t
        })
    }

    /// `∫ ε^a w^b Φ̃(α) (L − L₀)₊^l dv` at `(r, y)` for even `b ≥ 0`, where
    /// `Φ̃` is `Φ` or `Φ′`. No amplitude factors are applied.
    fn raw_moment(&self, r: f64, y: f64, a: i32, b: i32, derivative: bool) -> f64 {
        debug_assert!(b >= 0 && b % 2 == 0);
        let bexp = self.l + (b as f64 + 1.0) / 2.0;
        let pref = 2.0 * std::f64::consts::PI * beta_fn(self.l + 1.0, (b as f64 + 1.0) / 2.0) * r.powf(2.0 * self.l) * ((a + 2) as f64 * y).exp();
        pref * self.alpha_integral(r, y, |alpha, x| {
            let ph = if derivative { self.big_phi_prime(alpha) } else { self.big_phi(alpha) };
            (1.0 - alpha).powi(a + 1) * ph * x.max(0.0).powf(bexp)
        })
    }

    /// `∫ ε^a w^b φ dv` (amplitude included).
    pub fn phi_moment(&self, r: f64, y: f64, a: i32, b: i32) -> f64 {
        self.delta * self.raw_moment(r, y, a, b, false)
    }

    /// `∫ ε^a w^b |φ′| dv` (amplitude and `1/E₀` included).
    pub fn dphi_moment(&self, r: f64, y: f64, a: i32, b: i32) -> Result<f64> {
        let e0 = self.cutoff()?;
        Ok(self.delta / e0 * self.raw_moment(r, y, a, b, true))
    }

    /// Density profile `G(r, y)` (amplitude included, so `ρ = G(r, y(r))`).
    pub fn profile_g(&self, r: f64, y: f64) -> Result<f64> {
        check_ry(r, y)?;
        Ok(self.phi_moment(r, y, 1, 0))
    }

    /// Radial pressure profile `H(r, y)`.
    pub fn profile_h(&self, r: f64, y: f64) -> Result<f64> {
        check_ry(r, y)?;
        Ok(self.phi_moment(r, y, -1, 2))
    }

    /// Tangential pressure `q = ½ ∫ (L/r²) ε⁻¹ φ dv` as a function of `(r, y)`.
    pub fn profile_q(&self, r: f64, y: f64) -> Result<f64> {
        check_ry(r, y)?;
        let l = self.l;
        let cl = beta_fn(l + 1.0, 0.5);
        let cl1 = beta_fn(l + 2.0, 0.5);
        let pref = std::f64::consts::PI * self.delta * r.powf(2.0 * l - 2.0) * y.exp();
        Ok(pref
            * self.alpha_integral(r, y, |alpha, x| {
                let x = x.max(0.0);
                self.big_phi(alpha) * x.powf(l + 0.5) * (self.l0 * cl + r * r * x * cl1)
            }))
    }

    /// The constants `c_l = B(l+1, 1/2)` and `d_l = B(l+1, 3/2)`.
    pub fn profile_constants(&self) -> (f64, f64) {
        (beta_fn(self.l + 1.0, 0.5), beta_fn(self.l + 1.0, 1.5))
    }
}

fn check_el(e: f64, ang: f64) -> Result<()> {
    if !(e > 0.0) || !e.is_finite() || !(ang >= 0.0) || !ang.is_finite() {
        return Err(EvError::Input(format!("need E > 0 and L >= 0, got E = {e}, L = {ang}")));
    }
    Ok(())
}

fn check_ry(r: f64, y: f64) -> Result<()> {
    if !(r > 0.0) || !y.is_finite() {
        return Err(EvError::Input(format!("need r > 0 and finite y, got r = {r}, y = {y}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly() -> EquationOfState {
        EquationOfState::polytrope(1.0, 0.0, 0.0, 1.0).unwrap().with_cutoff(0.9)
    }

    #[test]
    fn phi_vanishes_at_cutoff() {
        assert_eq!(poly().phi(0.9, 3.0).unwrap(), 0.0);
        assert_eq!(poly().phi(0.95, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn polytrope_phi_value() {
        assert!((poly().phi(0.45, 3.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn king_phi_value() {
        let eos = EquationOfState::king(0.0, 0.0, 1.0).unwrap().with_cutoff(0.9);
        // α = 0.2 at E = 0.72
        let v = eos.phi(0.72, 1.0).unwrap();
        assert!((v - 0.221_402_758_160_169_83).abs() < 1e-13);
    }

    #[test]
    fn phi_prime_values() {
        assert_eq!(poly().phi_prime(0.95, 3.0).unwrap(), 0.0);
        assert!((poly().phi_prime(0.45, 3.0).unwrap() + 1.0 / 0.9).abs() < 1e-14);
        let king = EquationOfState::king(0.0, 0.0, 1.0).unwrap().with_cutoff(0.9);
        let v = king.phi_prime(0.72, 2.0).unwrap();
        let fd = (king.phi(0.72 + 1e-7, 2.0).unwrap() - king.phi(0.72 - 1e-7, 2.0).unwrap()) / 2e-7;
        assert!((v + 0.2f64.exp() / 0.9).abs() < 1e-12);
        assert!((v - fd).abs() < 1e-6 * v.abs());
    }

    #[test]
    fn boundary_derivative_is_flagged() {
        let (v, flag) = poly().phi_prime_flagged(0.9, 1.0).unwrap();
        assert!(flag);
        assert!((v + 1.0 / 0.9).abs() < 1e-14);
    }

    #[test]
    fn missing_cutoff_is_config_error() {
        let eos = EquationOfState::polytrope(1.0, 0.0, 0.0, 1.0).unwrap();
        assert!(matches!(eos.phi(0.5, 1.0), Err(EvError::Config(_))));
    }

    #[test]
    fn invalid_exponent_rejected() {
        assert!(EquationOfState::polytrope(1.6, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn profile_constants_for_l_zero() {
        let (c, d) = poly().profile_constants();
        assert!((c - 2.0).abs() < 1e-14);
        assert!((d - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn profiles_vanish_without_activation() {
        let eos = EquationOfState::polytrope(1.0, 0.0, 15.0, 1.0).unwrap();
        assert_eq!(eos.profile_g(5.0, 0.1).unwrap(), 0.0);
        assert_eq!(eos.profile_h(5.0, 0.1).unwrap(), 0.0);
        assert!(eos.profile_g(5.0, f64::NAN).is_err());
    }

    #[test]
    fn isotropic_tangential_pressure_equals_radial() {
        let eos = EquationOfState::polytrope(1.0, 0.0, 0.0, 1.0).unwrap();
        let p = eos.profile_h(0.7, 0.15).unwrap();
        let q = eos.profile_q(0.7, 0.15).unwrap();
        assert!((p - q).abs() < 1e-13 * p);
    }
}

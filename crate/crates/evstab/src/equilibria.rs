//! Static solutions: singularity-free equilibria and matter shells around a
//! Schwarzschild black hole, obtained by integrating the reduced equation for
//! `y = ln E₀ − μ`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::eos::EquationOfState;
use crate::error::{EvError, Result};
use crate::ode::{integrate, OdeOptions};
use crate::quad::{chebyshev_nodes, fejer_weights, ChebSeries};
use crate::roots::brent;

/// Which family of steady states a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Singfree,
    Shell,
}

/// `Ψ⁰_L(r) = √(1 − 2M/r) √(1 + L/r²)`, the effective potential of vacuum Schwarzschild.
pub fn schwarzschild_potential(m: f64, ang: f64, r: f64) -> f64 {
    ((1.0 - 2.0 * m / r) * (1.0 + ang / (r * r))).sqrt()
}

/// The two critical radii `(s_L, r_L)` of `Ψ⁰_L`, roots of `M r² − L r + 3ML = 0`.
pub fn schwarzschild_critical_radii(m: f64, ang: f64) -> Result<(f64, f64)> {
    if !(m > 0.0) {
        return Err(EvError::Input(format!("central mass must be positive, got {m}")));
    }
    if !(ang > 12.0 * m * m) {
        return Err(EvError::Input(format!("no critical points: L = {ang} must exceed 12 M^2 = {}", 12.0 * m * m)));
    }
    let disc = (ang * ang - 12.0 * m * m * ang).sqrt();
    // The smaller root from the product of roots, 3L.
    let r_l = (ang + disc) / (2.0 * m);
    let s_l = 3.0 * ang / r_l;
    Ok((s_l, r_l))
}

/// The three radii `r₀ < s_L < r₋ < r_L < r₊` where `Ψ⁰_L = E`.
pub fn schwarzschild_level_radii(m: f64, ang: f64, e: f64) -> Result<(f64, f64, f64)> {
    let (s_l, r_l) = schwarzschild_critical_radii(m, ang)?;
    let psi = |r: f64| schwarzschild_potential(m, ang, r);
    let lo = psi(r_l);
    let hi = psi(s_l).min(1.0);
    if !(e > lo) {
        return Err(EvError::Input(format!("E = {e} must exceed the potential minimum Psi0_L(r_L) = {lo}")));
    }
    if !(e < hi) {
        return Err(EvError::Input(format!("E = {e} must stay below min(1, Psi0_L(s_L)) = {hi}")));
    }
    let tol = 1e-15;
    let r0 = brent(|r| psi(r) - e, 2.0 * m, s_l, tol * s_l)?;
    let rm = brent(|r| psi(r) - e, s_l, r_l, tol * r_l)?;
    let mut top = 2.0 * r_l;
    while psi(top) <= e {
        top *= 2.0;
    }
    let rp = brent(|r| psi(r) - e, r_l, top, tol * top)?;
    Ok((r0, rm, rp))
}

/// Admissible parameters for the shell construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellParameters {
    /// Black-hole mass `M`.
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
    /// Intermediate energy `E⁰`.
    pub e_intermediate: f64,
    /// Inner cut radius `r₀ = s⁰_{L₀}`.
    pub r0: f64,
    /// Width `η₀` of the cut-off transition.
    pub eta0: f64,
}

impl ShellParameters {
    /// Checks every admissibility inequality; `eta0 = None` picks half the gap to `r⁰₋`.
    pub fn new(m: f64, l0: f64, e_intermediate: f64, eta0: Option<f64>) -> Result<Self> {
        if !(m > 0.0) {
            return Err(EvError::Config(format!("M = {m} must be positive")));
        }
        if !(l0 > 12.0 * m * m) {
            return Err(EvError::Config(format!("L0 = {l0} must exceed 12 M^2 = {}", 12.0 * m * m)));
        }
        let (s_l, _) = schwarzschild_critical_radii(m, l0)?;
        let (_, rm, _) = schwarzschild_level_radii(m, l0, e_intermediate).map_err(|e| EvError::Config(format!("E_intermediate: {e}")))?;
        let eta0 = eta0.unwrap_or(0.5 * (rm - s_l));
        if !(eta0 > 0.0 && s_l + eta0 < rm) {
            return Err(EvError::Config(format!("eta0 = {eta0} must satisfy 0 < eta0 and r0 + eta0 < r_-^0 = {rm}")));
        }
        Ok(ShellParameters { m, l0, e_intermediate, r0: s_l, eta0 })
    }

    /// `y⁰(r) = ln E⁰ − ½ ln(1 − 2M/r)`.
    pub fn y_vacuum(&self, r: f64) -> f64 {
        self.e_intermediate.ln() - 0.5 * (1.0 - 2.0 * self.m / r).ln()
    }

    /// `(R⁰_min, R⁰_max) = (r⁰₋(E⁰, L₀), r⁰₊(E⁰, L₀))`.
    pub fn vacuum_support(&self) -> Result<(f64, f64)> {
        let (_, rm, rp) = schwarzschild_level_radii(self.m, self.l0, self.e_intermediate)?;
        Ok((rm, rp))
    }
}

/// How the record was obtained, sufficient to rebuild it from its support table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Origin {
    Singfree { y0: f64 },
    Shell(ShellParameters),
}

/// Radial table of the matter region with ODE slopes at each node.
#[derive(Debug, Clone)]
struct SupportTable {
    r: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
    dy: Vec<f64>,
    dm: Vec<f64>,
    p: Vec<f64>,
    dp: Vec<f64>,
}

fn hermite(x0: f64, x1: f64, f0: f64, f1: f64, d0: f64, d1: f64, r: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (r - x0) / h;
    let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
    let h10 = t * (1.0 - t) * (1.0 - t);
    let h01 = t * t * (3.0 - 2.0 * t);
    let h11 = t * t * (t - 1.0);
    let d00 = 6.0 * t * (t - 1.0) / h;
    let d10 = (1.0 - t) * (1.0 - 3.0 * t);
    let d11 = t * (3.0 * t - 2.0);
    (h00 * f0 + h * h10 * d0 + h01 * f1 + h * h11 * d1, d00 * (f0 - f1) + d10 * d0 + d11 * d1)
}

impl SupportTable {
    fn new(eos: &EquationOfState, m_center: f64, r: Vec<f64>, y: Vec<f64>, m: Vec<f64>, dy: Vec<f64>, dm: Vec<f64>) -> Result<Self> {
        let mut p = Vec::with_capacity(r.len());
        let mut dp = Vec::with_capacity(r.len());
        for i in 0..r.len() {
            if r[i] == 0.0 {
                p.push(eos.profile_h(1e-300, y[i])?);
                dp.push(0.0);
                continue;
            }
            let rho = eos.profile_g(r[i], y[i])?;
            let pi = eos.profile_h(r[i], y[i])?;
            let q = eos.profile_q(r[i], y[i])?;
            let mt = m_center + m[i];
            let mu_p = (mt / (r[i] * r[i]) + 4.0 * PI * r[i] * pi) / (1.0 - 2.0 * mt / r[i]);
            p.push(pi);
            dp.push(-mu_p * (pi + rho) - 2.0 * (pi - q) / r[i]);
        }
        Ok(SupportTable { r, y, m, dy, dm, p, dp })
    }

    /// Interpolated radial pressure and its slope.
    fn pressure(&self, r: f64) -> (f64, f64) {
        let i = self.locate(r);
        let (p, dp) = hermite(self.r[i], self.r[i + 1], self.p[i], self.p[i + 1], self.dp[i], self.dp[i + 1], r);
        (p.max(0.0), dp)
    }

    fn locate(&self, r: f64) -> usize {
        let i = self.r.partition_point(|&x| x <= r);
        i.clamp(1, self.r.len() - 1) - 1
    }

    /// Cubic Hermite interpolation of `(y, m)` and their derivatives.
    fn eval(&self, r: f64) -> (f64, f64, f64, f64) {
        let i = self.locate(r);
        let (x0, x1) = (self.r[i], self.r[i + 1]);
        let (y, dy) = hermite(x0, x1, self.y[i], self.y[i + 1], self.dy[i], self.dy[i + 1], r);
        let (m, dm) = hermite(x0, x1, self.m[i], self.m[i + 1], self.dm[i], self.dm[i + 1], r);
        (y, m, dy, dm)
    }
}

/// Support bounds of the matter distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub rmin: f64,
    pub rmax: f64,
}

/// A static solution with its metric and matter tables.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub mode: Mode,
    pub origin: Origin,
    /// Central black-hole mass `M` (zero for singularity-free states).
    pub m_center: f64,
    /// Equation of state with the cut-off energy set.
    pub eos: EquationOfState,
    /// Cut-off energy `E₀ = e^{y_∞}`.
    pub e0_cut: f64,
    pub y_inf: f64,
    /// `None` when there is no matter at all.
    pub support: Option<Support>,
    /// Total Vlasov mass `M^δ`.
    pub m_vlasov: f64,
    table: Option<SupportTable>,
    pub r_grid: Vec<f64>,
    pub y: Vec<f64>,
    pub mu0: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub mu0_prime: Vec<f64>,
    pub rho0: Vec<f64>,
    pub p0: Vec<f64>,
    pub q0: Vec<f64>,
    pub m_quasilocal: Vec<f64>,
}

/// Metric and matter quantities at one radius.
#[derive(Debug, Clone, Copy)]
pub struct LocalState {
    pub r: f64,
    pub y: f64,
    pub m: f64,
    pub mu: f64,
    pub lambda: f64,
    pub mu_prime: f64,
    pub lambda_prime: f64,
    pub rho: f64,
    pub p: f64,
    pub q: f64,
}

/// Derived scalar diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(rename = "M_ADM")]
    pub m_adm: f64,
    #[serde(rename = "N_rest_mass")]
    pub n_rest_mass: f64,
    /// `(N − M_matter)/N`; `None` without matter.
    pub binding_energy: Option<f64>,
    /// Supremum of `2(M + m(r))/r` over the matter region.
    pub max_2m_over_r: f64,
}

/// Relative residuals of the static equations on the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResiduals {
    pub tov: f64,
    pub field_lambda: f64,
    pub field_mu: f64,
    pub nodes: usize,
}

/// Resolution used when tabulating the matter region.
#[derive(Debug, Clone, Copy)]
pub struct GridPolicy {
    /// Upper bound on integrator steps across the support.
    pub support_steps: usize,
    /// Extra Chebyshev nodes placed inside the support for output tables.
    pub chebyshev_nodes: usize,
    pub rtol: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy { support_steps: 2048, chebyshev_nodes: 512, rtol: 1e-10 }
    }
}

fn rhs(eos: &EquationOfState, m_center: f64, r: f64, y: f64, m: f64, matter: bool) -> Result<[f64; 2]> {
    let (rho, p) = if matter { (eos.profile_g(r, y)?, eos.profile_h(r, y)?) } else { (0.0, 0.0) };
    let mt = m_center + m;
    let den = 1.0 - 2.0 * mt / r;
    if !(den > 1e-12) {
        return Err(EvError::Numerical(format!("horizon formation: 1 - 2(M+m)/r = {den} at r = {r}")));
    }
    Ok([-(mt / (r * r) + 4.0 * PI * r * p) / den, 4.0 * PI * r * r * rho])
}

/// Integrates the matter region starting at `r_start` and stops where the
/// activation condition fails. Two passes: the first measures the support, the
/// second tabulates it with a bounded step.
fn integrate_support(eos: &EquationOfState, m_center: f64, r_start: f64, y_start: f64, m_start: f64, policy: &GridPolicy) -> Result<SupportTable> {
    let l0 = eos.l0;
    let event = |r: f64, s: &[f64; 2]| s[0] - 0.5 * (1.0 + l0 / (r * r)).ln();
    let f = |r: f64, s: &[f64; 2]| rhs(eos, m_center, r, s[0], s[1], true);
    let far = 1e6 * r_start.max(1.0);
    let opts = OdeOptions { rtol: policy.rtol, atol: 1e-16, h_init: 1e-3 * r_start.max(1e-2), ..Default::default() };
    let first = integrate(f, r_start, [y_start, m_start], far, &opts, Some(event))?;
    if !first.event {
        return Err(EvError::Numerical("matter region does not terminate".into()));
    }
    let r_end = *first.x.last().unwrap();
    let opts2 = OdeOptions { h_max: (r_end - r_start) / policy.support_steps as f64, h_init: (r_end - r_start) * 1e-4, ..opts };
    let f = |r: f64, s: &[f64; 2]| rhs(eos, m_center, r, s[0], s[1], true);
    let sol = integrate(f, r_start, [y_start, m_start], far, &opts2, Some(event))?;
    if !sol.event {
        return Err(EvError::Numerical("matter region does not terminate on the refined pass".into()));
    }
    SupportTable::new(
        eos,
        m_center,
        sol.x.clone(),
        sol.y.iter().map(|s| s[0]).collect(),
        sol.y.iter().map(|s| s[1]).collect(),
        sol.dy.iter().map(|s| s[0]).collect(),
        sol.dy.iter().map(|s| s[1]).collect(),
    )
}

impl SteadyState {
    /// Singularity-free equilibrium with central value `y(0) = y0`.
    pub fn solve_singularity_free(eos: &EquationOfState, y0: f64, policy: &GridPolicy) -> Result<SteadyState> {
        eos.validate()?;
        if !(y0 > 0.0) || !y0.is_finite() {
            return Err(EvError::Config(format!("y0 = {y0} must be positive")));
        }
        let origin = Origin::Singfree { y0 };
        if eos.delta == 0.0 {
            return Self::assemble(Mode::Singfree, origin, 0.0, *eos, None, y0, policy);
        }
        let table = if eos.l0 > 0.0 {
            let r_a = (eos.l0 / ((2.0 * y0).exp() - 1.0)).sqrt();
            integrate_support(eos, 0.0, r_a, y0, 0.0, policy)?
        } else {
            // Series start away from the coordinate singularity at the centre.
            let rho_c = eos.profile_g(1e-12, y0)?;
            let p_c = eos.profile_h(1e-12, y0)?;
            let r_s = 1e-5;
            let y_s = y0 - 2.0 * PI / 3.0 * (rho_c + 3.0 * p_c) * r_s * r_s;
            let m_s = 4.0 * PI / 3.0 * rho_c * r_s.powi(3);
            let mut t = integrate_support(eos, 0.0, r_s, y_s, m_s, policy)?;
            t.r.insert(0, 0.0);
            t.y.insert(0, y0);
            t.m.insert(0, 0.0);
            t.dy.insert(0, 0.0);
            t.dm.insert(0, 0.0);
            t.p.insert(0, p_c);
            t.dp.insert(0, 0.0);
            t
        };
        Self::assemble(Mode::Singfree, origin, 0.0, *eos, Some(table), y0, policy)
    }

    /// Shell around a Schwarzschild black hole with amplitude `delta`.
    pub fn build_shell(params: &ShellParameters, eos: &EquationOfState, delta: f64, policy: &GridPolicy) -> Result<SteadyState> {
        let checked = ShellParameters::new(params.m, params.l0, params.e_intermediate, Some(params.eta0))?;
        if (checked.r0 - params.r0).abs() > 1e-9 * params.r0 {
            return Err(EvError::Config(format!("r0 = {} must equal s_L0 = {}", params.r0, checked.r0)));
        }
        if (eos.l0 - params.l0).abs() > 0.0 {
            return Err(EvError::Config("equation of state and shell parameters disagree on L0".into()));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(EvError::Config(format!("delta = {delta} must be non-negative")));
        }
        let mut eos = *eos;
        eos.delta = delta;
        eos.validate()?;
        let origin = Origin::Shell(*params);
        if delta == 0.0 {
            return Self::assemble(Mode::Shell, origin, params.m, eos, None, 0.0, policy);
        }
        let (rmin0, _) = params.vacuum_support()?;
        let table = integrate_support(&eos, params.m, rmin0, params.y_vacuum(rmin0), 0.0, policy)?;
        Self::assemble(Mode::Shell, origin, params.m, eos, Some(table), 0.0, policy)
    }

    /// Rebuilds a state from `(r, y, m)` samples of its matter region.
    pub fn from_support_samples(origin: Origin, eos: &EquationOfState, r: &[f64], y: &[f64], m: &[f64], policy: &GridPolicy) -> Result<SteadyState> {
        let (mode, m_center, y0) = match origin {
            Origin::Singfree { y0 } => (Mode::Singfree, 0.0, y0),
            Origin::Shell(p) => (Mode::Shell, p.m, 0.0),
        };
        let mut eos = *eos;
        eos.cutoff_energy = None;
        if r.is_empty() {
            return Self::assemble(mode, origin, m_center, eos, None, y0, policy);
        }
        if r.len() < 4 || r.len() != y.len() || r.len() != m.len() {
            return Err(EvError::Input("support table needs at least four consistent rows".into()));
        }
        let mut dy = Vec::with_capacity(r.len());
        let mut dm = Vec::with_capacity(r.len());
        for i in 0..r.len() {
            if i > 0 && !(r[i] > r[i - 1]) {
                return Err(EvError::Input(format!("radial nodes not increasing at row {i}")));
            }
            if !(2.0 * (m_center + m[i]) < r[i]) && r[i] > 0.0 {
                return Err(EvError::gate("2(M+m)<r", format!("violated at r = {}: 2(M+m)/r = {}", r[i], 2.0 * (m_center + m[i]) / r[i])));
            }
            if r[i] == 0.0 {
                dy.push(0.0);
                dm.push(0.0);
            } else {
                let d = rhs(&eos, m_center, r[i], y[i], m[i], true)?;
                dy.push(d[0]);
                dm.push(d[1]);
            }
        }
        let table = SupportTable::new(&eos, m_center, r.to_vec(), y.to_vec(), m.to_vec(), dy, dm)?;
        Self::assemble(mode, origin, m_center, eos, Some(table), y0, policy)
    }

    fn assemble(mode: Mode, origin: Origin, m_center: f64, mut eos: EquationOfState, table: Option<SupportTable>, y0: f64, policy: &GridPolicy) -> Result<SteadyState> {
        let (support, m_vlasov, y_inf) = match &table {
            Some(t) => {
                let n = t.r.len() - 1;
                let (rmax, ymax, mv) = (t.r[n], t.y[n], t.m[n]);
                let den = 1.0 - 2.0 * (m_center + mv) / rmax;
                if !(den > 0.0) {
                    return Err(EvError::Numerical("total mass exceeds the outer support radius".into()));
                }
                (Some(Support { rmin: t.r[0], rmax }), mv, ymax + 0.5 * den.ln())
            }
            None => match origin {
                Origin::Shell(p) => (None, 0.0, p.e_intermediate.ln()),
                Origin::Singfree { .. } => (None, 0.0, y0),
            },
        };
        let e0_cut = y_inf.exp();
        if support.is_some() {
            if !(e0_cut > 0.0 && e0_cut < 1.0) {
                return Err(EvError::Numerical(format!("cut-off energy {e0_cut} outside ]0,1[")));
            }
            eos = eos.with_cutoff(e0_cut);
        } else if mode == Mode::Shell {
            eos = eos.with_cutoff(e0_cut);
        }
        let mut ss = SteadyState {
            mode,
            origin,
            m_center,
            eos,
            e0_cut,
            y_inf,
            support,
            m_vlasov,
            table,
            r_grid: vec![],
            y: vec![],
            mu0: vec![],
            lambda0: vec![],
            mu0_prime: vec![],
            rho0: vec![],
            p0: vec![],
            q0: vec![],
            m_quasilocal: vec![],
        };
        ss.tabulate(policy)?;
        ss.check_invariants()?;
        Ok(ss)
    }

    fn tabulate(&mut self, policy: &GridPolicy) -> Result<()> {
        let inner = if self.m_center > 0.0 { 2.0 * self.m_center * (1.0 + 1e-6) } else { 0.0 };
        let mut grid: Vec<f64> = Vec::new();
        match (&self.table, self.support) {
            (Some(t), Some(s)) => {
                let n_in = 64;
                for i in 0..n_in {
                    let r = inner + (s.rmin - inner) * i as f64 / n_in as f64;
                    if r > inner || (inner == 0.0 && i == 0) {
                        grid.push(r);
                    }
                }
                grid.extend_from_slice(&t.r);
                grid.extend(chebyshev_nodes(policy.chebyshev_nodes, s.rmin, s.rmax));
                for i in 1..=128 {
                    grid.push(s.rmax * (1.0 + 2.0 * i as f64 / 128.0));
                }
            }
            _ => {
                let top = if self.m_center > 0.0 { 50.0 * self.m_center } else { 10.0 };
                for i in 1..=512 {
                    grid.push(inner + (top - inner) * i as f64 / 512.0);
                }
            }
        }
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * a.abs().max(1.0));
        let n = grid.len();
        self.y = Vec::with_capacity(n);
        self.mu0 = Vec::with_capacity(n);
        self.lambda0 = Vec::with_capacity(n);
        self.mu0_prime = Vec::with_capacity(n);
        self.rho0 = Vec::with_capacity(n);
        self.p0 = Vec::with_capacity(n);
        self.q0 = Vec::with_capacity(n);
        self.m_quasilocal = Vec::with_capacity(n);
        for &r in &grid {
            let st = self.local(r)?;
            self.y.push(st.y);
            self.mu0.push(st.mu);
            self.lambda0.push(st.lambda);
            self.mu0_prime.push(st.mu_prime);
            self.rho0.push(st.rho);
            self.p0.push(st.p);
            self.q0.push(st.q);
            self.m_quasilocal.push(st.m);
        }
        self.r_grid = grid;
        Ok(())
    }

    fn check_invariants(&self) -> Result<()> {
        for (i, &r) in self.r_grid.iter().enumerate() {
            if r > 0.0 && !(2.0 * (self.m_center + self.m_quasilocal[i]) < r) {
                return Err(EvError::gate("2(M+m)<r", format!("violated at r = {r}")));
            }
        }
        if let (Origin::Shell(p), Some(s)) = (self.origin, self.support) {
            let (a, b) = p.vacuum_support()?;
            if s.rmin < a * (1.0 - 1e-12) || s.rmax > b * (1.0 + 1e-12) {
                return Err(EvError::Numerical(format!("shell support [{}, {}] escapes [{a}, {b}]", s.rmin, s.rmax)));
            }
        }
        Ok(())
    }

    /// Support bounds, or an error for matter-free states.
    pub fn support(&self) -> Result<Support> {
        self.support.ok_or_else(|| EvError::gate("support", "no matter support"))
    }

    /// `y(r)` and `m(r)` with their derivatives.
    fn y_m(&self, r: f64) -> (f64, f64, f64, f64) {
        match (&self.table, self.support) {
            (Some(t), Some(s)) if r >= s.rmin && r <= s.rmax => t.eval(r),
            (_, Some(s)) if r > s.rmax => {
                let mt = self.m_center + self.m_vlasov;
                let y = self.y_inf - 0.5 * (1.0 - 2.0 * mt / r).ln();
                (y, self.m_vlasov, -mt / (r * r) / (1.0 - 2.0 * mt / r), 0.0)
            }
            _ => match self.origin {
                Origin::Shell(p) => {
                    let m = p.m;
                    let y = if self.support.is_some() { p.y_vacuum(r) } else { self.y_inf - 0.5 * (1.0 - 2.0 * m / r).ln() };
                    (y, 0.0, -m / (r * r) / (1.0 - 2.0 * m / r), 0.0)
                }
                Origin::Singfree { y0 } => (y0, 0.0, 0.0, 0.0),
            },
        }
    }

    fn in_support(&self, r: f64) -> bool {
        matches!(self.support, Some(s) if r >= s.rmin && r <= s.rmax)
    }

    /// `y(r) = ln E₀ − μ₀(r)`.
    pub fn y_at(&self, r: f64) -> f64 {
        self.y_m(r).0
    }

    /// Quasi-local Vlasov mass `m(r)`.
    pub fn m_at(&self, r: f64) -> f64 {
        self.y_m(r).1
    }

    pub fn mu0_at(&self, r: f64) -> f64 {
        if self.support.is_none() && self.mode == Mode::Singfree {
            return 0.0;
        }
        self.y_inf - self.y_m(r).0
    }

    pub fn lambda0_at(&self, r: f64) -> f64 {
        let m = self.y_m(r).1;
        -0.5 * (1.0 - 2.0 * (self.m_center + m) / r).ln()
    }

    pub fn rho0_at(&self, r: f64) -> f64 {
        if !self.in_support(r) {
            return 0.0;
        }
        self.eos.profile_g(r, self.y_at(r)).unwrap_or(0.0)
    }

    pub fn p0_at(&self, r: f64) -> f64 {
        if !self.in_support(r) {
            return 0.0;
        }
        self.eos.profile_h(r, self.y_at(r)).unwrap_or(0.0)
    }

    /// `μ₀′(r)` from the field equation with the tabulated pressure.
    pub fn mu0_prime_at(&self, r: f64) -> f64 {
        self.local_fast(r).mu_prime
    }

    /// `y, m, μ, λ, μ′` from the interpolated tables; density, tangential
    /// pressure and `λ′` are left unset.
    pub fn local_fast(&self, r: f64) -> LocalState {
        let (y, m, _, _) = self.y_m(r);
        let mt = self.m_center + m;
        let den = 1.0 - 2.0 * mt / r;
        let p = match &self.table {
            Some(t) if self.in_support(r) => t.pressure(r).0,
            _ => 0.0,
        };
        let mu_prime = if r == 0.0 { 0.0 } else { (mt / (r * r) + 4.0 * PI * r * p) / den };
        let mu = if self.support.is_none() && self.mode == Mode::Singfree { 0.0 } else { self.y_inf - y };
        LocalState { r, y, m, mu, lambda: -0.5 * den.ln(), mu_prime, lambda_prime: f64::NAN, rho: f64::NAN, p, q: f64::NAN }
    }

    /// `(μ₀′, μ₀″)` from the interpolated tables.
    pub fn mu0_derivatives(&self, r: f64) -> (f64, f64) {
        let (_, m, _, dm) = self.y_m(r);
        let (p, dp) = match &self.table {
            Some(t) if self.in_support(r) => t.pressure(r),
            _ => (0.0, 0.0),
        };
        let mt = self.m_center + m;
        let n = mt / (r * r) + 4.0 * PI * r * p;
        let d = 1.0 - 2.0 * mt / r;
        let dn = dm / (r * r) - 2.0 * mt / (r * r * r) + 4.0 * PI * (p + r * dp);
        let dd = -2.0 * dm / r + 2.0 * mt / (r * r);
        (n / d, (dn * d - n * dd) / (d * d))
    }

    /// All metric and matter quantities at `r`.
    pub fn local(&self, r: f64) -> Result<LocalState> {
        let mut st = self.local_fast(r);
        if r == 0.0 {
            st.rho = self.table.as_ref().map_or(0.0, |_| self.eos.profile_g(1e-300, st.y).unwrap_or(0.0));
            st.q = st.p;
            st.lambda_prime = 0.0;
            return Ok(st);
        }
        let (rho, p, q) = if self.in_support(r) {
            (self.eos.profile_g(r, st.y)?, self.eos.profile_h(r, st.y)?, self.eos.profile_q(r, st.y)?)
        } else {
            (0.0, 0.0, 0.0)
        };
        let mt = self.m_center + st.m;
        st.rho = rho;
        st.p = p;
        st.q = q;
        st.mu_prime = (mt / (r * r) + 4.0 * PI * r * p) / (1.0 - 2.0 * mt / r);
        st.lambda_prime = (2.0 * st.lambda).exp() * (4.0 * PI * r * rho - mt / (r * r));
        Ok(st)
    }

    /// Nodes and slopes of the matter table (used for serialization).
    pub fn support_samples(&self) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        self.table.as_ref().map(|t| (t.r.clone(), t.y.clone(), t.m.clone()))
    }

    /// Residuals of the static equations on `n` Chebyshev nodes of the support.
    ///
    /// The TOV residual `p′ + μ′(p + ρ) + (2/r)(p − q)` uses derivatives of Chebyshev
    /// interpolants of the tables, relative to `sup |μ′(p + ρ)|`. The field equations
    /// `e^{−2λ}(2rλ′ − 1) + 1 = 8πr²ρ` and `e^{−2λ}(2rμ′ + 1) − 1 = 8πr²p` are checked in
    /// integrated form from the inner support radius, with `ρ` and `p` recomputed from
    /// the equation of state: the first against `sup 2m/r`, the second against
    /// `sup ∫ 4πs e^{2λ}(ρ + p) ds`.
    pub fn equilibrium_residuals(&self, n: usize) -> Result<EquilibriumResiduals> {
        let s = self.support()?;
        let nodes = chebyshev_nodes(n, s.rmin, s.rmax);
        let states = nodes.iter().map(|&r| self.local(r)).collect::<Result<Vec<_>>>()?;
        let series = |v: Vec<f64>| ChebSeries::from_values(s.rmin, s.rmax, &v);
        let dmu = series(states.iter().map(|st| st.mu).collect()).derivative();
        let dp = series(states.iter().map(|st| st.p).collect()).derivative();
        let mass = series(nodes.iter().zip(&states).map(|(&r, st)| 4.0 * PI * r * r * st.rho).collect()).antiderivative();
        let mu_rate = series(nodes.iter().zip(&states).map(|(&r, st)| ((2.0 * st.lambda).exp() * (1.0 + 8.0 * PI * r * r * st.p) - 1.0) / (2.0 * r)).collect()).antiderivative();
        let matter = series(nodes.iter().zip(&states).map(|(&r, st)| 4.0 * PI * r * (2.0 * st.lambda).exp() * (st.rho + st.p)).collect()).antiderivative();
        let (mu_a, m_a) = (self.mu0_at(s.rmin), self.m_at(s.rmin));
        let (mut tov, mut tov_scale, mut fl, mut fl_scale, mut fm, mut fm_scale) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for (&r, st) in nodes.iter().zip(&states) {
            let mu_p = dmu.eval(r);
            tov = tov.max((dp.eval(r) + mu_p * (st.p + st.rho) + 2.0 / r * (st.p - st.q)).abs());
            tov_scale = tov_scale.max((mu_p * (st.p + st.rho)).abs());
            let m = m_a + mass.eval(r);
            fl = fl.max(((-2.0 * st.lambda).exp() - 1.0 + 2.0 * (self.m_center + m) / r).abs());
            fl_scale = fl_scale.max(2.0 * m / r);
            fm = fm.max((st.mu - mu_a - mu_rate.eval(r)).abs());
            fm_scale = fm_scale.max(matter.eval(r).abs());
        }
        Ok(EquilibriumResiduals { tov: tov / tov_scale, field_lambda: fl / fl_scale, field_mu: fm / fm_scale, nodes: n })
    }

    /// ADM mass, rest mass, binding energy and compactness.
    pub fn diagnostics(&self) -> Result<Diagnostics> {
        let Some(s) = self.support else {
            let max = self
                .r_grid
                .iter()
                .filter(|&&r| r > 0.0)
                .map(|&r| 2.0 * self.m_center / r)
                .fold(0.0f64, f64::max);
            return Ok(Diagnostics { m_adm: self.m_center, n_rest_mass: 0.0, binding_energy: None, max_2m_over_r: if self.mode == Mode::Shell { 0.0 } else { max } });
        };
        let n = 512;
        let nodes = chebyshev_nodes(n, s.rmin, s.rmax);
        let w = fejer_weights(n, s.rmin, s.rmax);
        let mut rest = 0.0;
        for (&r, &wi) in nodes.iter().zip(&w) {
            if r <= 0.0 {
                continue;
            }
            let y = self.y_at(r);
            let density = self.eos.phi_moment(r, y, 0, 0);
            rest += wi * 4.0 * PI * r * r * self.lambda0_at(r).exp() * density;
        }
        let max_c = self
            .r_grid
            .iter()
            .zip(&self.m_quasilocal)
            .filter(|(&r, _)| r > 0.0 && (self.mode == Mode::Singfree || (r >= s.rmin && r <= s.rmax)))
            .map(|(&r, &m)| 2.0 * (self.m_center + m) / r)
            .fold(0.0f64, f64::max);
        Ok(Diagnostics {
            m_adm: self.m_center + self.m_vlasov,
            n_rest_mass: rest,
            binding_energy: Some((rest - self.m_vlasov) / rest),
            max_2m_over_r: max_c,
        })
    }
}

//! Effective potentials, single-well verification, turning points, the radial
//! period function and the angle variable along each orbit.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::equilibria::{Mode, SteadyState};
use crate::error::{EvError, Result};
use crate::quad::{chebyshev_nodes, ChebSeries};
use crate::roots::brent;

/// Relative orbit width below which the harmonic period formula is used.
pub const HARMONIC_THRESHOLD: f64 = 1e-4;

/// Default number of Chebyshev nodes in the orbit parameter `u`.
pub const ORBIT_NODES: usize = 96;

/// `Ψ_L(r) = e^{μ₀(r)} √(1 + L/r²)`.
pub fn effective_potential(ss: &SteadyState, ang: f64, r: f64) -> f64 {
    ss.mu0_at(r).exp() * (1.0 + ang / (r * r)).sqrt()
}

/// `Ψ_L′(r)`.
pub fn effective_potential_prime(ss: &SteadyState, ang: f64, r: f64) -> f64 {
    let st = ss.local_fast(r);
    let a = 1.0 + ang / (r * r);
    st.mu.exp() / a.sqrt() * (st.mu_prime * a - ang / (r * r * r))
}

/// `Ψ_L″(r)`.
pub fn effective_potential_second(ss: &SteadyState, ang: f64, r: f64) -> f64 {
    let mu = ss.mu0_at(r);
    let (d1, d2) = ss.mu0_derivatives(r);
    let a = 1.0 + ang / (r * r);
    let da = -2.0 * ang / (r * r * r);
    // Ψ = e^μ a^{1/2}, so Ψ″ = Ψ [(μ′ + a′/(2a))² + μ″ + a″/(2a) − a′²/(2a²)].
    let dda = 6.0 * ang / (r * r * r * r);
    let g = d1 + da / (2.0 * a);
    mu.exp() * a.sqrt() * (g * g + d2 + dda / (2.0 * a) - da * da / (2.0 * a * a))
}

/// Upper bound `r²(e^{2y(r)} − 1)` on `L` for which `Ψ_L(r) < E₀`.
pub fn angular_bound(ss: &SteadyState, r: f64) -> f64 {
    r * r * (2.0 * ss.y_at(r)).exp_m1()
}

/// Per-`L` outcome of the critical-point scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WellEntry {
    #[serde(rename = "L")]
    pub l: f64,
    /// Endpoints of `I_L`.
    pub interval: (f64, f64),
    /// Located zeros of `Ψ_L′` inside `I_L`.
    pub critical_radii: Vec<f64>,
}

/// Description of the `(E, L)` support of a single-well steady state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportEL {
    pub e0: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
    #[serde(rename = "L_max")]
    pub l_max: f64,
    /// Radius where `I_L` collapses as `L → L_max`.
    pub r_at_l_max: f64,
    #[serde(rename = "L_grid")]
    pub l_grid: Vec<f64>,
    pub r_l: Vec<f64>,
    pub e_min: Vec<f64>,
    /// Extremes of the period function over the sampled `(E, L)`.
    pub t_min: f64,
    pub t_max: f64,
}

/// Full single-well report with per-`L` detail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingleWellReport {
    pub pass: bool,
    pub entries: Vec<WellEntry>,
    /// `max 2m/r ≤ 1/3` for isotropic singularity-free states; `None` otherwise.
    pub sufficient_condition: Option<bool>,
    pub support: Option<SupportEL>,
}

/// Tunable resolution of the single-well scan.
#[derive(Debug, Clone, Copy)]
pub struct WellOptions {
    /// Uniformly spaced `L` samples (further samples are refined geometrically near `L_max`).
    pub n_l: usize,
    /// Sign-change samples of `Ψ_L′` per interval.
    pub n_samples: usize,
    /// Energy levels per `L` used for the period bounds.
    pub n_energy: usize,
}

impl Default for WellOptions {
    fn default() -> Self {
        WellOptions { n_l: 48, n_samples: 2048, n_energy: 6 }
    }
}

/// One radial orbit `(E, L)` with its period and angle map.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub e: f64,
    pub l: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    pub r_l: f64,
    pub period: f64,
    /// Set when the near-circular formula was used.
    pub harmonic: bool,
    center: f64,
    half: f64,
    /// `θ(u)` for `r = c + h sin u`, `u ∈ [−π/2, π/2]`.
    theta_u: Option<ChebSeries>,
    dtheta_u: Option<ChebSeries>,
}

impl Orbit {
    fn u_of_r(&self, r: f64) -> f64 {
        ((r - self.center) / self.half).clamp(-1.0, 1.0).asin()
    }

    fn theta_of_u(&self, u: f64) -> f64 {
        match &self.theta_u {
            Some(s) => s.eval(u).clamp(0.0, 0.5),
            None => (u + 0.5 * PI) / (2.0 * PI),
        }
    }

    /// `θ(r) ∈ [0, 1/2]` on the outgoing branch.
    pub fn theta_of_r(&self, r: f64) -> f64 {
        if r <= self.r_minus {
            return 0.0;
        }
        if r >= self.r_plus {
            return 0.5;
        }
        self.theta_of_u(self.u_of_r(r))
    }

    /// `u` with `θ(u) = θ` for `θ ∈ [0, 1/2]`.
    fn u_of_theta(&self, theta: f64) -> f64 {
        let (Some(s), Some(ds)) = (&self.theta_u, &self.dtheta_u) else {
            return 2.0 * PI * theta - 0.5 * PI;
        };
        if theta <= 0.0 {
            return -0.5 * PI;
        }
        if theta >= 0.5 {
            return 0.5 * PI;
        }
        let (mut lo, mut hi) = (-0.5 * PI, 0.5 * PI);
        let mut u = 2.0 * PI * theta - 0.5 * PI;
        for _ in 0..100 {
            let f = s.eval(u) - theta;
            if f > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let d = ds.eval(u);
            let mut next = u - f / d;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() < 1e-15 {
                return next;
            }
            u = next;
        }
        u
    }

    /// `R(θ)` for `θ ∈ [0, 1[`.
    pub fn r_of_theta(&self, theta: f64) -> f64 {
        let t = theta.rem_euclid(1.0);
        let t = if t > 0.5 { 1.0 - t } else { t };
        self.center + self.half * self.u_of_theta(t).sin()
    }

    /// `(R, W)(θ)` with `W ≥ 0` on `[0, 1/2]` and `W ≤ 0` on `[1/2, 1[`.
    pub fn point(&self, ss: &SteadyState, theta: f64) -> (f64, f64) {
        let t = theta.rem_euclid(1.0);
        let r = self.r_of_theta(t);
        if t == 0.0 || t == 0.5 {
            return (r, 0.0);
        }
        let w2 = (self.e * self.e * (-2.0 * ss.mu0_at(r)).exp() - 1.0 - self.l / (r * r)).max(0.0);
        let w = w2.sqrt();
        (r, if t > 0.5 { -w } else { w })
    }

    /// `∂θ R` at angle `θ ∈ [0, 1/2]`, from the radial velocity.
    pub fn theta_derivative_r(&self, theta: f64) -> f64 {
        let t = theta.clamp(0.0, 0.5);
        let u = self.u_of_theta(t);
        let dth = match &self.dtheta_u {
            Some(ds) => ds.eval(u),
            None => 1.0 / (2.0 * PI),
        };
        self.half * u.cos() / dth
    }
}

/// Sampled angle table of one orbit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitTable {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    #[serde(rename = "T")]
    pub period: f64,
    pub theta_nodes: Vec<f64>,
    pub r_nodes: Vec<f64>,
    pub w_nodes: Vec<f64>,
}

/// Orbit computations on a fixed steady state.
#[derive(Debug, Clone)]
pub struct OrbitSolver<'a> {
    pub ss: &'a SteadyState,
    pub e0: f64,
    pub l0: f64,
    pub l_max: f64,
    pub r_at_l_max: f64,
    pub rmin: f64,
    pub rmax: f64,
    pub nodes: usize,
}

impl<'a> OrbitSolver<'a> {
    pub fn new(ss: &'a SteadyState, nodes: usize) -> Result<Self> {
        let sup = ss.support()?;
        let (rmin, rmax) = (sup.rmin, sup.rmax);
        let n = 4096;
        let mut best = (rmin, f64::NEG_INFINITY);
        for i in 0..=n {
            let r = rmin + (rmax - rmin) * i as f64 / n as f64;
            if r <= 0.0 {
                continue;
            }
            let v = angular_bound(ss, r);
            if v > best.1 {
                best = (r, v);
            }
        }
        // Golden-section refinement of the maximiser.
        let h = (rmax - rmin) / n as f64;
        let (mut a, mut b) = ((best.0 - h).max(rmin.max(1e-300)), (best.0 + h).min(rmax));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if angular_bound(ss, c) > angular_bound(ss, d) {
                b = d;
            } else {
                a = c;
            }
            if b - a < 1e-14 * b {
                break;
            }
        }
        let r_c = 0.5 * (a + b);
        let l_max = angular_bound(ss, r_c);
        let l0 = ss.eos.l0;
        if !(l_max > l0) {
            return Err(EvError::gate("support", format!("no admissible angular momenta: L_max = {l_max} <= L0 = {l0}")));
        }
        Ok(OrbitSolver { ss, e0: ss.e0_cut, l0, l_max, r_at_l_max: r_c, rmin, rmax, nodes })
    }

    /// `I_L = {Ψ_L < E₀}` inside the support.
    pub fn well_interval(&self, ang: f64) -> Result<(f64, f64)> {
        if !(ang >= self.l0 && ang < self.l_max) {
            return Err(EvError::OutOfSupport(format!("L = {ang} outside [{}, {}[", self.l0, self.l_max)));
        }
        let f = |r: f64| angular_bound(self.ss, r) - ang;
        let tol = 1e-15 * self.rmax;
        let a = if f(self.rmin.max(1e-300)) >= 0.0 { self.rmin } else { brent(f, self.rmin.max(1e-300), self.r_at_l_max, tol)? };
        let b = if f(self.rmax) >= 0.0 { self.rmax } else { brent(f, self.r_at_l_max, self.rmax, tol)? };
        Ok((a, b))
    }

    /// Sign function `μ₀′ − L/(r³ + L r)` of `Ψ_L′`.
    fn well_fn(&self, ang: f64, r: f64) -> f64 {
        self.ss.mu0_prime_at(r) - ang / (r * r * r + ang * r)
    }

    /// The minimiser `r_L` of `Ψ_L` on `I_L`.
    pub fn r_l(&self, ang: f64) -> Result<f64> {
        let (a, b) = self.well_interval(ang)?;
        let n = 64;
        let mut prev = (a.max(1e-12 * b), self.well_fn(ang, a.max(1e-12 * b)));
        for i in 1..=n {
            let r = a + (b - a) * i as f64 / n as f64;
            let v = self.well_fn(ang, r);
            if prev.1 <= 0.0 && v > 0.0 {
                return brent(|x| self.well_fn(ang, x), prev.0, r, 1e-15 * r);
            }
            prev = (r, v);
        }
        Err(EvError::gate("single-well", format!("no minimum of Psi_L found for L = {ang} in [{a}, {b}]")))
    }

    /// `E_min(L) = Ψ_L(r_L)`.
    pub fn e_min(&self, ang: f64) -> Result<(f64, f64)> {
        let r = self.r_l(ang)?;
        Ok((r, effective_potential(self.ss, ang, r)))
    }

    /// Turning points `r₋ < r_L < r₊` with `Ψ_L(r_±) = E`.
    pub fn turning_points(&self, e: f64, ang: f64) -> Result<(f64, f64)> {
        let (r_l, e_min) = self.e_min(ang)?;
        self.turning_points_from(e, ang, r_l, e_min)
    }

    fn turning_points_from(&self, e: f64, ang: f64, r_l: f64, e_min: f64) -> Result<(f64, f64)> {
        if !(e > e_min && e < self.e0) {
            return Err(EvError::OutOfSupport(format!("E = {e} outside ]{e_min}, {}[ for L = {ang}", self.e0)));
        }
        let (a, b) = self.well_interval(ang)?;
        let pad = 1e-7 * (b - a).max(1e-12 * b);
        let lo = if self.ss.mode == Mode::Singfree { (a - pad).max(1e-14 * b) } else { a - pad };
        let hi = b + pad;
        let f = |r: f64| effective_potential(self.ss, ang, r) - e;
        let rm = brent(f, lo, r_l, 1e-15 * r_l)?;
        let rp = brent(f, r_l, hi, 1e-15 * hi)?;
        Ok((rm, rp))
    }

    /// Orbit with energy `E = E_min(L) + de`.
    pub fn orbit_offset(&self, ang: f64, de: f64) -> Result<Orbit> {
        let (r_l, e_min) = self.e_min(ang)?;
        self.orbit_at(ang, r_l, e_min, de)
    }

    /// Orbit through `(E, L)`.
    pub fn orbit(&self, e: f64, ang: f64) -> Result<Orbit> {
        let (r_l, e_min) = self.e_min(ang)?;
        if !(e > e_min && e < self.e0) {
            return Err(EvError::OutOfSupport(format!("E = {e} outside ]{e_min}, {}[ for L = {ang}", self.e0)));
        }
        self.orbit_at(ang, r_l, e_min, e - e_min)
    }

    /// Orbit for a known minimiser `r_L`.
    pub fn orbit_at(&self, ang: f64, r_l: f64, e_min: f64, de: f64) -> Result<Orbit> {
        let e = e_min + de;
        if !(de > 0.0 && e < self.e0) {
            return Err(EvError::OutOfSupport(format!("E = {e} outside ]{e_min}, {}[ for L = {ang}", self.e0)));
        }
        let ss = self.ss;
        let psi2 = effective_potential_second(ss, ang, r_l);
        if !(psi2 > 0.0) {
            return Err(EvError::gate("single-well", format!("Psi_L'' = {psi2} at r_L = {r_l} for L = {ang}")));
        }
        let amp = (2.0 * de / psi2).sqrt();
        let scale_factor = (ss.lambda0_at(r_l) - ss.mu0_at(r_l)).exp();
        if 2.0 * amp / r_l < HARMONIC_THRESHOLD {
            let period = 2.0 * PI * scale_factor * (e / psi2).sqrt();
            return Ok(Orbit { e, l: ang, r_minus: r_l - amp, r_plus: r_l + amp, r_l, period, harmonic: true, center: r_l, half: amp, theta_u: None, dtheta_u: None });
        }
        let (rm, rp) = self.turning_points_from(e, ang, r_l, e_min)?;
        if (rp - rm) / r_l < HARMONIC_THRESHOLD {
            let period = 2.0 * PI * scale_factor * (e / psi2).sqrt();
            let c = 0.5 * (rp + rm);
            return Ok(Orbit { e, l: ang, r_minus: rm, r_plus: rp, r_l, period, harmonic: true, center: c, half: 0.5 * (rp - rm), theta_u: None, dtheta_u: None });
        }
        let c = 0.5 * (rp + rm);
        let h = 0.5 * (rp - rm);
        let us = chebyshev_nodes(self.nodes, -0.5 * PI, 0.5 * PI);
        let mut vals = Vec::with_capacity(us.len());
        for &u in &us {
            let r = c + h * u.sin();
            let st = ss.local_fast(r);
            let psi = st.mu.exp() * (1.0 + ang / (r * r)).sqrt();
            let gap = (e - psi) * (e + psi);
            // (E² − Ψ²)/((r − r₋)(r₊ − r)) stays smooth up to the turning points.
            let q = if gap > 0.0 {
                gap / (h * u.cos()).powi(2)
            } else if u.abs() > 1.4 {
                let end = if u > 0.0 { rp } else { rm };
                2.0 * e * effective_potential_prime(ss, ang, end).abs() / (rp - rm)
            } else {
                return Err(EvError::Numerical(format!("orbit (E = {e}, L = {ang}) leaves the well at r = {r}")));
            };
            vals.push((st.lambda - st.mu).exp() * e / q.sqrt());
        }
        let dens = ChebSeries::from_values(-0.5 * PI, 0.5 * PI, &vals);
        let mut anti = dens.antiderivative();
        let half_period = anti.eval(0.5 * PI);
        let period = 2.0 * half_period;
        for v in anti.coeffs.iter_mut() {
            *v /= period;
        }
        let mut dth = dens;
        for v in dth.coeffs.iter_mut() {
            *v /= period;
        }
        Ok(Orbit { e, l: ang, r_minus: rm, r_plus: rp, r_l, period, harmonic: false, center: c, half: h, theta_u: Some(anti), dtheta_u: Some(dth) })
    }

    /// Period `T(E, L)`.
    pub fn period(&self, e: f64, ang: f64) -> Result<f64> {
        Ok(self.orbit(e, ang)?.period)
    }

    /// `θ(r, E, L) ∈ [0, 1/2]`.
    pub fn angle(&self, r: f64, e: f64, ang: f64) -> Result<f64> {
        let o = self.orbit(e, ang)?;
        if r < o.r_minus * (1.0 - 1e-12) || r > o.r_plus * (1.0 + 1e-12) {
            return Err(EvError::OutOfSupport(format!("r = {r} outside [{}, {}]", o.r_minus, o.r_plus)));
        }
        Ok(o.theta_of_r(r))
    }

    /// Orbit sampled at `n_theta` equally spaced angles in `[0, 1/2]`.
    pub fn orbit_solution(&self, e: f64, ang: f64, n_theta: usize) -> Result<OrbitTable> {
        let o = self.orbit(e, ang)?;
        let n = n_theta.max(2);
        let theta_nodes: Vec<f64> = (0..n).map(|i| 0.5 * i as f64 / (n - 1) as f64).collect();
        let mut r_nodes = Vec::with_capacity(n);
        let mut w_nodes = Vec::with_capacity(n);
        for &t in &theta_nodes {
            let (r, w) = o.point(self.ss, t);
            r_nodes.push(r);
            w_nodes.push(w);
        }
        for (i, &r) in r_nodes.iter().enumerate() {
            if i > 0 && r < r_nodes[i - 1] {
                return Err(EvError::Numerical(format!("angle map not monotone near r = {r} for (E, L) = ({e}, {ang})")));
            }
        }
        Ok(OrbitTable { e, l: ang, r_minus: o.r_minus, r_plus: o.r_plus, period: o.period, theta_nodes, r_nodes, w_nodes })
    }

    /// Sample of `L` values: uniform in `]L₀, L_max[` plus geometric refinement near `L_max`.
    pub fn l_samples(&self, n_uniform: usize) -> Vec<f64> {
        let span = self.l_max - self.l0;
        let mut xs: Vec<f64> = (0..n_uniform).map(|j| (j as f64 + 0.5) / n_uniform as f64).collect();
        for k in 1..=16 {
            xs.push(0.5f64.powi(k) / n_uniform as f64);
        }
        xs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        xs.iter().map(|x| self.l_max - span * x).filter(|&l| l > 0.0).collect()
    }
}

/// Locates all critical points of every sampled `Ψ_L` on `I_L`, evaluates the
/// sufficient condition for isotropic states and estimates period bounds.
pub fn single_well_report(ss: &SteadyState, opts: &WellOptions) -> Result<SingleWellReport> {
    let solver = OrbitSolver::new(ss, ORBIT_NODES)?;
    let mut entries = Vec::new();
    let mut pass = true;
    for ang in solver.l_samples(opts.n_l) {
        let (a, b) = solver.well_interval(ang)?;
        let mut roots = Vec::new();
        let n = opts.n_samples;
        let lo = a.max(1e-9 * b);
        let mut prev = (lo, solver.well_fn(ang, lo));
        for i in 1..=n {
            let r = a + (b - a) * i as f64 / n as f64;
            let v = solver.well_fn(ang, r);
            if prev.1.signum() != v.signum() && v != 0.0 {
                roots.push(brent(|x| solver.well_fn(ang, x), prev.0, r, 1e-14 * r)?);
            }
            prev = (r, v);
        }
        if roots.len() != 1 {
            pass = false;
        }
        entries.push(WellEntry { l: ang, interval: (a, b), critical_radii: roots });
    }
    let isotropic = ss.mode == Mode::Singfree && ss.eos.l == 0.0 && ss.eos.l0 == 0.0;
    let sufficient_condition = if isotropic {
        let d = ss.diagnostics()?;
        Some(d.max_2m_over_r <= 1.0 / 3.0)
    } else {
        None
    };
    let support = if pass {
        let mut l_grid = Vec::new();
        let mut r_l = Vec::new();
        let mut e_min = Vec::new();
        let (mut t_min, mut t_max) = (f64::INFINITY, 0.0f64);
        for en in &entries {
            let rl = en.critical_radii[0];
            let em = effective_potential(ss, en.l, rl);
            l_grid.push(en.l);
            r_l.push(rl);
            e_min.push(em);
            for k in 0..opts.n_energy {
                let x = (k as f64 + 0.5) / opts.n_energy as f64;
                let de = (solver.e0 - em) * x * x;
                let t = solver.orbit_at(en.l, rl, em, de)?.period;
                t_min = t_min.min(t);
                t_max = t_max.max(t);
            }
        }
        Some(SupportEL { e0: solver.e0, l0: solver.l0, l_max: solver.l_max, r_at_l_max: solver.r_at_l_max, l_grid, r_l, e_min, t_min, t_max })
    } else {
        None
    };
    Ok(SingleWellReport { pass, entries, sufficient_condition, support })
}

/// Single-well gate: the `(E, L)` support, or a gate error naming the first violation.
pub fn verify_single_well(ss: &SteadyState, opts: &WellOptions) -> Result<SupportEL> {
    let rep = single_well_report(ss, opts)?;
    if let Some(s) = rep.support {
        return Ok(s);
    }
    let bad = rep.entries.iter().find(|e| e.critical_radii.len() != 1).expect("failing entry");
    Err(EvError::gate(
        "single-well",
        format!("L = {} has {} critical points in I_L = [{}, {}]: {:?}", bad.l, bad.critical_radii.len(), bad.interval.0, bad.interval.1, bad.critical_radii),
    ))
}

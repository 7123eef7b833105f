//! The weighted Hilbert space of phase-space perturbations: `(θ, E, L)` grids,
//! inner products, velocity moments, the linearised metric field `λ_f`, and the
//! radial identities that gauge the quadratures.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::SteadyState;
use crate::error::{EvError, Result};
use crate::potential_orbits::{Orbit, OrbitSolver};
use crate::quad::{barycentric_weights, chebyshev_nodes, lagrange_coefficients, ChebSeries, GaussRule};

/// Resolution of the `(θ, E, L)` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    /// Uniform angle nodes `θ_a = a/n_theta`; must be even.
    pub n_theta: usize,
    /// Gauss–Legendre nodes in the energy coordinate `s`.
    pub n_s: usize,
    /// Gauss–Legendre nodes in the angular coordinate `κ`.
    pub n_kappa: usize,
    /// Chebyshev nodes used for the angle map of each orbit.
    pub orbit_nodes: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { n_theta: 128, n_s: 48, n_kappa: 48, orbit_nodes: crate::potential_orbits::ORBIT_NODES }
    }
}

/// One `(E, L)` node of the grid with its orbit data.
#[derive(Debug, Clone, Copy)]
pub struct ElNode {
    pub e: f64,
    pub l: f64,
    pub s: f64,
    pub kappa: f64,
    pub e_min: f64,
    pub r_l: f64,
    pub period: f64,
    /// `|φ′(E, L)|`.
    pub abs_dphi: f64,
    /// Quadrature weight of `dE dL`.
    pub weight: f64,
    pub harmonic: bool,
}

/// Tensor grid over the support in action-angle variables.
///
/// Energies and angular momenta are parameterised by `L = L_max − κ²` and
/// `E = E_min(L) + (E₀ − E_min(L)) s²`, with Gauss–Legendre rules in `s ∈ [0, 1]`
/// and `κ ∈ [0, √(L_max − L₀)]`.
pub struct PhaseGrid {
    pub opts: GridOptions,
    pub e0: f64,
    pub l0: f64,
    pub l_max: f64,
    pub kappa_max: f64,
    pub s_rule: GaussRule,
    pub kappa_rule: GaussRule,
    /// Nodes in `κ`-major order: index `j·n_s + i`.
    pub nodes: Vec<ElNode>,
    /// `R(θ_a)` per node, index `node·n_theta + a`.
    pub radius: Vec<f64>,
    /// `W(θ_a)` per node.
    pub velocity: Vec<f64>,
    orbits: Vec<Orbit>,
    s_bary: Vec<f64>,
    kappa_bary: Vec<f64>,
    support: (f64, f64),
}

impl fmt::Debug for PhaseGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseGrid").field("opts", &self.opts).field("e0", &self.e0).field("l0", &self.l0).field("l_max", &self.l_max).finish()
    }
}

impl PhaseGrid {
    pub fn new(ss: &SteadyState, opts: GridOptions) -> Result<Arc<PhaseGrid>> {
        if opts.n_theta < 4 || opts.n_theta % 2 != 0 {
            return Err(EvError::Config(format!("n_theta = {} must be even and at least 4", opts.n_theta)));
        }
        if opts.n_s < 2 || opts.n_kappa < 2 || opts.orbit_nodes < 8 {
            return Err(EvError::Config("grid needs n_s, n_kappa >= 2 and orbit_nodes >= 8".into()));
        }
        let sup = ss.support()?;
        let solver = OrbitSolver::new(ss, opts.orbit_nodes)?;
        let kappa_max = (solver.l_max - solver.l0).sqrt();
        let s_rule = GaussRule::legendre(opts.n_s, 0.0, 1.0);
        let kappa_rule = GaussRule::legendre(opts.n_kappa, 0.0, kappa_max);
        let columns: Vec<Result<Vec<(ElNode, Orbit)>>> = kappa_rule
            .nodes
            .par_iter()
            .zip(kappa_rule.weights.par_iter())
            .map(|(&kappa, &wk)| {
                let l = solver.l_max - kappa * kappa;
                let (r_l, e_min) = solver.e_min(l)?;
                let zeta2 = solver.e0 - e_min;
                let mut col = Vec::with_capacity(opts.n_s);
                for (&s, &ws) in s_rule.nodes.iter().zip(&s_rule.weights) {
                    let de = zeta2 * s * s;
                    let orbit = solver.orbit_at(l, r_l, e_min, de)?;
                    let e = orbit.e;
                    let node = ElNode {
                        e,
                        l,
                        s,
                        kappa,
                        e_min,
                        r_l,
                        period: orbit.period,
                        abs_dphi: ss.eos.abs_phi_prime_unchecked(solver.e0, e, l),
                        weight: ws * wk * 2.0 * s * zeta2 * 2.0 * kappa,
                        harmonic: orbit.harmonic,
                    };
                    col.push((node, orbit));
                }
                Ok(col)
            })
            .collect();
        let mut nodes = Vec::with_capacity(opts.n_s * opts.n_kappa);
        let mut orbits = Vec::with_capacity(opts.n_s * opts.n_kappa);
        for col in columns {
            for (n, o) in col? {
                nodes.push(n);
                orbits.push(o);
            }
        }
        let nt = opts.n_theta;
        let samples: Vec<(f64, f64)> = orbits
            .par_iter()
            .flat_map_iter(|o| (0..nt).map(move |a| o.point(ss, a as f64 / nt as f64)))
            .collect();
        let (radius, velocity) = samples.into_iter().unzip();
        Ok(Arc::new(PhaseGrid {
            s_bary: barycentric_weights(&s_rule.nodes),
            kappa_bary: barycentric_weights(&kappa_rule.nodes),
            opts,
            e0: solver.e0,
            l0: solver.l0,
            l_max: solver.l_max,
            kappa_max,
            s_rule,
            kappa_rule,
            nodes,
            radius,
            velocity,
            orbits,
            support: (sup.rmin, sup.rmax),
        }))
    }

    pub fn n_theta(&self) -> usize {
        self.opts.n_theta
    }

    pub fn len(&self) -> usize {
        self.nodes.len() * self.opts.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn orbit(&self, node: usize) -> &Orbit {
        &self.orbits[node]
    }

    /// `θ_a` of angle index `a`.
    pub fn theta(&self, a: usize) -> f64 {
        a as f64 / self.opts.n_theta as f64
    }

    /// Node weights of the `H` inner product: `4π² T/|φ′| dE dL / n_θ`.
    pub fn h_weights(&self) -> Vec<f64> {
        let nt = self.opts.n_theta as f64;
        self.nodes.iter().map(|n| 4.0 * PI * PI * n.period / n.abs_dphi * n.weight / nt).collect()
    }

    /// `∬ h(E, L) T(E, L) dE dL` over the grid.
    pub fn integrate_el(&self, mut h: impl FnMut(&ElNode) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.weight * n.period * h(n)).sum()
    }

    fn check_state(&self, ss: &SteadyState) -> Result<()> {
        let s = ss.support()?;
        if s.rmin != self.support.0 || s.rmax != self.support.1 || ss.e0_cut != self.e0 {
            return Err(EvError::Input("phase grid was built for a different steady state".into()));
        }
        Ok(())
    }
}

/// Parity of a phase-space function under `w ↦ −w`, i.e. `θ ↦ 1 − θ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
    Mixed,
}

impl Parity {
    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
            Parity::Mixed => Parity::Mixed,
        }
    }
}

/// A phase-space point in Schwarzschild-type coordinates.
#[derive(Debug, Clone, Copy)]
pub struct PhasePoint {
    pub r: f64,
    pub w: f64,
    pub l: f64,
    pub e: f64,
    /// `|φ′(E, L)|`.
    pub abs_dphi: f64,
}

/// Closed-form representation of a phase-space function.
pub type Evaluator = Arc<dyn Fn(&PhasePoint) -> f64 + Send + Sync>;

/// Values of a function on a [`PhaseGrid`].
#[derive(Clone)]
pub struct PhaseFunction {
    grid: Arc<PhaseGrid>,
    pub values: Vec<f64>,
    pub parity: Parity,
    exact: Option<Evaluator>,
}

impl fmt::Debug for PhaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseFunction").field("len", &self.values.len()).field("parity", &self.parity).field("exact", &self.exact.is_some()).finish()
    }
}

fn detect_parity(grid: &PhaseGrid, values: &[f64]) -> Parity {
    let nt = grid.opts.n_theta;
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-13 * scale;
    let (mut even, mut odd) = (true, true);
    for node in values.chunks(nt) {
        for a in 0..nt {
            let b = (nt - a) % nt;
            if (node[a] - node[b]).abs() > tol {
                even = false;
            }
            if (node[a] + node[b]).abs() > tol {
                odd = false;
            }
        }
        if !even && !odd {
            break;
        }
    }
    match (even, odd) {
        (true, _) => Parity::Even,
        (false, true) => Parity::Odd,
        _ => Parity::Mixed,
    }
}

impl PhaseFunction {
    /// Samples a closed-form function at the grid nodes and keeps the closure for
    /// exact velocity moments.
    pub fn from_fn(grid: &Arc<PhaseGrid>, f: impl Fn(&PhasePoint) -> f64 + Send + Sync + 'static) -> PhaseFunction {
        let f: Evaluator = Arc::new(f);
        let nt = grid.opts.n_theta;
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let n = &grid.nodes[k / nt];
                f(&PhasePoint { r: grid.radius[k], w: grid.velocity[k], l: n.l, e: n.e, abs_dphi: n.abs_dphi })
            })
            .collect();
        let parity = detect_parity(grid, &values);
        PhaseFunction { grid: grid.clone(), values, parity, exact: Some(f) }
    }

    /// Samples a function of the node data and the angle `θ`, with `(R, W)(θ)`.
    pub fn from_angle_fn(grid: &Arc<PhaseGrid>, f: impl Fn(&ElNode, f64, f64, f64) -> f64 + Sync) -> PhaseFunction {
        let nt = grid.opts.n_theta;
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|k| f(&grid.nodes[k / nt], grid.theta(k % nt), grid.radius[k], grid.velocity[k]))
            .collect();
        let parity = detect_parity(grid, &values);
        PhaseFunction { grid: grid.clone(), values, parity, exact: None }
    }

    pub fn from_values(grid: &Arc<PhaseGrid>, values: Vec<f64>) -> Result<PhaseFunction> {
        if values.len() != grid.len() {
            return Err(EvError::Input(format!("expected {} values, got {}", grid.len(), values.len())));
        }
        let parity = detect_parity(grid, &values);
        Ok(PhaseFunction { grid: grid.clone(), values, parity, exact: None })
    }

    /// Grid values paired with the closed form they were sampled from.
    pub fn from_values_with_exact(grid: &Arc<PhaseGrid>, values: Vec<f64>, f: impl Fn(&PhasePoint) -> f64 + Send + Sync + 'static) -> Result<PhaseFunction> {
        let mut out = PhaseFunction::from_values(grid, values)?;
        out.exact = Some(Arc::new(f));
        Ok(out)
    }

    pub fn zeros(grid: &Arc<PhaseGrid>) -> PhaseFunction {
        PhaseFunction { grid: grid.clone(), values: vec![0.0; grid.len()], parity: Parity::Even, exact: Some(Arc::new(|_: &PhasePoint| 0.0)) }
    }

    pub fn grid(&self) -> &Arc<PhaseGrid> {
        &self.grid
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// The closed-form representation, if any.
    pub fn exact(&self) -> Option<&Evaluator> {
        self.exact.as_ref()
    }

    fn compatible(&self, other: &PhaseFunction) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(EvError::Input("phase functions live on different grids".into()))
        }
    }

    /// `⟨f, g⟩_H = 4π² ∬ T/|φ′| ∫₀¹ f g dθ dE dL`.
    pub fn inner(&self, other: &PhaseFunction) -> Result<f64> {
        self.compatible(other)?;
        let nt = self.grid.opts.n_theta;
        let w = self.grid.h_weights();
        Ok(self
            .values
            .par_chunks(nt)
            .zip(other.values.par_chunks(nt))
            .zip(w.par_iter())
            .map(|((a, b), &wn)| wn * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).expect("same grid").max(0.0).sqrt()
    }

    /// `a·self + b·other`; the closed form is kept when both operands have one.
    pub fn combine(&self, a: f64, other: &PhaseFunction, b: f64) -> Result<PhaseFunction> {
        self.compatible(other)?;
        let values: Vec<f64> = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        let exact = match (&self.exact, &other.exact) {
            (Some(f), Some(g)) => {
                let (f, g) = (f.clone(), g.clone());
                Some(Arc::new(move |p: &PhasePoint| a * f(p) + b * g(p)) as Evaluator)
            }
            _ => None,
        };
        let parity = detect_parity(&self.grid, &values);
        Ok(PhaseFunction { grid: self.grid.clone(), values, parity, exact })
    }

    pub fn scale(&self, a: f64) -> PhaseFunction {
        let exact = self.exact.clone().map(|f| Arc::new(move |p: &PhasePoint| a * f(p)) as Evaluator);
        PhaseFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| a * v).collect(), parity: self.parity, exact }
    }

    fn split(&self, sign: f64) -> PhaseFunction {
        let nt = self.grid.opts.n_theta;
        let mut values = vec![0.0; self.values.len()];
        for (out, node) in values.chunks_mut(nt).zip(self.values.chunks(nt)) {
            for a in 0..nt {
                out[a] = 0.5 * (node[a] + sign * node[(nt - a) % nt]);
            }
        }
        let exact = self.exact.clone().map(|f| Arc::new(move |p: &PhasePoint| 0.5 * (f(p) + sign * f(&PhasePoint { w: -p.w, ..*p }))) as Evaluator);
        let parity = if sign > 0.0 { Parity::Even } else { Parity::Odd };
        PhaseFunction { grid: self.grid.clone(), values, parity, exact }
    }

    /// `f₊(θ) = ½(f(θ) + f(1 − θ))`.
    pub fn even_part(&self) -> PhaseFunction {
        self.split(1.0)
    }

    /// `f₋(θ) = ½(f(θ) − f(1 − θ))`.
    pub fn odd_part(&self) -> PhaseFunction {
        self.split(-1.0)
    }

    /// `∫₀¹ f dθ` per `(E, L)` node.
    pub fn theta_mean(&self) -> Vec<f64> {
        let nt = self.grid.opts.n_theta;
        self.values.chunks(nt).map(|c| c.iter().sum::<f64>() / nt as f64).collect()
    }

    /// Largest deviation from the `θ`-mean over all nodes.
    fn theta_variation(&self) -> f64 {
        let nt = self.grid.opts.n_theta;
        self.values.chunks(nt).map(|c| c.iter().fold(0.0f64, |m, v| m.max((v - c[0]).abs()))).fold(0.0, f64::max)
    }

    /// Interpolates the grid values at `(θ, E, L)`.
    pub fn interpolate(&self, solver: &OrbitSolver, r: f64, w: f64, e: f64, l: f64, theta_dependent: bool) -> Result<f64> {
        let g = &self.grid;
        let (r_l, e_min) = solver.e_min(l)?;
        let zeta2 = g.e0 - e_min;
        let s = ((e - e_min) / zeta2).max(0.0).sqrt();
        let kappa = (g.l_max - l).max(0.0).sqrt();
        let cs = lagrange_coefficients(&g.s_rule.nodes, &g.s_bary, s);
        let ck = lagrange_coefficients(&g.kappa_rule.nodes, &g.kappa_bary, kappa);
        let nt = g.opts.n_theta;
        let ns = g.opts.n_s;
        if !theta_dependent {
            let mut v = 0.0;
            for (j, &dj) in ck.iter().enumerate() {
                for (i, &ci) in cs.iter().enumerate() {
                    v += dj * ci * self.values[(j * ns + i) * nt];
                }
            }
            return Ok(v);
        }
        let mut profile = vec![0.0; nt];
        for (j, &dj) in ck.iter().enumerate() {
            for (i, &ci) in cs.iter().enumerate() {
                let c = dj * ci;
                let base = (j * ns + i) * nt;
                for (p, v) in profile.iter_mut().zip(&self.values[base..base + nt]) {
                    *p += c * v;
                }
            }
        }
        let orbit = solver.orbit_at(l, r_l, e_min, e - e_min)?;
        let th = orbit.theta_of_r(r);
        let theta = if w < 0.0 { 1.0 - th } else { th };
        Ok(trig_interpolate(&profile, theta))
    }
}

/// Barycentric trigonometric interpolation of equispaced samples of a
/// 1-periodic function (even sample count).
pub fn trig_interpolate(samples: &[f64], theta: f64) -> f64 {
    let n = samples.len();
    let (mut num, mut den) = (0.0, 0.0);
    for (k, &v) in samples.iter().enumerate() {
        let d = PI * (theta - k as f64 / n as f64);
        let sn = d.sin();
        if sn.abs() < 1e-15 {
            return v;
        }
        let c = if k % 2 == 0 { 1.0 } else { -1.0 } * d.cos() / sn;
        num += c * v;
        den += c;
    }
    num / den
}

/// One node of the velocity quadrature at a fixed radius.
#[derive(Debug, Clone, Copy)]
pub struct VelocityPoint {
    pub eps: f64,
    pub e: f64,
    pub l: f64,
    /// `|w| ≥ 0`; both signs carry the same weight.
    pub w: f64,
    pub weight: f64,
}

/// Quadrature for `∫ h dv` over `{E < E₀, L > L₀}` at fixed `r`.
///
/// With `ε = ε_min + Δv²` and `L = L_top − (L_top − L₀)t²`,
/// `∫ h dv = 4πΔ^{3/2} Σ_± ∫₀¹∫₀¹ v² ε √(ε + ε_min) h dt dv`.
#[derive(Debug, Clone)]
pub struct VelocityRule {
    v: GaussRule,
    t: GaussRule,
}

impl Default for VelocityRule {
    fn default() -> Self {
        VelocityRule::new(40, 40)
    }
}

impl VelocityRule {
    pub fn new(n_v: usize, n_t: usize) -> Self {
        VelocityRule { v: GaussRule::legendre(n_v, 0.0, 1.0), t: GaussRule::legendre(n_t, 0.0, 1.0) }
    }

    /// Nodes at radius `r`; empty where no particle reaches.
    pub fn points(&self, ss: &SteadyState, r: f64) -> Vec<VelocityPoint> {
        let mu = ss.mu0_at(r);
        let l0 = ss.eos.l0;
        let eps_min = (1.0 + l0 / (r * r)).sqrt();
        let delta = ss.e0_cut * (-mu).exp() - eps_min;
        if !(delta > 0.0) || r <= 0.0 {
            return Vec::new();
        }
        let pref = 4.0 * PI * delta.powf(1.5);
        let mut out = Vec::with_capacity(self.v.len() * self.t.len());
        for (&v, &wv) in self.v.nodes.iter().zip(&self.v.weights) {
            let eps = eps_min + delta * v * v;
            let base = pref * wv * v * v * eps * (eps + eps_min).sqrt();
            let w_top = (delta * (eps + eps_min)).sqrt() * v;
            let l_top = r * r * (eps * eps - 1.0);
            for (&t, &wt) in self.t.nodes.iter().zip(&self.t.weights) {
                out.push(VelocityPoint { eps, e: mu.exp() * eps, l: l_top - (l_top - l0) * t * t, w: w_top * t, weight: base * wt });
            }
        }
        out
    }
}

/// Velocity moments `ρ_f, p_f, j_f, q_f` on a set of radii.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Moments {
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    pub p: Vec<f64>,
    pub j: Vec<f64>,
    pub q: Vec<f64>,
}

/// Moments of `h(r, w, L)` at `r`: `(∫ε h, ∫(w²/ε) h, ∫w h, ½∫(L/r²)/ε h) dv`.
fn moments_at(rule: &VelocityRule, ss: &SteadyState, r: f64, mut h: impl FnMut(&VelocityPoint, f64) -> Result<f64>) -> Result<[f64; 4]> {
    let mut m = [0.0; 4];
    for pt in rule.points(ss, r) {
        let hp = h(&pt, pt.w)?;
        let hm = h(&pt, -pt.w)?;
        let (s, d) = (hp + hm, hp - hm);
        m[0] += pt.weight * pt.eps * s;
        m[1] += pt.weight * pt.w * pt.w / pt.eps * s;
        m[2] += pt.weight * pt.w * d;
        m[3] += pt.weight * 0.5 * pt.l / (r * r) / pt.eps * s;
    }
    Ok(m)
}

/// Velocity moments of `f` at each radius in `r_nodes`.
///
/// Functions with a closed form are integrated directly in `(w, L)`; grid-only
/// functions are interpolated in `(θ, E, L)` along the orbits through each
/// velocity node.
pub fn source_terms(f: &PhaseFunction, ss: &SteadyState, r_nodes: &[f64], rule: &VelocityRule) -> Result<Moments> {
    f.grid.check_state(ss)?;
    let rows: Vec<Result<[f64; 4]>> = match &f.exact {
        Some(ev) => r_nodes
            .par_iter()
            .map(|&r| {
                let abs = |pt: &VelocityPoint| ss.eos.abs_phi_prime_unchecked(ss.e0_cut, pt.e, pt.l);
                moments_at(rule, ss, r, |pt, w| Ok(ev(&PhasePoint { r, w, l: pt.l, e: pt.e, abs_dphi: abs(pt) })))
            })
            .collect(),
        None => return source_terms_interpolated(f, ss, r_nodes, rule),
    };
    collect_moments(r_nodes, rows)
}

/// Velocity moments computed from the grid values only.
pub fn source_terms_interpolated(f: &PhaseFunction, ss: &SteadyState, r_nodes: &[f64], rule: &VelocityRule) -> Result<Moments> {
    f.grid.check_state(ss)?;
    let solver = OrbitSolver::new(ss, f.grid.opts.orbit_nodes)?;
    let theta_dependent = f.theta_variation() > 0.0;
    let rows: Vec<Result<[f64; 4]>> = r_nodes
        .par_iter()
        .map(|&r| {
            let mut cache: Option<(f64, f64)> = None;
            moments_at(rule, ss, r, |pt, w| {
                if pt.l >= f.grid.l_max || pt.l < f.grid.l0 {
                    return Ok(0.0);
                }
                // The ± branches share the L node; the odd half-orbit uses 1 − θ.
                let v = if !theta_dependent {
                    match cache {
                        Some((l, v)) if l == pt.l && w < 0.0 => v,
                        _ => {
                            let v = f.interpolate(&solver, r, w, pt.e, pt.l, false)?;
                            cache = Some((pt.l, v));
                            v
                        }
                    }
                } else {
                    f.interpolate(&solver, r, w, pt.e, pt.l, true)?
                };
                Ok(v)
            })
        })
        .collect();
    collect_moments(r_nodes, rows)
}

fn collect_moments(r_nodes: &[f64], rows: Vec<Result<[f64; 4]>>) -> Result<Moments> {
    let mut out = Moments { r: r_nodes.to_vec(), rho: vec![], p: vec![], j: vec![], q: vec![] };
    for row in rows {
        let m = row?;
        out.rho.push(m[0]);
        out.p.push(m[1]);
        out.j.push(m[2]);
        out.q.push(m[3]);
    }
    Ok(out)
}

/// The linearised field `λ_f(r) = 4π e^{2λ₀(r)}/r ∫_{R_min}^r ρ_f s² ds`.
#[derive(Debug, Clone)]
pub struct LambdaField {
    /// `4π ∫_{R_min}^r ρ_f s² ds` as a Chebyshev series on the support.
    pub mass: ChebSeries,
    pub rmin: f64,
    pub rmax: f64,
}

impl LambdaField {
    pub fn eval(&self, ss: &SteadyState, r: f64) -> f64 {
        if r <= self.rmin {
            return 0.0;
        }
        let m = self.mass.eval(r.min(self.rmax));
        (2.0 * ss.lambda0_at(r)).exp() / r * m
    }
}

/// Builds `λ_f` from `ρ_f` sampled on `n_r` Chebyshev nodes of the support.
pub fn lambda_field(f: &PhaseFunction, ss: &SteadyState, n_r: usize, rule: &VelocityRule) -> Result<LambdaField> {
    let sup = ss.support()?;
    let nodes = chebyshev_nodes(n_r, sup.rmin, sup.rmax);
    let mom = source_terms(f, ss, &nodes, rule)?;
    let vals: Vec<f64> = nodes.iter().zip(&mom.rho).map(|(&r, &rho)| 4.0 * PI * r * r * rho).collect();
    let mass = ChebSeries::from_values(sup.rmin, sup.rmax, &vals).antiderivative();
    Ok(LambdaField { mass, rmin: sup.rmin, rmax: sup.rmax })
}

/// Worst relative defect of the `w²|φ′|` moment identity on the support.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HlrResidual {
    pub residual: f64,
    pub at_r: f64,
}

/// Compares `∫ w²|φ′| dv` with `e^{−2λ₀−μ₀}(λ₀′ + μ₀′)/(4πr)` on the state's grid.
///
/// The sum `λ₀′ + μ₀′` is evaluated as `4πr e^{2λ₀}(ρ₀ + p₀)`.
pub fn hlr_identity_residual(ss: &SteadyState) -> Result<HlrResidual> {
    let sup = ss.support()?;
    let mut worst = HlrResidual { residual: 0.0, at_r: sup.rmin };
    for &r in &ss.r_grid {
        if r <= sup.rmin || r >= sup.rmax || r <= 0.0 {
            continue;
        }
        let st = ss.local(r)?;
        let sum = 4.0 * PI * r * (2.0 * st.lambda).exp() * (st.rho + st.p);
        let rhs = (-2.0 * st.lambda - st.mu).exp() * sum / (4.0 * PI * r);
        let lhs = ss.eos.dphi_moment(r, st.y, 0, 2)?;
        if rhs == 0.0 && lhs == 0.0 {
            continue;
        }
        let res = (lhs - rhs).abs() / rhs.abs().max(lhs.abs());
        if res > worst.residual {
            worst = HlrResidual { residual: res, at_r: r };
        }
    }
    Ok(worst)
}

/// `sup_r ∫ |φ′| dv` over the state's grid; zero without matter.
pub fn s4_bound(ss: &SteadyState) -> Result<f64> {
    if ss.support.is_none() {
        return Ok(0.0);
    }
    let mut best = 0.0f64;
    for &r in &ss.r_grid {
        if r > 0.0 && ss.rho0_at(r) > 0.0 {
            best = best.max(ss.eos.dphi_moment(r, ss.y_at(r), 0, 0)?);
        }
    }
    Ok(best)
}

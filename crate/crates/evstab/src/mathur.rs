//! The reduced (Mathur) operator: its kernel `K(r, s)`, Nyström eigenvalues,
//! Hilbert–Schmidt norm and the resulting stability verdict.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eos::Family;
use crate::equilibria::SteadyState;
use crate::error::{EvError, Result};
use crate::operators::{BasisOptions, KernelBasis};
use crate::phase_space::{hlr_identity_residual, s4_bound, GridOptions, PhaseFunction, PhaseGrid, PhasePoint};
use crate::potential_orbits::{verify_single_well, WellOptions};
use crate::quad::GaussRule;

/// `α₀(r) = e^{(λ₀+μ₀)/2} / √(r(λ₀′+μ₀′))`, defined where matter is present.
pub fn alpha0(ss: &SteadyState, r: f64) -> Result<f64> {
    let st = ss.local(r)?;
    let sum = st.lambda_prime + st.mu_prime;
    if !(r > 0.0) || !(sum > 0.0) || st.rho <= 0.0 {
        return Err(EvError::OutOfSupport(format!("alpha0 needs lambda0' + mu0' > 0, got {sum:e} at r = {r}")));
    }
    Ok(((st.lambda + st.mu) / 2.0).exp() / (r * sum).sqrt())
}

/// `β₀(r) = e^{3μ₀/2 − λ₀/2} √(2rμ₀′ + 1) / r`.
pub fn beta0(ss: &SteadyState, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(EvError::Input(format!("beta0 needs r > 0, got {r}")));
    }
    let st = ss.local_fast(r);
    Ok((1.5 * st.mu - 0.5 * st.lambda).exp() * (2.0 * r * st.mu_prime + 1.0).sqrt() / r)
}

/// Radial factor `e^{μ₀/2 + 3λ₀/2} √(2rμ₀′ + 1) / r` of the kernel.
pub fn kernel_factor(ss: &SteadyState, r: f64) -> f64 {
    let st = ss.local_fast(r);
    (0.5 * st.mu + 1.5 * st.lambda).exp() * (2.0 * r * st.mu_prime + 1.0).sqrt() / r
}

/// `f_r = |φ′| E e^{−(λ₀+μ₀)(R)} 1_{R ≤ r}` on `grid`.
pub fn indicator_profile(ss: &SteadyState, grid: &Arc<PhaseGrid>, r: f64) -> PhaseFunction {
    let shared = Arc::new(ss.clone());
    PhaseFunction::from_fn(grid, move |p: &PhasePoint| {
        if p.r > r || p.abs_dphi == 0.0 {
            0.0
        } else {
            p.abs_dphi * p.e * (-shared.lambda0_at(p.r) - shared.mu0_at(p.r)).exp()
        }
    })
}

/// `I(r_i, s_j) = ⟨f_r, f_s⟩_H − b(r)ᵀ G⁻¹ b(s)` with the direct term `D(min(r, s))`.
pub fn i_matrix(basis: &KernelBasis, r_nodes: &[f64], s_nodes: &[f64]) -> DMatrix<f64> {
    let zr: Vec<Vec<f64>> = r_nodes.par_iter().map(|&r| basis.z_vector(r)).collect();
    let zs: Vec<Vec<f64>> = s_nodes.par_iter().map(|&s| basis.z_vector(s)).collect();
    let rows: Vec<Vec<f64>> = r_nodes
        .par_iter()
        .zip(zr.par_iter())
        .map(|(&r, a)| {
            s_nodes
                .iter()
                .zip(&zs)
                .map(|(&s, b)| basis.d_value(r.min(s)) - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
                .collect()
        })
        .collect();
    DMatrix::from_fn(r_nodes.len(), s_nodes.len(), |i, j| rows[i][j])
}

/// Basis metadata carried by an assembled kernel.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BasisSummary {
    pub n_e: usize,
    pub n_l: usize,
    pub dim: usize,
    pub rank: usize,
    pub dropped: usize,
    pub condition: f64,
}

/// Kernel sampled on Gauss–Legendre nodes, with its Nyström spectrum.
#[derive(Debug, Clone)]
pub struct MathurKernel {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub k: DMatrix<f64>,
    /// `I(r_i, r_j)`, when the kernel comes from a steady state.
    pub i: Option<DMatrix<f64>>,
    /// `D(r_i) = ‖f_{r_i}‖²_H`, when the kernel comes from a steady state.
    pub d: Option<Vec<f64>>,
    pub basis: Option<BasisSummary>,
    /// `‖K‖_{L²}` by the product quadrature.
    pub hs_norm: f64,
    /// Eigenvalues of `M`, decreasing.
    pub eigenvalues: Vec<f64>,
}

impl MathurKernel {
    /// Nyström data for `K` sampled on `n` Gauss–Legendre nodes of `[a, b]`.
    pub fn from_matrix(nodes: Vec<f64>, weights: Vec<f64>, k: DMatrix<f64>) -> Result<Self> {
        let n = nodes.len();
        if n == 0 || k.nrows() != n || k.ncols() != n || weights.len() != n {
            return Err(EvError::Input("kernel matrix must be square and match the nodes".into()));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(EvError::Numerical("kernel has non-finite entries".into()));
        }
        let mut hs2 = 0.0;
        for i in 0..n {
            for j in 0..n {
                hs2 += weights[i] * weights[j] * k[(i, j)] * k[(i, j)];
            }
        }
        let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * sw[i] * sw[j] * (k[(i, j)] + k[(j, i)]));
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Ok(MathurKernel { nodes, weights, k, i: None, d: None, basis: None, hs_norm: hs2.sqrt(), eigenvalues })
    }

    /// Samples `K(r, s) = f(r, s)` on `n` Gauss–Legendre nodes of `[a, b]`.
    pub fn from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let rule = GaussRule::legendre(n, a, b);
        let k = DMatrix::from_fn(n, n, |i, j| f(rule.nodes[i], rule.nodes[j]));
        MathurKernel::from_matrix(rule.nodes, rule.weights, k)
    }

    /// Kernel of the steady state on `n_nodes` Gauss–Legendre nodes of the support.
    pub fn assemble(ss: &SteadyState, basis: &KernelBasis, n_nodes: usize) -> Result<Self> {
        let sup = ss.support()?;
        let rule = GaussRule::legendre(n_nodes, sup.rmin, sup.rmax);
        let i = i_matrix(basis, &rule.nodes, &rule.nodes);
        let a: Vec<f64> = rule.nodes.iter().map(|&r| kernel_factor(ss, r)).collect();
        let k = DMatrix::from_fn(n_nodes, n_nodes, |p, q| a[p] * a[q] * i[(p, q)]);
        let d = rule.nodes.iter().map(|&r| basis.d_value(r)).collect();
        let mut out = MathurKernel::from_matrix(rule.nodes, rule.weights, k)?;
        if out.k.iter().all(|v| *v == 0.0) {
            return Err(EvError::Numerical("kernel vanishes identically".into()));
        }
        out.i = Some(i);
        out.d = Some(d);
        let f = &basis.factor;
        out.basis = Some(BasisSummary { n_e: basis.generators.n_e, n_l: basis.generators.n_l, dim: f.dim, rank: f.rank, dropped: f.dropped(), condition: f.condition_estimate() });
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `‖M‖ = λ₁`.
    pub fn operator_norm(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_min(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty")
    }

    /// `√(Σ λ_j²)`.
    pub fn hs_from_eigenvalues(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.k.abs().max()
    }

    /// `max |K − Kᵀ|`.
    pub fn symmetry_defect(&self) -> f64 {
        (&self.k - self.k.transpose()).abs().max()
    }

    /// Largest `|K(r, s)|` with `r` or `s` at the first or last node.
    pub fn boundary_adjacent(&self) -> f64 {
        let n = self.len();
        (0..n).map(|j| self.k[(0, j)].abs().max(self.k[(n - 1, j)].abs())).fold(0.0, f64::max)
    }

    /// Largest `|I(r, s)| − √(D(r) D(s))`; non-positive when the Cauchy–Schwarz bound holds.
    pub fn cauchy_schwarz_excess(&self) -> Option<f64> {
        let (i, d) = (self.i.as_ref()?, self.d.as_ref()?);
        let n = self.len();
        let mut worst = f64::NEG_INFINITY;
        for p in 0..n {
            for q in 0..n {
                worst = worst.max(i[(p, q)].abs() - (d[p].max(0.0) * d[q].max(0.0)).sqrt());
            }
        }
        Some(worst)
    }

    /// `#{λ_j > threshold}`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.eigenvalues.iter().filter(|l| **l > threshold).count()
    }
}

/// Outcome of the eigenvalue test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    LinearlyStable,
    ZeroFrequencyMode,
    Unstable,
    /// Refinement moved `λ₁` or `‖K‖` by more than the tolerance.
    Inconclusive,
}

/// Default half-width of the zero-frequency band around `λ₁ = 1`.
pub const VERDICT_TOLERANCE: f64 = 1e-3;

/// Classifies `λ₁` and returns the verdict with `#{λ_j > 1 + tol}`.
pub fn classify(eigenvalues: &[f64], tol: f64) -> (Verdict, usize) {
    let l1 = eigenvalues.first().copied().unwrap_or(0.0);
    if l1 < 1.0 - tol {
        (Verdict::LinearlyStable, 0)
    } else if (l1 - 1.0).abs() <= tol {
        (Verdict::ZeroFrequencyMode, 0)
    } else {
        (Verdict::Unstable, eigenvalues.iter().filter(|l| **l > 1.0 + tol).count())
    }
}

/// Largest integer strictly below `‖K‖²`, the bound on the number of growing modes.
pub fn mode_bound(hs_norm: f64) -> usize {
    let h2 = hs_norm * hs_norm;
    (h2.ceil() as usize).saturating_sub(1)
}

/// Resolution of one kernel assembly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    /// Gauss–Legendre nodes of the Nyström discretisation; the radial
    /// Chebyshev profiles use twice as many nodes.
    pub n_nodes: usize,
    pub n_e: usize,
    pub n_l: usize,
    pub n_velocity: usize,
    pub drop_tolerance: f64,
    pub grid: GridOptions,
}

impl Default for KernelOptions {
    fn default() -> Self {
        let b = BasisOptions::default();
        KernelOptions { n_nodes: 160, n_e: b.n_e, n_l: b.n_l, n_velocity: b.n_velocity, drop_tolerance: b.drop_tolerance, grid: GridOptions::default() }
    }
}

impl KernelOptions {
    pub fn basis_options(&self) -> BasisOptions {
        BasisOptions { n_e: self.n_e, n_l: self.n_l, n_radial: 2 * self.n_nodes, n_velocity: self.n_velocity, drop_tolerance: self.drop_tolerance, volume_check: false }
    }
}

/// Residuals of the preconditions checked before a kernel is assembled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateReport {
    pub single_well: bool,
    pub t_min: f64,
    pub t_max: f64,
    pub hlr_residual: f64,
    /// `sup_r ∫ |φ′| dv`.
    pub s4_bound: f64,
}

/// Largest HLR residual accepted by [`run_gates`].
pub const HLR_GATE: f64 = 1e-6;

/// Checks finiteness of the `|φ′|` integrals, the single-well property, finite
/// period bounds and the HLR identity.
pub fn run_gates(ss: &SteadyState) -> Result<GateReport> {
    if ss.eos.family == Family::Polytrope && ss.eos.k < 1.0 {
        return Err(EvError::gate("s4", format!("polytropes with k = {} < 1 have unbounded phi' at the cut-off energy", ss.eos.k)));
    }
    let s4 = s4_bound(ss)?;
    if !s4.is_finite() {
        return Err(EvError::gate("s4", format!("sup_r int |phi'| dv = {s4} is not finite")));
    }
    let sup = verify_single_well(ss, &WellOptions::default())?;
    if !(sup.t_min > 0.0) || !sup.t_max.is_finite() {
        return Err(EvError::gate("period-bounds", format!("period range [{}, {}] is not bounded away from 0 and infinity", sup.t_min, sup.t_max)));
    }
    let hlr = hlr_identity_residual(ss)?;
    if !(hlr.residual < HLR_GATE) {
        return Err(EvError::gate("hlr", format!("HLR residual {:e} at r = {} exceeds {HLR_GATE:e}", hlr.residual, hlr.at_r)));
    }
    Ok(GateReport { single_well: true, t_min: sup.t_min, t_max: sup.t_max, hlr_residual: hlr.residual, s4_bound: s4 })
}

/// Builds the grid and basis for `opts` and assembles the kernel.
pub fn kernel_k(ss: &SteadyState, opts: &KernelOptions) -> Result<MathurKernel> {
    let grid = PhaseGrid::new(ss, opts.grid)?;
    let basis = KernelBasis::build(ss, &grid, &opts.basis_options())?;
    MathurKernel::assemble(ss, &basis, opts.n_nodes)
}

/// Settings of the stability test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    pub kernel: KernelOptions,
    pub tol: f64,
    /// Relative change of `λ₁` and `‖K‖` tolerated under refinement.
    pub refinement_tol: f64,
    pub refine: bool,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions { kernel: KernelOptions::default(), tol: VERDICT_TOLERANCE, refinement_tol: 1e-3, refine: true }
    }
}

/// One row of the refinement table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementRow {
    pub knob: String,
    pub n_nodes: usize,
    pub n_e: usize,
    pub n_l: usize,
    pub n_theta: usize,
    pub orbit_nodes: usize,
    pub lambda_1: f64,
    pub hs_norm: f64,
    pub rel_change_lambda_1: f64,
    pub rel_change_hs_norm: f64,
}

/// Verdict with the supporting spectral data and the refinement table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub lambda_1: f64,
    pub operator_norm: f64,
    pub hs_norm: f64,
    pub hs_from_eigenvalues: f64,
    pub n_modes_above_one: usize,
    pub mode_bound: usize,
    pub mode_count_bound_holds: bool,
    pub sufficient_condition: bool,
    pub lambda_min: f64,
    pub eigenvalues: Vec<f64>,
    pub tol: f64,
    pub basis: Option<BasisSummary>,
    pub gates: GateReport,
    pub converged: bool,
    pub convergence: Vec<RefinementRow>,
}

fn row(knob: &str, o: &KernelOptions, k: &MathurKernel, base: Option<&MathurKernel>) -> RefinementRow {
    let rel = |a: f64, b: f64| if b == 0.0 { (a - b).abs() } else { ((a - b) / b).abs() };
    let (dl, dh) = base.map_or((0.0, 0.0), |b| (rel(k.operator_norm(), b.operator_norm()), rel(k.hs_norm, b.hs_norm)));
    RefinementRow {
        knob: knob.to_string(),
        n_nodes: o.n_nodes,
        n_e: o.n_e,
        n_l: o.n_l,
        n_theta: o.grid.n_theta,
        orbit_nodes: o.grid.orbit_nodes,
        lambda_1: k.operator_norm(),
        hs_norm: k.hs_norm,
        rel_change_lambda_1: dl,
        rel_change_hs_norm: dh,
    }
}

/// The three refinements of `o`: radial nodes, basis degrees and angle resolution doubled.
pub fn refinements(o: &KernelOptions) -> Vec<(&'static str, KernelOptions)> {
    let radial = KernelOptions { n_nodes: 2 * o.n_nodes, ..*o };
    let basis = KernelOptions { n_e: 2 * o.n_e, n_l: 2 * o.n_l, ..*o };
    let mut theta = *o;
    theta.grid.n_theta *= 2;
    theta.grid.orbit_nodes *= 2;
    vec![("radial", radial), ("basis", basis), ("theta", theta)]
}

/// Runs the gates, assembles the kernel, classifies `λ₁` and, if requested,
/// repeats the assembly under each refinement.
pub fn stability_report(ss: &SteadyState, opts: &StabilityOptions) -> Result<StabilityReport> {
    stability_analysis(ss, opts).map(|(report, _)| report)
}

/// [`stability_report`] together with the kernel assembled at the base resolution.
pub fn stability_analysis(ss: &SteadyState, opts: &StabilityOptions) -> Result<(StabilityReport, MathurKernel)> {
    let gates = run_gates(ss)?;
    let base = kernel_k(ss, &opts.kernel)?;
    let mut convergence = vec![row("base", &opts.kernel, &base, None)];
    if opts.refine {
        for (name, o) in refinements(&opts.kernel) {
            let k = kernel_k(ss, &o)?;
            convergence.push(row(name, &o, &k, Some(&base)));
        }
    }
    let converged = convergence.iter().all(|r| r.rel_change_lambda_1 <= opts.refinement_tol && r.rel_change_hs_norm <= opts.refinement_tol);
    let (mut verdict, n_modes) = classify(&base.eigenvalues, opts.tol);
    if !converged {
        verdict = Verdict::Inconclusive;
    }
    let bound = mode_bound(base.hs_norm);
    let report = StabilityReport {
        verdict,
        lambda_1: base.operator_norm(),
        operator_norm: base.operator_norm(),
        hs_norm: base.hs_norm,
        hs_from_eigenvalues: base.hs_from_eigenvalues(),
        n_modes_above_one: n_modes,
        mode_bound: bound,
        mode_count_bound_holds: (base.count_above(1.0) as f64) < base.hs_norm * base.hs_norm,
        sufficient_condition: base.hs_norm < 1.0,
        lambda_min: base.lambda_min(),
        eigenvalues: base.eigenvalues.iter().take(10).copied().collect(),
        tol: opts.tol,
        basis: base.basis,
        gates,
        converged,
        convergence,
    };
    Ok((report, base))
}

/// Separable kernel `Σ_j λ_j u_j(r) u_j(s)` on `[0, 1]` with orthonormal
/// `u_j(r) = √2 sin(jπr)`, whose Mathur eigenvalues are exactly `λ_j`.
pub fn synthetic_kernel(eigenvalues: &[f64], n_nodes: usize) -> Result<MathurKernel> {
    let ev = eigenvalues.to_vec();
    MathurKernel::from_fn(0.0, 1.0, n_nodes, move |r, s| {
        ev.iter()
            .enumerate()
            .map(|(j, l)| {
                let k = (j + 1) as f64 * std::f64::consts::PI;
                2.0 * l * (k * r).sin() * (k * s).sin()
            })
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_kernel_has_single_eigenvalue() {
        let k = MathurKernel::from_fn(0.0, 1.0, 40, |r, s| r * s).unwrap();
        assert!((k.eigenvalues[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!(k.eigenvalues[1].abs() < 1e-12);
        assert!((k.hs_norm - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn classification_bands() {
        assert_eq!(classify(&[0.5], 1e-3), (Verdict::LinearlyStable, 0));
        assert_eq!(classify(&[1.0005], 1e-3), (Verdict::ZeroFrequencyMode, 0));
        assert_eq!(classify(&[2.0, 1.5, 0.3], 1e-3), (Verdict::Unstable, 2));
        assert_eq!(mode_bound(1.5), 2);
        assert_eq!(mode_bound(2.0), 3);
    }
}

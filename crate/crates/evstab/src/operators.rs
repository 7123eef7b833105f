//! Discrete transport operator, the lift from `ker T` to `ker B`, Gram matrices,
//! the orthogonal projection onto `ker B`, and residual checks of the operator
//! identities.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::equilibria::SteadyState;
use crate::error::{EvError, Result};
use crate::phase_space::{lambda_field, source_terms, Evaluator, PhaseFunction, PhaseGrid, PhasePoint, VelocityRule};
use crate::potential_orbits::OrbitSolver;
use crate::quad::{chebyshev_nodes, fejer_weights, legendre_values, ChebSeries};

/// Spectral calculus on `n` equispaced samples of a 1-periodic function.
struct Fourier {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fourier {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fourier { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    /// Multiplies mode `k` (signed, `|k| < n/2`) by `symbol(k)`; the mean and the
    /// Nyquist mode are discarded.
    fn multiplier(&self, f: &[f64], out: &mut [f64], symbol: impl Fn(f64) -> Complex64) {
        let n = self.n;
        let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf[0] = Complex64::new(0.0, 0.0);
        if n % 2 == 0 {
            buf[n / 2] = Complex64::new(0.0, 0.0);
        }
        for (k, c) in buf.iter_mut().enumerate().skip(1) {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            *c *= symbol(kk);
        }
        self.inverse.process(&mut buf);
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re / n as f64;
        }
    }

    fn derivative(&self, f: &[f64], out: &mut [f64]) {
        self.multiplier(f, out, |k| Complex64::new(0.0, 2.0 * PI * k));
    }

    /// Zero-mean antiderivative.
    fn antiderivative(&self, f: &[f64], out: &mut [f64]) {
        self.multiplier(f, out, |k| Complex64::new(0.0, -1.0 / (2.0 * PI * k)));
    }
}

/// `∂_θ f` per node by spectral differentiation.
pub fn theta_derivative(f: &PhaseFunction) -> Vec<f64> {
    let nt = f.grid().n_theta();
    let fourier = Fourier::new(nt);
    let mut out = vec![0.0; f.values.len()];
    out.par_chunks_mut(nt).zip(f.values.par_chunks(nt)).for_each(|(o, v)| fourier.derivative(v, o));
    out
}

/// `T f = −(1/T(E, L)) ∂_θ f`.
pub fn transport_apply(f: &PhaseFunction) -> PhaseFunction {
    let grid = f.grid().clone();
    let nt = grid.n_theta();
    let mut d = theta_derivative(f);
    for (chunk, node) in d.chunks_mut(nt).zip(&grid.nodes) {
        for v in chunk.iter_mut() {
            *v *= -1.0 / node.period;
        }
    }
    let mut out = PhaseFunction::from_values(&grid, d).expect("matching length");
    out.parity = if out.values.iter().all(|v| *v == 0.0) { out.parity } else { f.parity.flip() };
    out
}

/// Relative tolerance on the `θ`-mean accepted by [`transport_inverse`].
pub const IMAGE_TOLERANCE: f64 = 1e-10;

/// Inverse of `T` on functions with zero `θ`-mean per `(E, L)`, normalised to
/// zero `θ`-mean.
pub fn transport_inverse(f: &PhaseFunction) -> Result<PhaseFunction> {
    let grid = f.grid().clone();
    let nt = grid.n_theta();
    let scale = f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let means = f.theta_mean();
    if let Some((i, m)) = means.iter().enumerate().find(|(_, m)| m.abs() > IMAGE_TOLERANCE * scale.max(f64::MIN_POSITIVE)) {
        return Err(EvError::Input(format!("function is not in the range of T: theta-mean {m:e} at (E, L) node {i}")));
    }
    let fourier = Fourier::new(nt);
    let mut out = vec![0.0; f.values.len()];
    out.par_chunks_mut(nt).zip(f.values.par_chunks(nt)).zip(grid.nodes.par_iter()).for_each(|((o, v), node)| {
        fourier.antiderivative(v, o);
        for x in o.iter_mut() {
            *x *= -node.period;
        }
    });
    let mut g = PhaseFunction::from_values(&grid, out)?;
    if f.parity != crate::phase_space::Parity::Mixed {
        g.parity = f.parity.flip();
    }
    Ok(g)
}

/// Tensor Legendre polynomials on the bounding box `[E_lo, E₀] × [L₀, L_max]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Generators {
    pub n_e: usize,
    pub n_l: usize,
    pub e_lo: f64,
    pub e0: f64,
    pub l0: f64,
    pub l_max: f64,
}

impl Generators {
    pub fn new(ss: &SteadyState, n_e: usize, n_l: usize) -> Result<Self> {
        if n_e == 0 || n_l == 0 {
            return Err(EvError::Config("basis degrees must be positive".into()));
        }
        let solver = OrbitSolver::new(ss, 16)?;
        let mut e_lo = solver.e0;
        let n = 256;
        for i in 0..n {
            let l = solver.l0 + (solver.l_max - solver.l0) * (i as f64 + 0.5) / n as f64;
            e_lo = e_lo.min(solver.e_min(l)?.1);
        }
        if solver.l0 > 0.0 || ss.eos.l0 == 0.0 {
            if let Ok((_, e)) = solver.e_min(solver.l0.max(1e-12)) {
                e_lo = e_lo.min(e);
            }
        }
        Ok(Generators { n_e, n_l, e_lo, e0: solver.e0, l0: solver.l0, l_max: solver.l_max })
    }

    pub fn dim(&self) -> usize {
        self.n_e * self.n_l
    }

    /// `P_a(ξ_E) P_b(ξ_L)` for index `a·n_l + b`.
    pub fn values(&self, e: f64, l: f64) -> Vec<f64> {
        let xe = 2.0 * (e - self.e_lo) / (self.e0 - self.e_lo) - 1.0;
        let xl = 2.0 * (l - self.l0) / (self.l_max - self.l0) - 1.0;
        let pe = legendre_values(self.n_e, xe);
        let pl = legendre_values(self.n_l, xl);
        let mut out = Vec::with_capacity(self.dim());
        for a in &pe {
            for b in &pl {
                out.push(a * b);
            }
        }
        out
    }
}

/// Cholesky factorisation with diagonal pivoting and truncation.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    pub dim: usize,
    pub perm: Vec<usize>,
    pub rank: usize,
    /// Lower-triangular factor of the retained block in pivot order.
    pub l: DMatrix<f64>,
    /// Pivots in the order they were taken.
    pub pivots: Vec<f64>,
    pub drop_tolerance: f64,
}

impl PivotedCholesky {
    /// Factors `g`, dropping directions whose pivot falls below `rel_tol·trace/dim`.
    pub fn new(g: &DMatrix<f64>, rel_tol: f64) -> Result<Self> {
        let n = g.nrows();
        if n == 0 || g.ncols() != n {
            return Err(EvError::Numerical("Gram matrix must be square and non-empty".into()));
        }
        let trace: f64 = (0..n).map(|i| g[(i, i)]).sum();
        let tol = rel_tol * trace / n as f64;
        let mut a = g.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut l = DMatrix::zeros(n, n);
        let mut pivots = Vec::new();
        let mut rank = 0;
        for k in 0..n {
            let (p, d) = (k..n).map(|i| (i, a[(i, i)])).fold((k, f64::NEG_INFINITY), |m, x| if x.1 > m.1 { x } else { m });
            if !(d > tol) {
                break;
            }
            if p != k {
                a.swap_rows(k, p);
                a.swap_columns(k, p);
                l.swap_rows(k, p);
                perm.swap(k, p);
            }
            let s = d.sqrt();
            l[(k, k)] = s;
            for i in k + 1..n {
                l[(i, k)] = a[(i, k)] / s;
            }
            for j in k + 1..n {
                for i in j..n {
                    let v = a[(i, j)] - l[(i, k)] * l[(j, k)];
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
            pivots.push(d);
            rank += 1;
        }
        if rank == 0 {
            return Err(EvError::Numerical("Gram matrix is numerically zero; lower the basis degree".into()));
        }
        let l = l.view((0, 0), (rank, rank)).into_owned();
        Ok(PivotedCholesky { dim: n, perm, rank, l, pivots, drop_tolerance: tol })
    }

    pub fn dropped(&self) -> usize {
        self.dim - self.rank
    }

    /// Ratio of the largest to the smallest retained pivot.
    pub fn condition_estimate(&self) -> f64 {
        self.pivots[0] / self.pivots[self.rank - 1]
    }

    /// `L⁻¹ (P b)` restricted to the retained directions.
    pub fn whiten(&self, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = (0..self.rank).map(|k| b[self.perm[k]]).collect();
        for i in 0..self.rank {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solves `G c = b` on the retained subspace; dropped coefficients are zero.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = self.whiten(b);
        for i in (0..self.rank).rev() {
            let mut s = y[i];
            for k in i + 1..self.rank {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        let mut c = vec![0.0; self.dim];
        for k in 0..self.rank {
            c[self.perm[k]] = y[k];
        }
        c
    }
}

/// Resolution of the kernel basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisOptions {
    pub n_e: usize,
    pub n_l: usize,
    /// Chebyshev nodes for the radial profiles.
    pub n_radial: usize,
    pub n_velocity: usize,
    pub drop_tolerance: f64,
    /// Also compute the `⟨g_i, g_j⟩` block by radial quadrature and report the
    /// defect of the volume-element identity.
    pub volume_check: bool,
}

impl Default for BasisOptions {
    fn default() -> Self {
        BasisOptions { n_e: 8, n_l: 8, n_radial: 320, n_velocity: 40, drop_tolerance: 1e-12, volume_check: false }
    }
}

/// Radial description of the lifted generators `k_i = g_i + |φ′|E e^{−λ₀−μ₀} H_i(R)`
/// with `g_i = |φ′| P_i(E, L)` and `H_i(r) = 4π ∫_r^{R_max} e^{3λ₀+μ₀} p_{g_i} s ds`.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub generators: Generators,
    pub opts: BasisOptions,
    pub rmin: f64,
    pub rmax: f64,
    pub h: Vec<ChebSeries>,
    /// `b_i(r) = ⟨k_i, f_r⟩_H = 4π ∫_{R_min}^r σ² ρ_{k_i} dσ`.
    pub b: Vec<ChebSeries>,
    /// `D(r) = ‖f_r‖²_H = 4π ∫_{R_min}^r σ² e^{−λ₀−2μ₀} (∫|φ′|E² dv) dσ`.
    pub d: ChebSeries,
    /// Pressure moments `p_{k_i}` of the lifted generators.
    pub pk: Vec<ChebSeries>,
    pub gram: DMatrix<f64>,
    pub factor: PivotedCholesky,
    /// Largest relative difference between the `(θ, E, L)` and the radial
    /// evaluation of `⟨g_i, g_j⟩_H`, when requested.
    pub volume_defect: Option<f64>,
}

/// Per-radius velocity integrals used by the basis.
struct RadialSample {
    rho: Vec<f64>,
    p: Vec<f64>,
    q2: f64,
    /// `∫ |φ′| w² dv`.
    w2: f64,
    gg: Option<DMatrix<f64>>,
}

fn radial_sample(ss: &SteadyState, gens: &Generators, rule: &VelocityRule, r: f64, with_gram: bool) -> RadialSample {
    let dim = gens.dim();
    let mut rho = vec![0.0; dim];
    let mut p = vec![0.0; dim];
    let mut q2 = 0.0;
    let mut w2 = 0.0;
    let pts = rule.points(ss, r);
    let mut rows = if with_gram { Some(DMatrix::zeros(pts.len(), dim)) } else { None };
    for (k, pt) in pts.iter().enumerate() {
        let c = 2.0 * pt.weight * ss.eos.abs_phi_prime_unchecked(ss.e0_cut, pt.e, pt.l);
        if c == 0.0 {
            continue;
        }
        let poly = gens.values(pt.e, pt.l);
        let (ce, cp) = (c * pt.eps, c * pt.w * pt.w / pt.eps);
        for i in 0..dim {
            rho[i] += ce * poly[i];
            p[i] += cp * poly[i];
        }
        q2 += c * pt.eps * pt.eps;
        w2 += c * pt.w * pt.w;
        if let Some(m) = rows.as_mut() {
            let s = c.sqrt();
            for i in 0..dim {
                m[(k, i)] = s * poly[i];
            }
        }
    }
    let e2mu = (2.0 * ss.mu0_at(r)).exp();
    RadialSample { rho, p, q2: q2 * e2mu, w2, gg: rows.map(|m| m.transpose() * m) }
}

/// `c − S(r)` as a series, for a series `S` and constant `c`.
fn constant_minus(s: &ChebSeries, c: f64) -> ChebSeries {
    let mut out = s.clone();
    for v in out.coeffs.iter_mut() {
        *v = -*v;
    }
    out.coeffs[0] += c;
    out
}

impl KernelBasis {
    /// Assembles the basis. The `⟨g_i, g_j⟩_H` block is integrated over the
    /// `(E, L)` nodes of `grid` with the period function as weight.
    pub fn build(ss: &SteadyState, grid: &PhaseGrid, opts: &BasisOptions) -> Result<KernelBasis> {
        let sup = ss.support()?;
        let gens = Generators::new(ss, opts.n_e, opts.n_l)?;
        let dim = gens.dim();
        let rule = VelocityRule::new(opts.n_velocity, opts.n_velocity);
        let nodes = chebyshev_nodes(opts.n_radial, sup.rmin, sup.rmax);
        let fw = fejer_weights(opts.n_radial, sup.rmin, sup.rmax);
        let samples: Vec<RadialSample> = nodes.par_iter().map(|&r| radial_sample(ss, &gens, &rule, r, opts.volume_check)).collect();
        let metric: Vec<(f64, f64)> = nodes.iter().map(|&r| (ss.lambda0_at(r), ss.mu0_at(r))).collect();

        let mut h = Vec::with_capacity(dim);
        for i in 0..dim {
            let vals: Vec<f64> = nodes.iter().zip(&samples).zip(&metric).map(|((&r, s), &(la, mu))| 4.0 * PI * (3.0 * la + mu).exp() * s.p[i] * r).collect();
            let anti = ChebSeries::from_values(sup.rmin, sup.rmax, &vals).antiderivative();
            let total = anti.eval(sup.rmax);
            h.push(constant_minus(&anti, total));
        }
        let h_at: Vec<Vec<f64>> = h.iter().map(|s| nodes.iter().map(|&r| s.eval(r)).collect()).collect();

        let lift_factor: Vec<f64> = metric.iter().zip(&samples).map(|(&(la, mu), s)| (-la - 2.0 * mu).exp() * s.q2).collect();
        let mut b = Vec::with_capacity(dim);
        for i in 0..dim {
            let vals: Vec<f64> = (0..nodes.len()).map(|m| 4.0 * PI * nodes[m] * nodes[m] * (samples[m].rho[i] + lift_factor[m] * h_at[i][m])).collect();
            b.push(ChebSeries::from_values(sup.rmin, sup.rmax, &vals).antiderivative());
        }
        let dvals: Vec<f64> = (0..nodes.len()).map(|m| 4.0 * PI * nodes[m] * nodes[m] * lift_factor[m]).collect();
        let d = ChebSeries::from_values(sup.rmin, sup.rmax, &dvals).antiderivative();
        let pk: Vec<ChebSeries> = (0..dim)
            .map(|i| {
                let vals: Vec<f64> = (0..nodes.len()).map(|m| samples[m].p[i] + (-metric[m].0).exp() * h_at[i][m] * samples[m].w2).collect();
                ChebSeries::from_values(sup.rmin, sup.rmax, &vals)
            })
            .collect();

        let gg = el_gram(grid, &gens);
        let mut gram = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                let mut v = gg[(i, j)];
                for m in 0..nodes.len() {
                    let r2 = 4.0 * PI * nodes[m] * nodes[m] * fw[m];
                    v += r2 * (h_at[j][m] * samples[m].rho[i] + h_at[i][m] * samples[m].rho[j]);
                    v += r2 * lift_factor[m] * h_at[i][m] * h_at[j][m];
                }
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let volume_defect = if opts.volume_check {
            let mut radial = DMatrix::zeros(dim, dim);
            for m in 0..nodes.len() {
                let c = 4.0 * PI * nodes[m] * nodes[m] * metric[m].0.exp() * fw[m];
                radial += samples[m].gg.as_ref().expect("requested") * c;
            }
            let scale = (0..dim).map(|i| gg[(i, i)]).fold(0.0f64, f64::max);
            Some((&radial - &gg).abs().max() / scale)
        } else {
            None
        };
        let factor = PivotedCholesky::new(&gram, opts.drop_tolerance)?;
        Ok(KernelBasis { generators: gens, opts: *opts, rmin: sup.rmin, rmax: sup.rmax, h, b, d, pk, gram, factor, volume_defect })
    }

    pub fn dim(&self) -> usize {
        self.generators.dim()
    }

    /// `(b_i(r))_i`.
    pub fn b_vector(&self, r: f64) -> Vec<f64> {
        let x = r.clamp(self.rmin, self.rmax);
        self.b.iter().map(|s| s.eval(x)).collect()
    }

    /// `D(r)`.
    pub fn d_value(&self, r: f64) -> f64 {
        self.d.eval(r.clamp(self.rmin, self.rmax))
    }

    /// `L⁻¹ P b(r)`, so that `b(r)ᵀ G⁻¹ b(s) = z(r)·z(s)`.
    pub fn z_vector(&self, r: f64) -> Vec<f64> {
        self.factor.whiten(&self.b_vector(r))
    }

    /// Lifted generator `i` as a closed-form phase-space function.
    pub fn element_evaluator(&self, ss: &Arc<SteadyState>, i: usize) -> impl Fn(&PhasePoint) -> f64 + Send + Sync + 'static {
        let gens = self.generators;
        let h = self.h[i].clone();
        let ss = ss.clone();
        let (rmin, rmax) = (self.rmin, self.rmax);
        move |p: &PhasePoint| {
            if p.abs_dphi == 0.0 {
                return 0.0;
            }
            let g = p.abs_dphi * gens.values(p.e, p.l)[i];
            let hr = if p.r >= rmax { 0.0 } else { h.eval(p.r.max(rmin)) };
            g + p.abs_dphi * p.e * (-ss.lambda0_at(p.r) - ss.mu0_at(p.r)).exp() * hr
        }
    }

    /// Samples all lifted generators on `grid` and assembles their grid Gram matrix.
    pub fn lift_on_grid(&self, ss: &SteadyState, grid: &Arc<PhaseGrid>) -> Result<GridBasis> {
        let dim = self.dim();
        let nt = grid.n_theta();
        let shared = Arc::new(ss.clone());
        let per_node: Vec<Vec<f64>> = grid
            .nodes
            .par_iter()
            .enumerate()
            .map(|(n, node)| {
                let poly = self.generators.values(node.e, node.l);
                let mut out = vec![0.0; dim * nt];
                if node.abs_dphi == 0.0 {
                    return out;
                }
                for a in 0..nt {
                    let r = grid.radius[n * nt + a];
                    let lift = node.abs_dphi * node.e * (-ss.lambda0_at(r) - ss.mu0_at(r)).exp();
                    let inside = r < self.rmax;
                    let basis = self.h[0].basis(r.clamp(self.rmin, self.rmax));
                    for i in 0..dim {
                        let h = if inside { self.h[i].coeffs.iter().zip(&basis).map(|(c, t)| c * t).sum::<f64>() } else { 0.0 };
                        out[i * nt + a] = node.abs_dphi * poly[i] + lift * h;
                    }
                }
                out
            })
            .collect();
        let elements = (0..dim)
            .map(|i| {
                let values: Vec<f64> = per_node.iter().flat_map(|v| v[i * nt..(i + 1) * nt].iter().copied()).collect();
                PhaseFunction::from_values_with_exact(grid, values, self.element_evaluator(&shared, i))
            })
            .collect::<Result<Vec<_>>>()?;
        GridBasis::new(elements, self.opts.drop_tolerance)
    }
}

/// `4π² ∬ T |φ′| P_i P_j dE dL` on the grid nodes.
fn el_gram(grid: &PhaseGrid, gens: &Generators) -> DMatrix<f64> {
    let dim = gens.dim();
    let mut rows = DMatrix::zeros(grid.nodes.len(), dim);
    for (k, n) in grid.nodes.iter().enumerate() {
        let s = (4.0 * PI * PI * n.weight * n.period * n.abs_dphi).sqrt();
        for (i, v) in gens.values(n.e, n.l).into_iter().enumerate() {
            rows[(k, i)] = s * v;
        }
    }
    rows.transpose() * rows
}

/// Kernel elements sampled on a grid, with the Gram matrix in the grid inner product.
#[derive(Debug, Clone)]
pub struct GridBasis {
    pub elements: Vec<PhaseFunction>,
    pub gram: DMatrix<f64>,
    pub factor: PivotedCholesky,
}

impl GridBasis {
    pub fn new(elements: Vec<PhaseFunction>, drop_tolerance: f64) -> Result<Self> {
        let n = elements.len();
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = elements[i].inner(&elements[j])?;
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let factor = PivotedCholesky::new(&gram, drop_tolerance)?;
        Ok(GridBasis { elements, gram, factor })
    }

    /// Coefficients of `Π f` in the element basis.
    pub fn project_coefficients(&self, f: &PhaseFunction) -> Result<Vec<f64>> {
        let b: Vec<f64> = self.elements.iter().map(|k| k.inner(f)).collect::<Result<_>>()?;
        Ok(self.factor.solve(&b))
    }

    /// `Π f`, the orthogonal projection onto the span of the elements.
    pub fn project(&self, f: &PhaseFunction) -> Result<PhaseFunction> {
        let c = self.project_coefficients(f)?;
        let mut values = vec![0.0; f.values.len()];
        for (ci, k) in c.iter().zip(&self.elements) {
            if *ci != 0.0 {
                for (v, x) in values.iter_mut().zip(&k.values) {
                    *v += ci * x;
                }
            }
        }
        PhaseFunction::from_values(f.grid(), values)
    }
}

/// Radial velocity moments of a closed-form function, as Chebyshev series.
fn moment_series(f: &PhaseFunction, ss: &SteadyState, n_r: usize, rule: &VelocityRule) -> Result<[ChebSeries; 4]> {
    let sup = ss.support()?;
    let nodes = chebyshev_nodes(n_r, sup.rmin, sup.rmax);
    let m = source_terms(f, ss, &nodes, rule)?;
    let s = |v: &[f64]| ChebSeries::from_values(sup.rmin, sup.rmax, v);
    Ok([s(&m.rho), s(&m.p), s(&m.j), s(&m.q)])
}

/// Residual of the kernel equation `(1/T)∂_θ k + 4πR|φ′|e^{2μ₀+λ₀}W p_k(R) = 0`,
/// normalised by `sup |∂_θ k|/T`. Requires an even function; `p_k` is computed
/// from the closed form of `k` when it has one.
pub fn check_kernel_b(ss: &SteadyState, k: &PhaseFunction, n_r: usize, rule: &VelocityRule) -> Result<f64> {
    if k.parity != crate::phase_space::Parity::Even {
        return Err(EvError::Input("kernel elements must be even in w".into()));
    }
    let [_, p, _, _] = moment_series(k, ss, n_r, rule)?;
    check_kernel_b_with(ss, k, &p)
}

/// [`check_kernel_b`] with a precomputed pressure moment `p_k`.
pub fn check_kernel_b_with(ss: &SteadyState, k: &PhaseFunction, p: &ChebSeries) -> Result<f64> {
    let grid = k.grid().clone();
    let nt = grid.n_theta();
    let sup = ss.support()?;
    let d = theta_derivative(k);
    let rows: Vec<(f64, f64)> = (0..grid.nodes.len())
        .into_par_iter()
        .map(|n| {
            let node = &grid.nodes[n];
            let (mut res, mut scale) = (0.0f64, 0.0f64);
            for a in 0..nt {
                let idx = n * nt + a;
                let (r, w) = (grid.radius[idx], grid.velocity[idx]);
                let pk = if r <= sup.rmin || r >= sup.rmax { 0.0 } else { p.eval(r) };
                let src = 4.0 * PI * r * node.abs_dphi * (2.0 * ss.mu0_at(r) + ss.lambda0_at(r)).exp() * w * pk;
                let lhs = d[idx] / node.period;
                res = res.max((lhs + src).abs());
                scale = scale.max(lhs.abs());
            }
            (res, scale)
        })
        .collect();
    let res = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let scale = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(res);
    }
    Ok(res / scale)
}

/// Closed form of `T f = −e^{μ₀−λ₀}(w/ε ∂_r f + (L/(r³ε) − μ₀′ε) ∂_w f)`, by a
/// fourth-order difference along the characteristic flow at fixed `(E, L)`.
pub fn transport_closure(ss: Arc<SteadyState>, f: Evaluator) -> Evaluator {
    let (rmin, rmax) = ss.support().map(|s| (s.rmin, s.rmax)).unwrap_or((0.0, 1.0));
    let width = rmax - rmin;
    Arc::new(move |p: &PhasePoint| {
        let eps = (1.0 + p.w * p.w + p.l / (p.r * p.r)).sqrt();
        let (mu_prime, _) = ss.mu0_derivatives(p.r);
        let g = (ss.mu0_at(p.r) - ss.lambda0_at(p.r)).exp();
        let dr = g * p.w / eps;
        let dw = g * (p.l / (p.r * p.r * p.r * eps) - mu_prime * eps);
        let w_scale = ((p.e * (-ss.mu0_at(p.r)).exp()).powi(2) - 1.0).max(0.0).sqrt().max(1e-3);
        let rate = dr.abs() / width + dw.abs() / w_scale;
        if rate == 0.0 {
            return 0.0;
        }
        let h = 1e-3 / rate;
        let at = |s: f64| f(&PhasePoint { r: p.r + s * dr, w: p.w + s * dw, ..*p });
        -(at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
    })
}

/// [`transport_apply`] with the closed form of `T f` attached when `f` has one.
pub fn transport_apply_exact(ss: &SteadyState, f: &PhaseFunction) -> PhaseFunction {
    let t = transport_apply(f);
    match f.exact() {
        Some(ev) => {
            let parity = t.parity;
            let mut out = PhaseFunction::from_values_with_exact(f.grid(), t.values, { let c = transport_closure(Arc::new(ss.clone()), ev.clone()); move |q: &PhasePoint| c(q) }).expect("matching length");
            out.parity = parity;
            out
        }
        None => t,
    }
}

/// `B f = T f − 4πR|φ′|e^{2μ₀+λ₀}(W p_f(R) − (W²/ε) j_f(R))` on the grid, with a
/// closed form attached when `f` has one.
pub fn apply_b(ss: &SteadyState, f: &PhaseFunction, n_r: usize, rule: &VelocityRule) -> Result<PhaseFunction> {
    let grid = f.grid().clone();
    let nt = grid.n_theta();
    let sup = ss.support()?;
    let [_, p, j, _] = moment_series(f, ss, n_r, rule)?;
    let shared = Arc::new(ss.clone());
    let coupling = {
        let ss = shared.clone();
        move |r: f64, w: f64, l: f64, abs_dphi: f64| {
            if r <= sup.rmin || r >= sup.rmax || abs_dphi == 0.0 {
                return 0.0;
            }
            let eps = (1.0 + w * w + l / (r * r)).sqrt();
            4.0 * PI * r * abs_dphi * (2.0 * ss.mu0_at(r) + ss.lambda0_at(r)).exp() * (w * p.eval(r) - w * w / eps * j.eval(r))
        }
    };
    let t = transport_apply(f);
    let parity = t.parity;
    let mut values = t.values;
    for (n, node) in grid.nodes.iter().enumerate() {
        for a in 0..nt {
            let idx = n * nt + a;
            values[idx] -= coupling(grid.radius[idx], grid.velocity[idx], node.l, node.abs_dphi);
        }
    }
    let mut out = match f.exact() {
        Some(ev) => {
            let tf = transport_closure(shared, ev.clone());
            PhaseFunction::from_values_with_exact(&grid, values, move |q: &PhasePoint| tf(q) - coupling(q.r, q.w, q.l, q.abs_dphi))?
        }
        None => PhaseFunction::from_values(&grid, values)?,
    };
    if out.parity == crate::phase_space::Parity::Mixed && f.parity != crate::phase_space::Parity::Mixed {
        out.parity = parity;
    }
    Ok(out)
}

/// Per-node defect of the `ker(B)^⊥` condition
/// `∫₀¹ (f + |φ′| e^{2μ₀(R)} λ_f(R) W²/E) dθ`, normalised by `sup |f|`.
pub fn kernel_b_orthogonality_defect(ss: &SteadyState, f: &PhaseFunction, n_r: usize, rule: &VelocityRule) -> Result<Vec<f64>> {
    let grid = f.grid().clone();
    let nt = grid.n_theta();
    let lam = lambda_field(f, ss, n_r, rule)?;
    let scale = f.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    Ok(grid
        .nodes
        .iter()
        .enumerate()
        .map(|(n, node)| {
            let mut s = 0.0;
            for a in 0..nt {
                let idx = n * nt + a;
                let (r, w) = (grid.radius[idx], grid.velocity[idx]);
                s += f.values[idx] + node.abs_dphi * (2.0 * ss.mu0_at(r)).exp() * lam.eval(ss, r) * w * w / node.e;
            }
            s / nt as f64 / scale
        })
        .collect())
}

/// Relative residuals of the two `λ` identities for a test function `f`:
/// `λ_{Bf} = −4πr e^{λ₀+μ₀} j_f` and `λ_{e^{μ₀+λ₀}Tf} = −4πr e^{2μ₀+2λ₀} j_f`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaIdentityResiduals {
    pub b_identity: f64,
    pub t_identity: f64,
}

/// Evaluates both identities at `r_nodes`, each normalised by the sup of its right-hand side.
pub fn lambda_identity_residuals(ss: &SteadyState, f: &PhaseFunction, r_nodes: &[f64], n_r: usize, rule: &VelocityRule) -> Result<LambdaIdentityResiduals> {
    let sup = ss.support()?;
    let [_, _, j, _] = moment_series(f, ss, n_r, rule)?;
    let jf = |r: f64| if r <= sup.rmin || r >= sup.rmax { 0.0 } else { j.eval(r) };
    let rel = |lhs: &dyn Fn(f64) -> f64, rhs: &dyn Fn(f64) -> f64| {
        let scale = r_nodes.iter().map(|&r| rhs(r).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        r_nodes.iter().map(|&r| (lhs(r) - rhs(r)).abs()).fold(0.0, f64::max) / scale
    };

    let bf = apply_b(ss, f, n_r, rule)?;
    let lam_b = lambda_field(&bf, ss, n_r, rule)?;
    let b_identity = rel(&|r| lam_b.eval(ss, r), &|r| -4.0 * PI * r * (ss.lambda0_at(r) + ss.mu0_at(r)).exp() * jf(r));

    let grid = f.grid().clone();
    let tf = transport_apply_exact(ss, f);
    let factor: Vec<f64> = grid.radius.iter().map(|r| (ss.mu0_at(*r) + ss.lambda0_at(*r)).exp()).collect();
    let values: Vec<f64> = tf.values.iter().zip(&factor).map(|(v, c)| v * c).collect();
    let tf = match tf.exact() {
        Some(ev) => {
            let (ev, shared) = (ev.clone(), Arc::new(ss.clone()));
            PhaseFunction::from_values_with_exact(&grid, values, move |q: &PhasePoint| (shared.mu0_at(q.r) + shared.lambda0_at(q.r)).exp() * ev(q))?
        }
        None => PhaseFunction::from_values(&grid, values)?,
    };
    let lam_t = lambda_field(&tf, ss, n_r, rule)?;
    let t_identity = rel(&|r| lam_t.eval(ss, r), &|r| -4.0 * PI * r * (2.0 * ss.lambda0_at(r) + 2.0 * ss.mu0_at(r)).exp() * jf(r));
    Ok(LambdaIdentityResiduals { b_identity, t_identity })
}

/// Converts a coefficient vector into a dense column.
pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_derivative_and_antiderivative() {
        let n = 32;
        let f = Fourier::new(n);
        let s: Vec<f64> = (0..n).map(|j| (2.0 * PI * 3.0 * j as f64 / n as f64).sin()).collect();
        let mut d = vec![0.0; n];
        f.derivative(&s, &mut d);
        for (j, v) in d.iter().enumerate() {
            assert!((v - 6.0 * PI * (6.0 * PI * j as f64 / n as f64).cos()).abs() < 1e-11);
        }
        let mut back = vec![0.0; n];
        f.antiderivative(&d, &mut back);
        for (a, b) in back.iter().zip(&s) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn pivoted_cholesky_solves_and_drops() {
        let g = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 2.0, 2.0, 3.0, 2.0, 2.0, 2.0, 2.0]);
        let c = PivotedCholesky::new(&g, 1e-12).unwrap();
        assert_eq!(c.rank, 3);
        let x = c.solve(&[1.0, 2.0, 3.0]);
        let r = &g * DVector::from_vec(x) - DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(r.norm() < 1e-12);
        let v = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let singular = &v * v.transpose();
        let c = PivotedCholesky::new(&singular, 1e-12).unwrap();
        assert_eq!(c.rank, 1);
        assert_eq!(c.dropped(), 2);
    }
}

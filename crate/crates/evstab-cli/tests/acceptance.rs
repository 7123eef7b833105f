//! End-to-end acceptance checks. Each check prints one `PASS`/`FAIL` line; the
//! process fails if any check fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use evstab::eos::EquationOfState;
use evstab::equilibria::{
    schwarzschild_critical_radii, schwarzschild_level_radii, schwarzschild_potential, GridPolicy, ShellParameters, SteadyState,
};
use evstab::mathur::{classify, kernel_k, run_gates, stability_report, synthetic_kernel, KernelOptions, MathurKernel, StabilityOptions, Verdict, VERDICT_TOLERANCE};
use evstab::operators::{check_kernel_b_with, transport_apply, transport_inverse, BasisOptions, KernelBasis};
use evstab::phase_space::{hlr_identity_residual, GridOptions, PhaseFunction, PhaseGrid};
use evstab::quad::ChebSeries;
use evstab_cli::figure::figure_data;
use evstab_cli::orbits::sample_orbits;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn shell(delta: f64) -> SteadyState {
    let p = ShellParameters::new(1.0, 15.0, 0.98, None).unwrap();
    let eos = EquationOfState::polytrope(1.0, 0.0, 15.0, delta).unwrap();
    SteadyState::build_shell(&p, &eos, delta, &GridPolicy::default()).unwrap()
}

fn reference_shell() -> &'static SteadyState {
    static SS: OnceLock<SteadyState> = OnceLock::new();
    SS.get_or_init(|| shell(1e-3))
}

fn reference_kernel() -> &'static MathurKernel {
    static K: OnceLock<MathurKernel> = OnceLock::new();
    K.get_or_init(|| kernel_k(reference_shell(), &KernelOptions::default()).unwrap())
}

/// Roots of `M r² − L r + 3ML = 0`.
fn quadratic_roots(m: f64, ang: f64) -> (f64, f64) {
    let disc = (ang * ang - 12.0 * m * m * ang).sqrt();
    ((ang - disc) / (2.0 * m), (ang + disc) / (2.0 * m))
}

fn schwarzschild_geometry() -> Check {
    let mut worst = 0.0f64;
    for i in 1..=50 {
        let ang = 12.0 + 28.0 * i as f64 / 50.0;
        let (s, rl) = schwarzschild_critical_radii(1.0, ang).map_err(|e| e.to_string())?;
        let (qs, qr) = quadratic_roots(1.0, ang);
        worst = worst.max((s - qs).abs()).max((rl - qr).abs());
        if ang > 16.0 {
            ensure(schwarzschild_potential(1.0, ang, s) > 1.0, format!("Psi(s_L) <= 1 at L = {ang}"))?;
        }
    }
    ensure(worst < 1e-10, format!("root error {worst:e}"))?;
    let mut count = 0;
    for i in 0..10 {
        for j in 0..10 {
            let ang = 12.0 + 28.0 * (i as f64 + 0.5) / 10.0;
            let (s, rl) = schwarzschild_critical_radii(1.0, ang).unwrap();
            let (lo, hi) = (schwarzschild_potential(1.0, ang, rl), schwarzschild_potential(1.0, ang, s).min(1.0));
            let e = lo + (hi - lo) * (j as f64 + 0.5) / 10.0;
            let (r0, rm, rp) = schwarzschild_level_radii(1.0, ang, e).map_err(|e| e.to_string())?;
            ensure(2.0 < r0 && r0 < s && s < rm && rm < rl && rl < rp && rm > 4.0, format!("ordering fails at (L, E) = ({ang}, {e})"))?;
            count += 1;
        }
    }
    Ok(format!("max root error {worst:.1e}, ordering holds on {count} (L, E) points"))
}

fn figure_markers() -> Check {
    let p = ShellParameters::new(1.0, 15.0, 0.98, None).map_err(|e| e.to_string())?;
    let fig = figure_data(&p, &[(18.0, 0.97)], 400).map_err(|e| e.to_string())?;
    let names: Vec<&str> = fig.markers.iter().map(|m| m.name.as_str()).collect();
    ensure(names == ["r0_0", "r0", "r0_plus_eta0", "R0_min", "r_L0", "R0_max"], format!("marker names {names:?}"))?;
    ensure(fig.markers.windows(2).all(|w| w[0].r < w[1].r), "markers not increasing in r")?;
    for m in &fig.markers {
        ensure((0.95..=1.03).contains(&m.psi), format!("Psi at {} = {}", m.name, m.psi))?;
    }
    let grey = &fig.curves[1];
    ensure(grey.l == 18.0 && grey.e == 0.97, "grey curve parameters")?;
    let [r0, rm, rp] = grey.level_radii;
    ensure(r0 < rm && rm < rp, "grey curve level radii")?;
    let r: Vec<String> = fig.markers.iter().map(|m| format!("{:.4}", m.r)).collect();
    Ok(format!("markers at r = [{}]", r.join(", ")))
}

fn equilibrium_residuals() -> Check {
    let pol = GridPolicy::default();
    let cases = [
        ("singfree polytrope", SteadyState::solve_singularity_free(&EquationOfState::polytrope(1.0, 0.0, 0.0, 1.0).unwrap(), 0.1, &pol)),
        ("king", SteadyState::solve_singularity_free(&EquationOfState::king(0.0, 0.0, 1.0).unwrap(), 0.1, &pol)),
        ("shell", Ok(reference_shell().clone())),
    ];
    let mut out = Vec::new();
    for (name, ss) in cases {
        let ss = ss.map_err(|e| format!("{name}: {e}"))?;
        let r = ss.equilibrium_residuals(256).map_err(|e| e.to_string())?;
        let hlr = hlr_identity_residual(&ss).map_err(|e| e.to_string())?.residual;
        let c = ss.diagnostics().map_err(|e| e.to_string())?.max_2m_over_r;
        let worst = r.tov.max(r.field_lambda).max(r.field_mu).max(hlr);
        ensure(worst < 1e-6, format!("{name}: residuals {r:?}, hlr {hlr:e}"))?;
        ensure(c < 8.0 / 9.0, format!("{name}: max 2m/r = {c}"))?;
        out.push(format!("{name} {worst:.1e} (2m/r {c:.3})"));
    }
    Ok(out.join(", "))
}

fn small_amplitude_scaling() -> Check {
    let deltas = [1e-3, 5e-4, 2.5e-4];
    let mut dmu = Vec::new();
    let mut hs = Vec::new();
    for &d in &deltas {
        let ss = if d == 1e-3 { reference_shell().clone() } else { shell(d) };
        let sup = (0..4000)
            .map(|i| 2.2 + (100.0 - 2.2) * i as f64 / 3999.0)
            .map(|r| (ss.mu0_at(r) - 0.5 * (1.0 - 2.0 / r).ln()).abs())
            .fold(0.0f64, f64::max);
        dmu.push(sup);
        let k = if d == 1e-3 { reference_kernel().clone() } else { kernel_k(&ss, &KernelOptions::default()).map_err(|e| e.to_string())? };
        hs.push(k.hs_norm / d);
    }
    for w in dmu.windows(2) {
        let ratio = w[0] / w[1];
        ensure((ratio / 2.0 - 1.0).abs() < 0.2, format!("sup|mu - mu0| ratio {ratio}"))?;
    }
    let (lo, hi) = (hs.iter().copied().fold(f64::INFINITY, f64::min), hs.iter().copied().fold(0.0, f64::max));
    ensure(hi / lo - 1.0 < 0.1, format!("||K||/delta spread: {hs:?}"))?;
    Ok(format!("sup|mu - mu0| = {:?}, ||K||/delta = {hs:.3?}", dmu.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()))
}

fn reference_verdict() -> Check {
    let rep = stability_report(reference_shell(), &StabilityOptions::default()).map_err(|e| e.to_string())?;
    ensure(rep.gates.single_well, "single-well gate")?;
    ensure(rep.hs_norm < 1.0 && rep.lambda_1 < 1.0, format!("||K|| = {}, lambda_1 = {}", rep.hs_norm, rep.lambda_1))?;
    ensure(rep.verdict == Verdict::LinearlyStable, format!("verdict {:?}", rep.verdict))?;
    let worst = rep.convergence.iter().map(|r| r.rel_change_lambda_1.max(r.rel_change_hs_norm)).fold(0.0f64, f64::max);
    ensure(worst < 1e-3, format!("refinement change {worst:e}"))?;
    Ok(format!("lambda_1 = {:.6}, ||K|| = {:.6}, refinement change {worst:.1e}", rep.lambda_1, rep.hs_norm))
}

/// Half period from the characteristic system, integrated by classical RK4
/// from `(r₋, 0)` until the radial momentum changes sign.
fn characteristic_period(ss: &SteadyState, ang: f64, r_minus: f64, t_guess: f64) -> f64 {
    let rhs = |s: [f64; 2]| {
        let (r, w) = (s[0], s[1]);
        let eps = (1.0 + w * w + ang / (r * r)).sqrt();
        let g = (ss.mu0_at(r) - ss.lambda0_at(r)).exp();
        [g * w / eps, g * (ang / (r * r * r * eps) - ss.mu0_prime_at(r) * eps)]
    };
    let dt = t_guess / 8000.0;
    let (mut t, mut s) = (0.0, [r_minus, 0.0]);
    loop {
        let k1 = rhs(s);
        let k2 = rhs([s[0] + 0.5 * dt * k1[0], s[1] + 0.5 * dt * k1[1]]);
        let k3 = rhs([s[0] + 0.5 * dt * k2[0], s[1] + 0.5 * dt * k2[1]]);
        let k4 = rhs([s[0] + dt * k3[0], s[1] + dt * k3[1]]);
        let next = [0, 1].map(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        if t > 0.25 * t_guess && next[1] < 0.0 {
            // Cubic Hermite interpolation of w on [t, t + dt].
            let (w0, w1, d0, d1) = (s[1], next[1], k1[1] * dt, rhs(next)[1] * dt);
            let h = |x: f64| {
                let (x2, x3) = (x * x, x * x * x);
                (2.0 * x3 - 3.0 * x2 + 1.0) * w0 + (x3 - 2.0 * x2 + x) * d0 + (-2.0 * x3 + 3.0 * x2) * w1 + (x3 - x2) * d1
            };
            let (mut a, mut b) = (0.0, 1.0);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if h(m) > 0.0 {
                    a = m
                } else {
                    b = m
                }
            }
            return 2.0 * (t + 0.5 * (a + b) * dt);
        }
        s = next;
        t += dt;
        assert!(t < 2.0 * t_guess, "no turning point found");
    }
}

fn period_function() -> Check {
    let ss = reference_shell();
    let samples = sample_orbits(ss, 100).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for s in &samples {
        let t = characteristic_period(ss, s.l, s.r_minus, s.period);
        worst = worst.max(((s.period - t) / t).abs());
    }
    ensure(worst < 1e-4, format!("period mismatch {worst:e}"))?;
    let g = run_gates(ss).map_err(|e| e.to_string())?;
    ensure(g.t_min > 0.0 && g.t_max.is_finite(), format!("period bounds [{}, {}]", g.t_min, g.t_max))?;
    Ok(format!("100 orbits, max relative period error {worst:.1e}, T in [{:.2}, {:.2}]", g.t_min, g.t_max))
}

fn combined_series(parts: &[(f64, &ChebSeries)]) -> ChebSeries {
    let mut out = parts[0].1.clone();
    out.coeffs.iter_mut().for_each(|c| *c = 0.0);
    for (a, s) in parts {
        for (c, v) in out.coeffs.iter_mut().zip(&s.coeffs) {
            *c += a * v;
        }
    }
    out
}

fn operator_suite() -> Check {
    let ss = reference_shell();
    let sup = ss.support.unwrap();
    let (a, b) = (sup.rmin, sup.rmax);
    let grid = PhaseGrid::new(ss, GridOptions { n_theta: 512, n_s: 16, n_kappa: 16, ..GridOptions::default() }).map_err(|e| e.to_string())?;
    let f = PhaseFunction::from_fn(&grid, move |p| p.abs_dphi * p.w * (p.r - a) * (b - p.r) * p.l);
    let g = PhaseFunction::from_fn(&grid, move |p| p.abs_dphi * (1.0 + p.w * p.w) * (p.r - a).powi(2) * p.e);
    let mut seed = 0x2545_f491_4f6c_dd1du64;
    let mut uniform = move || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let mut random_smooth = || {
        let c: Vec<f64> = (0..6).map(|_| uniform()).collect();
        let (e0, l0) = (ss.e0_cut, 15.0);
        PhaseFunction::from_fn(&grid, move |p| {
            let (x, y, z) = ((p.r - a) / (b - a), p.e / e0, p.l / l0);
            let poly = c[0] + c[1] * p.w + c[2] * x + c[3] * p.w * p.w * y + c[4] * p.w * x * z + c[5] * y * z;
            p.abs_dphi * (p.r - a) * (b - p.r) * poly
        })
    };
    let mut pairs = vec![(f.clone(), g.clone())];
    for _ in 0..8 {
        let u = random_smooth();
        pairs.push((u, random_smooth()));
    }
    let nt = grid.n_theta();
    let (mut skew, mut round) = (0.0f64, 0.0f64);
    for (u, v) in &pairs {
        let (tu, tv) = (transport_apply(u), transport_apply(v));
        skew = skew.max((tu.inner(v).unwrap() + u.inner(&tv).unwrap()).abs() / (tu.norm() * v.norm()));
        let back = transport_inverse(&tu).map_err(|e| e.to_string())?;
        let mean = u.theta_mean();
        let centred = PhaseFunction::from_values(&grid, u.values.iter().enumerate().map(|(i, x)| x - mean[i / nt]).collect()).unwrap();
        round = round.max(back.combine(1.0, &centred, -1.0).unwrap().norm() / centred.norm());
    }
    ensure(skew < 1e-8, format!("skew defect {skew:e}"))?;
    ensure(round < 1e-8, format!("inverse round trip {round:e}"))?;

    let basis = KernelBasis::build(ss, &grid, &BasisOptions::default()).map_err(|e| e.to_string())?;
    let lifted = basis.lift_on_grid(ss, &grid).map_err(|e| e.to_string())?;
    let mut kb = 0.0f64;
    for (k, p) in lifted.elements.iter().zip(&basis.pk) {
        kb = kb.max(check_kernel_b_with(ss, k, p).map_err(|e| e.to_string())?);
    }
    for _ in 0..10 {
        let picks: Vec<(f64, usize)> = (0..4).map(|_| (uniform(), ((uniform() + 1.0) * 32.0) as usize % basis.dim())).collect();
        let mut combo = PhaseFunction::zeros(&grid);
        for &(c, i) in &picks {
            combo = combo.combine(1.0, &lifted.elements[i], c).unwrap();
        }
        let p = combined_series(&picks.iter().map(|&(c, i)| (c, &basis.pk[i])).collect::<Vec<_>>());
        kb = kb.max(check_kernel_b_with(ss, &combo, &p).map_err(|e| e.to_string())?);
    }
    ensure(kb < 1e-6, format!("kernel-of-B residual {kb:e}"))?;

    let p1 = lifted.project(&g).unwrap();
    let p2 = lifted.project(&p1).unwrap();
    let idem = p2.combine(1.0, &p1, -1.0).unwrap().norm() / g.norm();
    ensure(idem < 1e-8, format!("projection idempotency {idem:e}"))?;
    let odd = lifted.project(&f).unwrap().norm() / f.norm();
    ensure(odd < 1e-8, format!("odd projection {odd:e}"))?;
    Ok(format!("skew {skew:.1e} and round trip {round:.1e} on {} pairs, B-residual {kb:.1e} ({} elements + 10 combinations), idempotency {idem:.1e}, odd {odd:.1e}", pairs.len(), basis.dim()))
}

fn kernel_invariants() -> Check {
    let k = reference_kernel();
    let sym = k.symmetry_defect();
    ensure(sym < 1e-8 * k.max_abs(), format!("symmetry defect {sym:e}"))?;
    ensure(k.lambda_min() >= -1e-8, format!("lambda_min {}", k.lambda_min()))?;
    let hs2 = k.hs_norm * k.hs_norm;
    ensure((k.count_above(1.0) as f64) < hs2 || k.count_above(1.0) == 0 && hs2 > 0.0, "mode count bound")?;
    let spec = k.hs_from_eigenvalues().powi(2);
    let rel = ((hs2 - spec) / hs2).abs();
    ensure(rel < 1e-4, format!("double integral vs eigenvalue sum {rel:e}"))?;
    let coarse = kernel_k(reference_shell(), &KernelOptions { n_nodes: 40, ..KernelOptions::default() }).map_err(|e| e.to_string())?;
    let mid = kernel_k(reference_shell(), &KernelOptions { n_nodes: 80, ..KernelOptions::default() }).map_err(|e| e.to_string())?;
    let edge = [coarse.boundary_adjacent(), mid.boundary_adjacent(), k.boundary_adjacent()];
    ensure(edge[0] > edge[1] && edge[1] > edge[2], format!("boundary-adjacent |K| not decreasing: {edge:?}"))?;
    ensure(edge[2] < 1e-6 * k.max_abs(), format!("boundary-adjacent |K| = {:e}", edge[2]))?;
    Ok(format!("symmetry {sym:.1e}, lambda_min {:.1e}, #>1 = {} < {hs2:.2e}, HS identity {rel:.1e}, edge |K| {:?}", k.lambda_min(), k.count_above(1.0), edge.map(|v| format!("{v:.1e}"))))
}

fn synthetic_verdicts() -> Check {
    let mut out = Vec::new();
    for (l1, verdict, n) in [(0.5, Verdict::LinearlyStable, 0), (1.0, Verdict::ZeroFrequencyMode, 0), (2.0, Verdict::Unstable, 1)] {
        let k = synthetic_kernel(&[l1, 0.3, 0.1], 96).map_err(|e| e.to_string())?;
        let got = classify(&k.eigenvalues, VERDICT_TOLERANCE);
        ensure(got == (verdict, n), format!("lambda_1 = {l1}: {got:?}"))?;
        out.push(format!("{l1} -> {verdict:?}/{n}"));
    }
    let k = synthetic_kernel(&[2.0, 1.5], 96).map_err(|e| e.to_string())?;
    let got = classify(&k.eigenvalues, VERDICT_TOLERANCE);
    ensure(got == (Verdict::Unstable, 2), format!("(2, 1.5): {got:?}"))?;
    ensure(2.0 < k.hs_norm * k.hs_norm, "mode count bound for (2, 1.5)")?;
    out.push(format!("(2, 1.5) -> Unstable/2 with ||K||^2 = {:.4}", k.hs_norm * k.hs_norm));
    Ok(out.join(", "))
}

fn main() {
    let checks: [(&str, fn() -> Check); 9] = [
        ("schwarzschild roots and ordering", schwarzschild_geometry),
        ("figure markers", figure_markers),
        ("equilibrium residuals", equilibrium_residuals),
        ("small-amplitude scaling", small_amplitude_scaling),
        ("reference shell verdict", reference_verdict),
        ("period function", period_function),
        ("operator suite", operator_suite),
        ("kernel invariants", kernel_invariants),
        ("synthetic verdicts", synthetic_verdicts),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("acceptance {} {name}: PASS [{secs:.1}s] {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {} {name}: FAIL [{secs:.1}s] {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}

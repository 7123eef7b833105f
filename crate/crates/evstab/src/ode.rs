//! Embedded Dormand–Prince 5(4) integrator with sign-change event location.

use crate::error::{EvError, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Step-size control parameters.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-14, h_init: 1e-4, h_max: f64::INFINITY, max_steps: 2_000_000 }
    }
}

/// Accepted steps of an integration, with the right-hand side at every node.
#[derive(Debug, Clone)]
pub struct OdeSolution<const N: usize> {
    pub x: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub dy: Vec<[f64; N]>,
    /// True when the integration stopped at an event root rather than at `x_end`.
    pub event: bool,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// One Dormand–Prince step from `(x, y)` with slope `k1`; returns the new state,
/// its slope and the scaled error norm.
fn dp_step<const N: usize, F>(f: &mut F, x: f64, y: &[f64; N], k1: &[f64; N], h: f64, opts: &OdeOptions) -> Result<([f64; N], [f64; N], f64)>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let k2 = f(x + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
    let k3 = f(x + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(x + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(x + C5 * h, &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
    let k6 = f(x + h, &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
    let y_new = axpy(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = f(x + h, &y_new)?;
    let mut err: f64 = 0.0;
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
        err = err.max((e / sc).abs());
    }
    Ok((y_new, k7, err))
}

/// Integrates `y' = f(x, y)` from `x0` towards `x_end` (either direction).
///
/// When `event` is given, integration stops at the first root of `event(x, y)`
/// crossed by an accepted step; the root is located by bisection on the step size
/// to relative precision `1e-14`.
pub fn integrate<const N: usize, F, G>(
    mut f: F,
    x0: f64,
    y0: [f64; N],
    x_end: f64,
    opts: &OdeOptions,
    mut event: Option<G>,
) -> Result<OdeSolution<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    G: FnMut(f64, &[f64; N]) -> f64,
{
    let dir = if x_end >= x0 { 1.0 } else { -1.0 };
    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, &y)?;
    let mut sol = OdeSolution { x: vec![x], y: vec![y], dy: vec![k1], event: false };
    let mut h = opts.h_init.min(opts.h_max).min((x_end - x0).abs());
    let mut g_prev = event.as_mut().map(|g| g(x, &y));
    let mut steps = 0usize;
    while dir * (x_end - x) > 1e-15 * x_end.abs().max(1.0) {
        steps += 1;
        if steps > opts.max_steps {
            return Err(EvError::Numerical(format!("ODE step budget exhausted at x = {x}")));
        }
        h = h.min((x_end - x).abs()).min(opts.h_max);
        let (y_new, k_new, err) = match dp_step(&mut f, x, &y, &k1, dir * h, opts) {
            Ok(v) => v,
            Err(_) if h > 1e-13 * x.abs().max(1.0) => {
                h *= 0.25;
                continue;
            }
            Err(e) => return Err(e),
        };
        if !err.is_finite() || err > 1.0 {
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).max(0.1) } else { 0.1 };
            h *= fac;
            if h < 1e-14 * x.abs().max(1.0) {
                return Err(EvError::Numerical(format!("ODE step size underflow at x = {x}")));
            }
            continue;
        }
        let x_new = x + dir * h;
        if let (Some(g), Some(gp)) = (event.as_mut(), g_prev) {
            let g_new = g(x_new, &y_new);
            if gp.signum() != g_new.signum() && g_new != 0.0 && gp != 0.0 {
                // Bisect on the step length; every trial is a single accepted-size step.
                let (mut lo, mut hi) = (0.0, h);
                let mut best = (y_new, k_new);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let (ym, km, _) = dp_step(&mut f, x, &y, &k1, dir * mid, opts)?;
                    let gm = g(x + dir * mid, &ym);
                    if gm.signum() == gp.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                        best = (ym, km);
                    }
                    if hi - lo <= 1e-14 * (x.abs() + hi).max(1e-300) {
                        break;
                    }
                }
                sol.x.push(x + dir * hi);
                sol.y.push(best.0);
                sol.dy.push(best.1);
                sol.event = true;
                return Ok(sol);
            }
            g_prev = Some(g_new);
        }
        x = x_new;
        y = y_new;
        k1 = k_new;
        sol.x.push(x);
        sol.y.push(y);
        sol.dy.push(k1);
        let fac = if err > 0.0 { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
        h *= fac;
    }
    Ok(sol)
}

/// Convenience wrapper without events.
pub fn integrate_plain<const N: usize, F>(f: F, x0: f64, y0: [f64; N], x_end: f64, opts: &OdeOptions) -> Result<OdeSolution<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    integrate(f, x0, y0, x_end, opts, None::<fn(f64, &[f64; N]) -> f64>)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_energy_and_phase() {
        let sol = integrate_plain(|_, y: &[f64; 2]| Ok([y[1], -y[0]]), 0.0, [1.0, 0.0], 10.0, &OdeOptions::default()).unwrap();
        let last = sol.y.last().unwrap();
        assert!((last[0] - 10f64.cos()).abs() < 1e-8);
        assert!((last[1] + 10f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn event_locates_first_zero_crossing() {
        let sol = integrate(
            |_, y: &[f64; 2]| Ok([y[1], -y[0]]),
            0.0,
            [1.0, 0.0],
            10.0,
            &OdeOptions::default(),
            Some(|_x: f64, y: &[f64; 2]| y[0]),
        )
        .unwrap();
        assert!(sol.event);
        assert!((sol.x.last().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
    }
}

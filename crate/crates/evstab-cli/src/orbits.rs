//! Deterministic samples of the `(E, L)` support with turning points and periods.

use evstab::equilibria::SteadyState;
use evstab::potential_orbits::{OrbitSolver, ORBIT_NODES};
use evstab::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSample {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    #[serde(rename = "T")]
    pub period: f64,
}

/// Point `i` of the two-dimensional additive recurrence built on the plastic number.
pub fn low_discrepancy(i: usize) -> (f64, f64) {
    const G: f64 = 1.324_717_957_244_746;
    let (a1, a2) = (1.0 / G, 1.0 / (G * G));
    let k = i as f64 + 1.0;
    ((0.5 + a1 * k).fract(), (0.5 + a2 * k).fract())
}

/// `(L, E)` at the unit-square point `(u, v)`, kept a margin `pad` away from
/// `L₀`, `L_max`, `E_min(L)` and `E₀`.
pub fn support_point(solver: &OrbitSolver, u: f64, v: f64, pad: f64) -> Result<(f64, f64)> {
    let squeeze = |x: f64| pad + (1.0 - 2.0 * pad) * x;
    let ang = solver.l0 + (solver.l_max - solver.l0) * squeeze(u);
    let (_, e_min) = solver.e_min(ang)?;
    Ok((ang, e_min + (solver.e0 - e_min) * squeeze(v)))
}

/// `n` orbits spread over the interior of the support.
pub fn sample_orbits(ss: &SteadyState, n: usize) -> Result<Vec<OrbitSample>> {
    let solver = OrbitSolver::new(ss, ORBIT_NODES)?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let (u, v) = low_discrepancy(i);
            let (ang, e) = support_point(&solver, u, v, 0.02)?;
            let o = solver.orbit(e, ang)?;
            Ok(OrbitSample { e, l: ang, r_minus: o.r_minus, r_plus: o.r_plus, period: o.period })
        })
        .collect()
}

pub fn orbits_csv(samples: &[OrbitSample]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in samples {
        w.serialize(s).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

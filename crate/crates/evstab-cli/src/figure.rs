//! Effective-potential curves of vacuum Schwarzschild with the shell markers.

use evstab::equilibria::{schwarzschild_critical_radii, schwarzschild_level_radii, schwarzschild_potential, ShellParameters};
use evstab::Result;
use serde::{Deserialize, Serialize};

/// One sampled curve `r ↦ Ψ⁰_L(r)` with its energy level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Curve {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub r: Vec<f64>,
    pub psi: Vec<f64>,
    /// Level radii `r⁰₀ < r⁰₋ < r⁰₊` of `Ψ⁰_L = E`.
    pub level_radii: [f64; 3],
    /// Critical radii `s_L < r_L`.
    pub critical_radii: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Marker {
    pub name: String,
    pub r: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FigureData {
    #[serde(rename = "M")]
    pub m: f64,
    /// Curve of the shell parameters, then any extra curves.
    pub curves: Vec<Curve>,
    /// Markers on the first curve, in increasing radius.
    pub markers: Vec<Marker>,
}

fn curve(m: f64, ang: f64, e: f64, r_hi: f64, n: usize) -> Result<Curve> {
    let (r0, rm, rp) = schwarzschild_level_radii(m, ang, e)?;
    let (s, rl) = schwarzschild_critical_radii(m, ang)?;
    let r_lo = 2.0 * m * (1.0 + 1e-6);
    let r: Vec<f64> = (0..n).map(|i| r_lo + (r_hi - r_lo) * i as f64 / (n - 1) as f64).collect();
    let psi = r.iter().map(|&x| schwarzschild_potential(m, ang, x)).collect();
    Ok(Curve { l: ang, e, r, psi, level_radii: [r0, rm, rp], critical_radii: [s, rl] })
}

/// Curves for the shell `params` plus extra `(L, E)` pairs, sampled on `n` radii.
pub fn figure_data(params: &ShellParameters, extra: &[(f64, f64)], n: usize) -> Result<FigureData> {
    let m = params.m;
    let (_, _, rp) = schwarzschild_level_radii(m, params.l0, params.e_intermediate)?;
    let r_hi = 1.25 * rp;
    let main = curve(m, params.l0, params.e_intermediate, r_hi, n)?;
    let [r00, rm, rp] = main.level_radii;
    let [_, rl] = main.critical_radii;
    let psi = |r: f64| schwarzschild_potential(m, params.l0, r);
    let markers = [("r0_0", r00), ("r0", params.r0), ("r0_plus_eta0", params.r0 + params.eta0), ("R0_min", rm), ("r_L0", rl), ("R0_max", rp)]
        .into_iter()
        .map(|(name, r)| Marker { name: name.into(), r, psi: psi(r) })
        .collect();
    let mut curves = vec![main];
    for &(ang, e) in extra {
        curves.push(curve(m, ang, e, r_hi, n)?);
    }
    Ok(FigureData { m, curves, markers })
}

/// Extra curve drawn alongside the shell curve.
pub const REFERENCE_EXTRA: [(f64, f64); 1] = [(18.0, 0.97)];

impl FigureData {
    /// Long-format CSV `L,E,r,psi`.
    pub fn curves_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["L", "E", "r", "psi"]).expect("in-memory write");
        for c in &self.curves {
            for (r, p) in c.r.iter().zip(&c.psi) {
                w.serialize((c.l, c.e, r, p)).expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

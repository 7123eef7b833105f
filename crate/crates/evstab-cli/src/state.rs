//! Steady-state files: one JSON header line followed by a CSV table.

use std::io::{BufRead, BufReader, Read, Write};

use evstab::eos::EquationOfState;
use evstab::equilibria::{GridPolicy, Origin, SteadyState};
use evstab::{EvError, Result};
use serde::{Deserialize, Serialize};

use crate::pipeline::{summarize, EquilibriumSummary};

pub const STATE_FORMAT: &str = "ev-stab-state";
pub const STATE_VERSION: u32 = 1;
pub const COLUMNS: [&str; 8] = ["r", "y", "mu0", "lambda0", "rho0", "p0", "q0", "m"];

/// First line of a state file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateHeader {
    pub format: String,
    pub version: u32,
    pub origin: Origin,
    pub eos: EquationOfState,
    pub summary: EquilibriumSummary,
}

fn io_err(e: impl std::fmt::Display) -> EvError {
    EvError::Input(format!("state file: {e}"))
}

/// Writes the rows `(r, y, μ₀, λ₀, ρ₀, p₀, q₀, m)` at the given radii as CSV.
pub fn write_table<W: Write>(ss: &SteadyState, radii: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS).map_err(io_err)?;
    for &r in radii {
        let st = ss.local(r)?;
        w.serialize([st.r, st.y, st.mu, st.lambda, st.rho, st.p, st.q, st.m]).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Serializes the matter table of `ss`; vacuum states have nothing to save.
pub fn write_state<W: Write>(ss: &SteadyState, mut out: W) -> Result<()> {
    let Some((r, _, _)) = ss.support_samples() else {
        return Err(EvError::Input("state without matter has no support table to save".into()));
    };
    let header = StateHeader { format: STATE_FORMAT.into(), version: STATE_VERSION, origin: ss.origin, eos: ss.eos, summary: summarize(ss)? };
    let line = serde_json::to_string(&header).map_err(io_err)?;
    writeln!(out, "{line}").map_err(io_err)?;
    write_table(ss, &r, out)
}

/// Reads a state file and rebuilds the steady state from its `(r, y, m)` columns.
pub fn read_state<R: Read>(input: R) -> Result<(StateHeader, SteadyState)> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(io_err)?;
    let header: StateHeader = serde_json::from_str(first.trim()).map_err(io_err)?;
    if header.format != STATE_FORMAT {
        return Err(EvError::Input(format!("state file: unexpected format `{}`", header.format)));
    }
    if header.version != STATE_VERSION {
        return Err(EvError::Input(format!("state file: unsupported version {}", header.version)));
    }
    let mut rows = csv::Reader::from_reader(reader);
    let names = rows.headers().map_err(io_err)?.clone();
    if names.iter().ne(COLUMNS.iter().copied()) {
        return Err(EvError::Input(format!("state file: expected columns {COLUMNS:?}, got {:?}", names.iter().collect::<Vec<_>>())));
    }
    let (mut r, mut y, mut m) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rows.deserialize::<[f64; 8]>() {
        let row = rec.map_err(io_err)?;
        r.push(row[0]);
        y.push(row[1]);
        m.push(row[7]);
    }
    let ss = SteadyState::from_support_samples(header.origin, &header.eos, &r, &y, &m, &GridPolicy::default())?;
    Ok((header, ss))
}

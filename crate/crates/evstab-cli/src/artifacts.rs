//! Files written by `build` and `stability` into the output directory.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use evstab::equilibria::{Mode, Origin, SteadyState};
use evstab::{EvError, Result};

use crate::config::RunConfig;
use crate::figure::{figure_data, REFERENCE_EXTRA};
use crate::orbits::{orbits_csv, sample_orbits};
use crate::pipeline::PipelineOutcome;
use crate::reports::kernel_csv;
use crate::state::{write_state, write_table};

/// Orbits written to `orbits.csv`.
pub const ORBIT_SAMPLES: usize = 100;

/// Radii written to the Figure-1 curves.
pub const FIGURE_SAMPLES: usize = 400;

fn io_error(path: &Path, e: impl std::fmt::Display) -> EvError {
    EvError::Input(format!("{}: {e}", path.display()))
}

fn write_text(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    written.push(path);
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

/// State file, steady-state table, optional orbit sample and Figure-1 data.
pub fn write_state_files(ss: &SteadyState, cfg: &RunConfig, with_orbits: bool) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut written = Vec::new();
    if ss.support.is_some() {
        let path = dir.join("state.evs");
        write_state(ss, create(&path)?)?;
        written.push(path);
    }
    if cfg.emit_csv {
        let path = dir.join("steady_state.csv");
        let radii: Vec<f64> = ss.r_grid.iter().copied().filter(|&r| r > 0.0 || cfg.mode == Mode::Singfree).collect();
        write_table(ss, &radii, create(&path)?)?;
        written.push(path);
        if with_orbits {
            write_text(dir.join("orbits.csv"), &orbits_csv(&sample_orbits(ss, ORBIT_SAMPLES)?), &mut written)?;
        }
    }
    if cfg.emit_plot {
        if let Origin::Shell(params) = ss.origin {
            let fig = figure_data(&params, &REFERENCE_EXTRA, FIGURE_SAMPLES)?;
            write_text(dir.join("figure1.csv"), &fig.curves_csv(), &mut written)?;
            write_text(dir.join("figure1.json"), &serde_json::to_string_pretty(&fig).expect("serializable figure"), &mut written)?;
        }
    }
    Ok(written)
}

/// Report, state tables and kernel dump of a pipeline run, as enabled by `cfg`.
pub fn write_pipeline_files(outcome: &PipelineOutcome, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut written = Vec::new();
    if cfg.emit_json {
        write_text(dir.join("report.json"), &outcome.report.to_json(), &mut written)?;
    }
    if let Some(ss) = &outcome.state {
        written.extend(write_state_files(ss, cfg, outcome.report.gate_residuals.is_some())?);
    }
    if let (true, Some(k)) = (cfg.emit_csv, &outcome.kernel) {
        write_text(dir.join("kernel.csv"), &kernel_csv(k), &mut written)?;
    }
    Ok(written)
}

//! Plain-text `key = value` run configuration.

use std::fmt;
use std::path::PathBuf;

use evstab::eos::Family;
use evstab::equilibria::Mode;
use evstab::mathur::{KernelOptions, StabilityOptions};
use evstab::phase_space::GridOptions;
use serde::{Deserialize, Serialize};

/// Fully resolved configuration; every knob has a value after parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub family: Family,
    pub k: f64,
    pub l: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
    pub delta: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "E_intermediate")]
    pub e_intermediate: f64,
    /// Width of the cut-off transition; `None` picks half the admissible gap.
    pub eta0: Option<f64>,
    pub y0: f64,
    pub n_nodes: usize,
    pub n_e: usize,
    pub n_l: usize,
    pub n_theta: usize,
    pub n_s: usize,
    pub n_kappa: usize,
    pub orbit_nodes: usize,
    pub n_velocity: usize,
    pub tol: f64,
    pub refinement_tol: f64,
    pub refine: bool,
    pub output_dir: PathBuf,
    pub emit_csv: bool,
    pub emit_json: bool,
    pub emit_plot: bool,
}

impl RunConfig {
    /// Defaults for `mode`: the shell of the reference figure, or a singularity-free
    /// polytrope with `y0 = 0.1`.
    pub fn defaults(mode: Mode) -> Self {
        let kernel = KernelOptions::default();
        let shell = mode == Mode::Shell;
        RunConfig {
            mode,
            family: Family::Polytrope,
            k: 1.0,
            l: 0.0,
            l0: if shell { 15.0 } else { 0.0 },
            delta: if shell { 1e-3 } else { 1.0 },
            m: 1.0,
            e_intermediate: 0.98,
            eta0: None,
            y0: 0.1,
            n_nodes: kernel.n_nodes,
            n_e: kernel.n_e,
            n_l: kernel.n_l,
            n_theta: kernel.grid.n_theta,
            n_s: kernel.grid.n_s,
            n_kappa: kernel.grid.n_kappa,
            orbit_nodes: kernel.grid.orbit_nodes,
            n_velocity: kernel.n_velocity,
            tol: evstab::mathur::VERDICT_TOLERANCE,
            refinement_tol: StabilityOptions::default().refinement_tol,
            refine: true,
            output_dir: PathBuf::from("."),
            emit_csv: true,
            emit_json: true,
            emit_plot: true,
        }
    }

    pub fn grid_options(&self) -> GridOptions {
        GridOptions { n_theta: self.n_theta, n_s: self.n_s, n_kappa: self.n_kappa, orbit_nodes: self.orbit_nodes }
    }

    pub fn kernel_options(&self) -> KernelOptions {
        KernelOptions { n_nodes: self.n_nodes, n_e: self.n_e, n_l: self.n_l, n_velocity: self.n_velocity, grid: self.grid_options(), ..KernelOptions::default() }
    }

    pub fn stability_options(&self) -> StabilityOptions {
        StabilityOptions { kernel: self.kernel_options(), tol: self.tol, refinement_tol: self.refinement_tol, refine: self.refine }
    }
}

/// Every problem found in a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const KEYS: &[&str] = &[
    "mode", "family", "k", "l", "L0", "delta", "M", "E_intermediate", "eta0", "y0", "n_nodes", "n_e", "n_l", "n_theta", "n_s", "n_kappa", "orbit_nodes", "n_velocity", "tol",
    "refinement_tol", "refine", "output_dir", "emit_csv", "emit_json", "emit_plot",
];

/// Parses `key = value` lines; `#` starts a comment. All errors are collected.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {}: expected `key = value`, got `{line}`", no + 1));
            continue;
        };
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        if !KEYS.contains(&key.as_str()) {
            errors.push(format!("line {}: unknown key `{key}`", no + 1));
            continue;
        }
        if let Some((prev, _, _)) = entries.iter().find(|(_, k, _)| *k == key) {
            errors.push(format!("line {}: duplicate key `{key}` (first set on line {prev})", no + 1));
            continue;
        }
        entries.push((no + 1, key, value));
    }

    let mode = match entries.iter().find(|(_, k, _)| k == "mode") {
        None => {
            errors.push("missing required key `mode` (singfree or shell)".to_string());
            None
        }
        Some((no, _, v)) => match v.as_str() {
            "singfree" => Some(Mode::Singfree),
            "shell" => Some(Mode::Shell),
            other => {
                errors.push(format!("line {no}: mode must be `singfree` or `shell`, got `{other}`"));
                None
            }
        },
    };
    let mut cfg = RunConfig::defaults(mode.unwrap_or(Mode::Shell));

    for (no, key, value) in &entries {
        let mut bad = |what: &str| errors.push(format!("line {no}: `{key}` {what}, got `{value}`"));
        let real = || value.parse::<f64>().ok().filter(|v| v.is_finite());
        let count = || value.parse::<usize>().ok();
        let flag = || value.parse::<bool>().ok();
        match key.as_str() {
            "mode" => {}
            "family" => match value.as_str() {
                "polytrope" => cfg.family = Family::Polytrope,
                "king" => cfg.family = Family::King,
                _ => bad("must be `polytrope` or `king`"),
            },
            "k" => match real() {
                Some(v) if v >= 0.0 => cfg.k = v,
                _ => bad("must be a real number >= 0"),
            },
            "l" => match real() {
                Some(v) if v > -0.5 => cfg.l = v,
                _ => bad("must be a real number > -1/2"),
            },
            "L0" => match real() {
                Some(v) if v >= 0.0 => cfg.l0 = v,
                _ => bad("must be a real number >= 0"),
            },
            "delta" => match real() {
                Some(v) if v >= 0.0 => cfg.delta = v,
                _ => bad("must be a real number >= 0"),
            },
            "M" => match real() {
                Some(v) if v > 0.0 => cfg.m = v,
                _ => bad("must be a real number > 0"),
            },
            "E_intermediate" => match real() {
                Some(v) if v > 0.0 && v < 1.0 => cfg.e_intermediate = v,
                _ => bad("must lie in ]0, 1["),
            },
            "eta0" => match real() {
                Some(v) if v > 0.0 => cfg.eta0 = Some(v),
                _ => bad("must be a real number > 0"),
            },
            "y0" => match real() {
                Some(v) if v > 0.0 => cfg.y0 = v,
                _ => bad("must be a real number > 0"),
            },
            "n_theta" => match count() {
                Some(v) if v >= 4 && v % 2 == 0 => cfg.n_theta = v,
                _ => bad("must be an even integer >= 4"),
            },
            "orbit_nodes" => match count() {
                Some(v) if v >= 8 => cfg.orbit_nodes = v,
                _ => bad("must be an integer >= 8"),
            },
            "n_s" | "n_kappa" | "n_velocity" => match count() {
                Some(v) if v >= 2 => match key.as_str() {
                    "n_s" => cfg.n_s = v,
                    "n_kappa" => cfg.n_kappa = v,
                    _ => cfg.n_velocity = v,
                },
                _ => bad("must be an integer >= 2"),
            },
            "n_nodes" | "n_e" | "n_l" => match count() {
                Some(v) if v >= 1 => match key.as_str() {
                    "n_nodes" => cfg.n_nodes = v,
                    "n_e" => cfg.n_e = v,
                    _ => cfg.n_l = v,
                },
                _ => bad("must be a positive integer"),
            },
            "tol" | "refinement_tol" => match real() {
                Some(v) if v > 0.0 && v < 1.0 => {
                    if key == "tol" {
                        cfg.tol = v
                    } else {
                        cfg.refinement_tol = v
                    }
                }
                _ => bad("must lie in ]0, 1["),
            },
            "refine" | "emit_csv" | "emit_json" | "emit_plot" => match flag() {
                Some(v) => match key.as_str() {
                    "refine" => cfg.refine = v,
                    "emit_csv" => cfg.emit_csv = v,
                    "emit_json" => cfg.emit_json = v,
                    _ => cfg.emit_plot = v,
                },
                None => bad("must be `true` or `false`"),
            },
            "output_dir" => {
                if value.is_empty() {
                    bad("must be a non-empty path")
                } else {
                    cfg.output_dir = PathBuf::from(value)
                }
            }
            _ => unreachable!("keys are checked against KEYS"),
        }
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_reports_missing_mode() {
        let err = parse_config("").unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert!(err.0[0].contains("mode"));
    }

    #[test]
    fn reference_shell_resolves() {
        let cfg = parse_config("mode = shell\nM = 1\nL0 = 15\nE_intermediate = 0.98\ndelta = 1e-3\n").unwrap();
        assert_eq!(cfg.mode, Mode::Shell);
        assert_eq!((cfg.m, cfg.l0, cfg.e_intermediate, cfg.delta), (1.0, 15.0, 0.98, 1e-3));
        assert_eq!(cfg.n_nodes, 160);
    }

    #[test]
    fn all_errors_are_reported() {
        let err = parse_config("mode = shell\nfoo = 1\nk = -1\nn_theta = 7\ndelta\n").unwrap_err();
        assert_eq!(err.0.len(), 4, "{err}");
    }
}

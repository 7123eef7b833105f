//! Staged pipeline: equilibrium, gates, kernel and verdict.

use evstab::eos::{EquationOfState, Family};
use evstab::equilibria::{Diagnostics, EquilibriumResiduals, GridPolicy, Mode, ShellParameters, SteadyState};
use evstab::mathur::{run_gates, stability_analysis, GateReport, MathurKernel, StabilityReport};
use evstab::{EvError, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const REPORT_FORMAT: &str = "ev-stab-report";
pub const REPORT_VERSION: u32 = 1;

/// Chebyshev nodes used for the equilibrium residuals.
pub const RESIDUAL_NODES: usize = 256;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const GATE: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const CONFIG: i32 = 4;
}

/// Exit code for a library error.
pub fn exit_code(e: &EvError) -> i32 {
    match e {
        EvError::Config(_) => exit::CONFIG,
        EvError::Gate { .. } => exit::GATE,
        EvError::Input(_) | EvError::OutOfSupport(_) | EvError::Numerical(_) => exit::NUMERICAL,
    }
}

fn error_kind(e: &EvError) -> &'static str {
    match e {
        EvError::Config(_) => "config",
        EvError::Input(_) => "input",
        EvError::Gate { .. } => "gate",
        EvError::OutOfSupport(_) => "out_of_support",
        EvError::Numerical(_) => "numerical",
    }
}

/// Scalar description of a steady state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    pub mode: Mode,
    #[serde(rename = "E0_cut")]
    pub e0_cut: f64,
    #[serde(rename = "Rmin")]
    pub rmin: Option<f64>,
    #[serde(rename = "Rmax")]
    pub rmax: Option<f64>,
    #[serde(rename = "M_ADM")]
    pub m_adm: f64,
    #[serde(rename = "M_vlasov")]
    pub m_vlasov: f64,
    pub diagnostics: Diagnostics,
}

pub fn summarize(ss: &SteadyState) -> Result<EquilibriumSummary> {
    let d = ss.diagnostics()?;
    Ok(EquilibriumSummary {
        mode: ss.mode,
        e0_cut: ss.e0_cut,
        rmin: ss.support.map(|s| s.rmin),
        rmax: ss.support.map(|s| s.rmax),
        m_adm: d.m_adm,
        m_vlasov: ss.m_vlasov,
        diagnostics: d,
    })
}

/// Equation of state described by `cfg`.
pub fn equation_of_state(cfg: &RunConfig) -> Result<EquationOfState> {
    match cfg.family {
        Family::Polytrope => EquationOfState::polytrope(cfg.k, cfg.l, cfg.l0, cfg.delta),
        Family::King => EquationOfState::king(cfg.l, cfg.l0, cfg.delta),
    }
    .map_err(|e| match e {
        EvError::Input(m) => EvError::Config(m),
        other => other,
    })
}

/// Shell parameters of `cfg`; inadmissible values are reported as a gate failure.
pub fn shell_parameters(cfg: &RunConfig) -> Result<ShellParameters> {
    ShellParameters::new(cfg.m, cfg.l0, cfg.e_intermediate, cfg.eta0).map_err(|e| match e {
        EvError::Config(m) | EvError::Input(m) | EvError::Numerical(m) => EvError::gate("shell-admissibility", m),
        other => other,
    })
}

/// Constructs the steady state requested by `cfg`.
pub fn build_state(cfg: &RunConfig) -> Result<SteadyState> {
    let policy = GridPolicy::default();
    match cfg.mode {
        Mode::Singfree => SteadyState::solve_singularity_free(&equation_of_state(cfg)?, cfg.y0, &policy),
        Mode::Shell => {
            let params = shell_parameters(cfg)?;
            SteadyState::build_shell(&params, &equation_of_state(cfg)?, cfg.delta, &policy)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Built,
    Gated,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub gate: Option<String>,
    pub message: String,
    pub exit_code: i32,
}

impl ErrorRecord {
    pub fn from_error(e: &EvError) -> Self {
        let gate = match e {
            EvError::Gate { gate, .. } => Some(gate.clone()),
            _ => None,
        };
        ErrorRecord { kind: error_kind(e).into(), gate, message: e.to_string(), exit_code: exit_code(e) }
    }
}

/// Equilibrium block of the report: summary plus residuals of the static equations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumBlock {
    #[serde(flatten)]
    pub summary: EquilibriumSummary,
    pub residuals: Option<EquilibriumResiduals>,
}

/// Deterministic record of one pipeline run. The stability fields sit at the top level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub stages: Vec<StageRecord>,
    pub equilibrium: Option<EquilibriumBlock>,
    pub gate_residuals: Option<GateReport>,
    #[serde(flatten)]
    pub stability: Option<StabilityReport>,
    pub error: Option<ErrorRecord>,
}

impl PipelineReport {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(exit::SUCCESS, |e| e.exit_code)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn status_of(e: &EvError) -> StageStatus {
    if matches!(e, EvError::Gate { .. }) {
        StageStatus::Gated
    } else {
        StageStatus::Failed
    }
}

/// Report of a run with the objects it produced.
pub struct PipelineOutcome {
    pub report: PipelineReport,
    pub state: Option<SteadyState>,
    pub kernel: Option<MathurKernel>,
}

/// Runs every stage for `cfg`, stopping at the first failure.
pub fn run_pipeline(cfg: &RunConfig) -> PipelineOutcome {
    let mut report = PipelineReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        config: cfg.clone(),
        stages: Vec::new(),
        equilibrium: None,
        gate_residuals: None,
        stability: None,
        error: None,
    };
    let names = ["equilibrium", "gates", "stability"];
    let fail = |report: &mut PipelineReport, done: usize, e: EvError| {
        report.stages.push(StageRecord { stage: names[done].into(), status: status_of(&e), detail: Some(e.to_string()) });
        for n in &names[done + 1..] {
            report.stages.push(StageRecord { stage: (*n).into(), status: StageStatus::Skipped, detail: None });
        }
        report.error = Some(ErrorRecord::from_error(&e));
    };

    let ss = match build_state(cfg).and_then(|ss| {
        let summary = summarize(&ss)?;
        let residuals = if ss.support.is_some() { Some(ss.equilibrium_residuals(RESIDUAL_NODES)?) } else { None };
        Ok((ss, EquilibriumBlock { summary, residuals }))
    }) {
        Ok((ss, block)) => {
            report.equilibrium = Some(block);
            report.stages.push(StageRecord { stage: names[0].into(), status: StageStatus::Built, detail: None });
            ss
        }
        Err(e) => {
            fail(&mut report, 0, e);
            return PipelineOutcome { report, state: None, kernel: None };
        }
    };

    match run_gates(&ss) {
        Ok(g) => {
            report.gate_residuals = Some(g);
            report.stages.push(StageRecord { stage: names[1].into(), status: StageStatus::Built, detail: None });
        }
        Err(e) => {
            fail(&mut report, 1, e);
            return PipelineOutcome { report, state: Some(ss), kernel: None };
        }
    }

    match stability_analysis(&ss, &cfg.stability_options()) {
        Ok((s, k)) => {
            report.stages.push(StageRecord { stage: names[2].into(), status: StageStatus::Built, detail: None });
            report.stability = Some(s);
            PipelineOutcome { report, state: Some(ss), kernel: Some(k) }
        }
        Err(e) => {
            fail(&mut report, 2, e);
            PipelineOutcome { report, state: Some(ss), kernel: None }
        }
    }
}

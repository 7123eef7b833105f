use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use evstab::equilibria::SteadyState;
use evstab::mathur::{kernel_k, run_gates, KernelOptions};
use evstab::potential_orbits::{single_well_report, WellOptions};
use evstab::EvError;
use evstab_cli::artifacts::{write_pipeline_files, write_state_files};
use evstab_cli::orbits::{orbits_csv, sample_orbits};
use evstab_cli::pipeline::{exit, summarize, EquilibriumBlock, RESIDUAL_NODES};
use evstab_cli::reports::{basis_report, kernel_csv};
use evstab_cli::state::read_state;
use evstab_cli::{build_state, exit_code, parse_config, run_pipeline, RunConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "ev-stab", version, about = "Linear stability of static Einstein-Vlasov shells and clusters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StateInput {
    /// State file written by `build`.
    #[arg(long)]
    state: PathBuf,
    /// Configuration supplying numerical resolution knobs.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Construct the steady state and write its tables.
    Build {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` of the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Locate the critical points of every sampled effective potential.
    CheckSingleWell {
        #[command(flatten)]
        input: StateInput,
    },
    /// Sample orbits of the support as CSV `E,L,r_minus,r_plus,T`.
    Orbits {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Assemble the kernel; `--dump` prints CSV `r_i,s_j,K_ij`.
    Kernel {
        #[command(flatten)]
        input: StateInput,
        #[arg(long)]
        dump: bool,
    },
    /// Run the full pipeline and print the stability report.
    Stability {
        #[arg(long)]
        config: PathBuf,
    },
    /// Gram conditioning and kernel-of-B residuals of the kernel basis.
    BasisReport {
        #[command(flatten)]
        input: StateInput,
    },
}

/// A failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl From<EvError> for Failure {
    fn from(e: EvError) -> Self {
        Failure { code: exit_code(&e), message: e.to_string() }
    }
}

type Outcome = Result<i32, Failure>;

fn config_failure(message: String) -> Failure {
    Failure { code: exit::CONFIG, message }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: exit::NUMERICAL, message: format!("{}: {e}", path.display()) }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| config_failure(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| config_failure(format!("{}:\n{e}", path.display())))
}

fn load_state(input: &StateInput) -> Result<(SteadyState, KernelOptions), Failure> {
    let opts = match &input.config {
        Some(p) => load_config(p)?.kernel_options(),
        None => KernelOptions::default(),
    };
    let file = fs::File::open(&input.state).map_err(|e| io_failure(&input.state, e))?;
    let (_, ss) = read_state(file)?;
    Ok((ss, opts))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable value")
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn build(config: &Path, out: Option<PathBuf>) -> Outcome {
    let mut cfg = load_config(config)?;
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    let ss = build_state(&cfg)?;
    let residuals = if ss.support.is_some() { Some(ss.equilibrium_residuals(RESIDUAL_NODES)?) } else { None };
    let block = EquilibriumBlock { summary: summarize(&ss)?, residuals };
    #[derive(Serialize)]
    struct BuildRecord<'a> {
        config: &'a RunConfig,
        equilibrium: &'a EquilibriumBlock,
    }
    let record = to_json(&BuildRecord { config: &cfg, equilibrium: &block });
    write_state_files(&ss, &cfg, false)?;
    if cfg.emit_json {
        write(&cfg.output_dir.join("equilibrium.json"), &record)?;
    }
    println!("{record}");
    Ok(exit::SUCCESS)
}

fn check_single_well(input: &StateInput) -> Outcome {
    let (ss, _) = load_state(input)?;
    let report = single_well_report(&ss, &WellOptions::default())?;
    println!("{}", to_json(&report));
    Ok(if report.pass { exit::SUCCESS } else { exit::GATE })
}

fn orbits(state: &Path, samples: usize) -> Outcome {
    let input = StateInput { state: state.to_path_buf(), config: None };
    let (ss, _) = load_state(&input)?;
    print!("{}", orbits_csv(&sample_orbits(&ss, samples)?));
    Ok(exit::SUCCESS)
}

fn kernel(input: &StateInput, dump: bool) -> Outcome {
    let (ss, opts) = load_state(input)?;
    run_gates(&ss)?;
    let k = kernel_k(&ss, &opts)?;
    if dump {
        print!("{}", kernel_csv(&k));
    } else {
        #[derive(Serialize)]
        struct KernelSummary {
            n_nodes: usize,
            lambda_1: f64,
            hs_norm: f64,
            lambda_min: f64,
            symmetry_defect: f64,
            boundary_adjacent: f64,
            max_abs: f64,
            eigenvalues: Vec<f64>,
        }
        let s = KernelSummary {
            n_nodes: k.len(),
            lambda_1: k.operator_norm(),
            hs_norm: k.hs_norm,
            lambda_min: k.lambda_min(),
            symmetry_defect: k.symmetry_defect(),
            boundary_adjacent: k.boundary_adjacent(),
            max_abs: k.max_abs(),
            eigenvalues: k.eigenvalues.iter().take(10).copied().collect(),
        };
        println!("{}", to_json(&s));
    }
    Ok(exit::SUCCESS)
}

fn stability(config: &Path) -> Outcome {
    let cfg = load_config(config)?;
    let start = Instant::now();
    let outcome = run_pipeline(&cfg);
    let elapsed = start.elapsed().as_secs_f64();
    write_pipeline_files(&outcome, &cfg)?;
    if cfg.emit_json {
        let timings = serde_json::json!({ "wall_seconds": elapsed });
        write(&cfg.output_dir.join("timings.json"), &to_json(&timings))?;
    }
    println!("{}", outcome.report.to_json());
    if let Some(e) = &outcome.report.error {
        eprintln!("ev-stab: {}", e.message);
    }
    Ok(outcome.report.exit_code())
}

fn basis(input: &StateInput) -> Outcome {
    let (ss, opts) = load_state(input)?;
    println!("{}", to_json(&basis_report(&ss, &opts)?));
    Ok(exit::SUCCESS)
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("EV_STAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| config_failure(format!("EV_STAB_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| config_failure(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = init_threads().and_then(|_| match &cli.command {
        Command::Build { config, out } => build(config, out.clone()),
        Command::CheckSingleWell { input } => check_single_well(input),
        Command::Orbits { state, samples } => orbits(state, *samples),
        Command::Kernel { input, dump } => kernel(input, *dump),
        Command::Stability { config } => stability(config),
        Command::BasisReport { input } => basis(input),
    });
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("ev-stab: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}

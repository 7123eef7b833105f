use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use evstab_cli::{parse_config, PipelineReport};
use evstab_cli::state::{read_state, write_state};
use proptest::prelude::*;

fn ev_stab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ev-stab")).args(args).current_dir(dir).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SHELL: &str = "mode = shell\nM = 1\nL0 = 15\nE_intermediate = 0.98\ndelta = 1e-3\noutput_dir = out\n";

#[test]
fn config_errors_exit_with_code_four_and_list_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_config(dir.path(), "empty.cfg", "");
    let out = ev_stab(&["stability", "--config", &empty], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mode"));

    let bad = write_config(dir.path(), "bad.cfg", "mode = shell\nk = -1\nn_theta = 3\nwhatever = 2\n");
    let out = ev_stab(&["build", "--config", &bad], dir.path());
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`k`") && err.contains("`n_theta`") && err.contains("whatever"), "{err}");
}

#[test]
fn small_angular_momentum_cut_is_a_gate_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "l10.cfg", "mode = shell\nM = 1\nL0 = 10\nrefine = false\noutput_dir = out\n");
    let out = ev_stab(&["stability", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["stages"][0]["status"], "gated");
    assert_eq!(report["error"]["gate"], "shell-admissibility");
    assert_eq!(report["stages"][2]["status"], "skipped");
}

#[test]
fn polytropes_below_unit_exponent_are_gated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "k05.cfg", "mode = singfree\nk = 0.5\nrefine = false\noutput_dir = out\n");
    let out = ev_stab(&["stability", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["error"]["gate"], "s4");
}

#[test]
fn build_writes_state_tables_and_figure_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "shell.cfg", SHELL);
    let out = ev_stab(&["build", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["E0_cut", "Rmin", "Rmax", "M_ADM", "M_vlasov", "diagnostics"] {
        assert!(!summary["equilibrium"][key].is_null(), "{key}");
    }
    let o = dir.path().join("out");
    let csv = fs::read_to_string(o.join("steady_state.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "r,y,mu0,lambda0,rho0,p0,q0,m");
    let state = fs::read_to_string(o.join("state.evs")).unwrap();
    let header: serde_json::Value = serde_json::from_str(state.lines().next().unwrap()).unwrap();
    assert_eq!(header["format"], "ev-stab-state");
    assert_eq!(header["version"], 1);
    assert!(o.join("figure1.csv").exists() && o.join("figure1.json").exists());

    let state_path = o.join("state.evs");
    let s = state_path.to_str().unwrap();
    let orbits = ev_stab(&["orbits", "--state", s, "--samples", "7"], dir.path());
    assert_eq!(orbits.status.code(), Some(0));
    let text = String::from_utf8(orbits.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "E,L,r_minus,r_plus,T");
    assert_eq!(text.lines().count(), 8);

    let well = ev_stab(&["check-single-well", "--state", s], dir.path());
    assert_eq!(well.status.code(), Some(0));
    let rep: serde_json::Value = serde_json::from_slice(&well.stdout).unwrap();
    assert_eq!(rep["pass"], true);

    let coarse = write_config(dir.path(), "coarse.cfg", "mode = shell\nn_nodes = 24\nn_e = 3\nn_l = 3\nn_theta = 32\nn_s = 8\nn_kappa = 8\n");
    let dump = ev_stab(&["kernel", "--state", s, "--config", &coarse, "--dump"], dir.path());
    assert_eq!(dump.status.code(), Some(0));
    let text = String::from_utf8(dump.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "r_i,s_j,K_ij");
    assert_eq!(text.lines().count(), 1 + 24 * 24);

    let basis = ev_stab(&["basis-report", "--state", s, "--config", &coarse], dir.path());
    assert_eq!(basis.status.code(), Some(0));
    let rep: serde_json::Value = serde_json::from_slice(&basis.stdout).unwrap();
    assert_eq!(rep["dim"], 9);
    assert_eq!(rep["b_residuals"].as_array().unwrap().len(), 9);
}

#[test]
fn stability_reports_are_bit_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "fast.cfg",
        &format!("{SHELL}refine = false\nn_nodes = 48\nn_e = 4\nn_l = 4\nn_theta = 64\nn_s = 16\nn_kappa = 16\n"),
    );
    let a = ev_stab(&["stability", "--config", &cfg], dir.path());
    let b = Command::new(env!("CARGO_BIN_EXE_ev-stab")).args(["stability", "--config", &cfg]).current_dir(dir.path()).env("EV_STAB_THREADS", "1").output().unwrap();
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let rep: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    for key in ["verdict", "lambda_1", "hs_norm", "n_modes_above_one", "convergence", "config", "stages", "gate_residuals"] {
        assert!(!rep[key].is_null(), "{key}");
    }
    assert_eq!(rep["verdict"], "linearly_stable");
    assert_eq!(rep["config"]["L0"], 15.0);
    let o = dir.path().join("out");
    for name in ["report.json", "timings.json", "state.evs", "steady_state.csv", "orbits.csv", "kernel.csv", "figure1.csv"] {
        assert!(o.join(name).exists(), "{name}");
    }
    assert_eq!(fs::read_to_string(o.join("orbits.csv")).unwrap().lines().count(), 101);
    assert_eq!(fs::read_to_string(o.join("kernel.csv")).unwrap().lines().count(), 1 + 48 * 48);

    let text = String::from_utf8(a.stdout).unwrap();
    let parsed: PipelineReport = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.to_json().trim_end(), text.trim_end());
}

#[test]
fn shell_without_matter_fails_the_support_gate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "vacuum.cfg", "mode = shell\nM = 1\nL0 = 15\ndelta = 0\nrefine = false\noutput_dir = out\n");
    let out = ev_stab(&["stability", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["stages"][0]["status"], "built");
    assert_eq!(report["error"]["gate"], "support");
    assert!(report["error"]["message"].as_str().unwrap().contains("no matter support"));
    assert_eq!(report["equilibrium"]["M_vlasov"], 0.0);
}

#[test]
fn state_violating_the_horizon_bound_is_rejected_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "shell.cfg", SHELL);
    assert_eq!(ev_stab(&["build", "--config", &cfg], dir.path()).status.code(), Some(0));
    let path = dir.path().join("out/state.evs");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let last = lines.len() - 1;
    let mut cols: Vec<String> = lines[last].split(',').map(String::from).collect();
    *cols.last_mut().unwrap() = "50.0".into();
    lines[last] = cols.join(",");
    let broken = dir.path().join("broken.evs");
    fs::write(&broken, lines.join("\n") + "\n").unwrap();
    let out = ev_stab(&["check-single-well", "--state", broken.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2(M+m)<r"));
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "shell.cfg", SHELL);
    let out = Command::new(env!("CARGO_BIN_EXE_ev-stab")).args(["build", "--config", &cfg]).current_dir(dir.path()).env("EV_STAB_THREADS", "0").output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn state_file_round_trip_preserves_the_equilibrium() {
    let cfg = parse_config(SHELL).unwrap();
    let ss = evstab_cli::build_state(&cfg).unwrap();
    let mut buf = Vec::new();
    write_state(&ss, &mut buf).unwrap();
    let (header, back) = read_state(buf.as_slice()).unwrap();
    assert_eq!(header.summary.m_vlasov, ss.m_vlasov);
    assert_eq!(back.e0_cut, ss.e0_cut);
    assert_eq!(back.support, ss.support);
    let mut again = Vec::new();
    write_state(&back, &mut again).unwrap();
    assert_eq!(buf, again);
}

proptest! {
    #[test]
    fn parsed_numbers_are_echoed_exactly(delta in 1e-6f64..1e-2, l0 in 12.5f64..40.0, n in 2usize..400) {
        let text = format!("mode = shell\ndelta = {delta}\nL0 = {l0}\nn_nodes = {n}\n");
        let cfg = parse_config(&text).unwrap();
        prop_assert_eq!((cfg.delta, cfg.l0, cfg.n_nodes), (delta, l0, n));
        let json = serde_json::to_string(&cfg).unwrap();
        let back: evstab_cli::RunConfig = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn every_bad_line_is_reported(bad in proptest::collection::vec(0usize..4, 1..6)) {
        let lines = ["k = -2", "n_theta = 5", "nonsense", "frobnicate = 1"];
        let mut text = String::from("mode = singfree\n");
        for (i, b) in bad.iter().enumerate() {
            if bad[..i].contains(b) { continue; }
            text.push_str(lines[*b]);
            text.push('\n');
        }
        let mut distinct = bad.clone();
        distinct.sort();
        distinct.dedup();
        let err = parse_config(&text).unwrap_err();
        prop_assert_eq!(err.0.len(), distinct.len());
    }
}

//! End-to-end checks of the `mtdc-sim` binary: subcommands, CSV schemas,
//! report files, and process exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/paper_fig1.scn")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtdc-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

#[test]
fn simulate_deadband_pi_passes_the_gate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = run(&["simulate", scenario_path().to_str().unwrap(), "--out", out]);
    assert_eq!(result.status.code(), Some(0), "{}", stdout(&result));
    let text = stdout(&result);
    assert!(text.contains("range verdict: satisfied"), "{text}");
    assert!(text.contains("lyapunov: nonincreasing"), "{text}");

    // deadband PI ends with every voltage inside [95, 105] kV
    let voltages = std::fs::read_to_string(dir.path().join("voltages.csv")).unwrap();
    let last = voltages.lines().last().unwrap();
    for field in last.split(',').skip(1) {
        let kv: f64 = field.parse().unwrap();
        assert!((95.0 - 1e-3..=105.0 + 1e-3).contains(&kv), "final voltage {kv} kV");
    }

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["controller"], "deadband-pi");
    assert_eq!(report["converged"], true);
    assert_eq!(report["range"]["satisfied"], true);
    assert_eq!(report["lyapunov"]["status"], "evaluated");
}

#[test]
fn simulate_droop_fails_the_gate_with_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(&[
        "simulate",
        scenario_path().to_str().unwrap(),
        "--controller",
        "droop",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(4), "{}", stdout(&result));
    assert!(stdout(&result).contains("range verdict: VIOLATED"));

    // at least one final voltage below the 95 kV floor
    let voltages = std::fs::read_to_string(dir.path().join("voltages.csv")).unwrap();
    let last = voltages.lines().last().unwrap();
    let min = last
        .split(',')
        .skip(1)
        .map(|f| f.parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!(min < 95.0, "min final voltage {min} kV");
}

#[test]
fn csv_headers_match_the_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(&[
        "simulate",
        scenario_path().to_str().unwrap(),
        "--controller",
        "droop",
        "--horizon-ms",
        "0.2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(4));
    let header = |name: &str| {
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(header("voltages.csv"), "t_ms,V1_kV,V2_kV,V3_kV,V4_kV");
    assert_eq!(header("injections.csv"), "t_ms,u1_A,u2_A,u3_A,u4_A");
    assert_eq!(header("line_currents.csv"), "t_ms,I_1_2_A,I_1_3_A,I_2_3_A,I_2_4_A,I_3_4_A");
}

#[test]
fn equilibrium_prints_voltages_and_residual() {
    let result = run(&[
        "equilibrium",
        scenario_path().to_str().unwrap(),
        "--controller",
        "droop",
    ]);
    assert_eq!(result.status.code(), Some(0));
    let text = stdout(&result);
    assert!(text.contains("terminal 1: 92.087"), "{text}");
    assert!(text.contains("relative residual"), "{text}");
}

#[test]
fn equilibrium_rejects_non_droop_kind() {
    let result = run(&["equilibrium", scenario_path().to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("unsupported controller kind"));
}

#[test]
fn verify_sharing_prints_the_sweep_table() {
    let result = run(&[
        "verify-sharing",
        scenario_path().to_str().unwrap(),
        "--gammas",
        "1,0.1,0.01,0.001",
    ]);
    assert_eq!(result.status.code(), Some(0));
    let text = stdout(&result);
    assert!(text.contains("gamma"), "{text}");
    assert_eq!(text.lines().count(), 5, "{text}");
}

#[test]
fn counterexample_writes_a_runnable_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(&[
        "counterexample",
        scenario_path().to_str().unwrap(),
        "--controller",
        "droop",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(0), "{}", stdout(&result));
    let text = stdout(&result);
    assert!(text.contains("leaves the operating range"), "{text}");

    // the emitted scenario parses and reproduces the violation under simulate
    let counter_path = dir.path().join("counterexample.scn");
    assert!(counter_path.exists());
    let sim_dir = tempfile::tempdir().unwrap();
    let sim = run(&[
        "simulate",
        counter_path.to_str().unwrap(),
        "--out",
        sim_dir.path().to_str().unwrap(),
    ]);
    assert_eq!(sim.status.code(), Some(4), "{}", stdout(&sim));
    assert!(stdout(&sim).contains("range verdict: VIOLATED"));
}

#[test]
fn invalid_scenario_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    std::fs::write(
        &bad,
        "mtdc-scenario v1\n[grid]\nterminals = 2\ncapacitance = 0.01 F\nline = 1 2 3.7 ohm\n\
         [controller]\nkind = droop\nk_p = 10 S\nv_nom = 100 kV\nv_lo = 106 kV\nv_hi = 105 kV\n\
         [injection]\ni_inj = 0 A\n[initial]\nv = 100 kV\n",
    )
    .unwrap();
    let result = run(&["simulate", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    let err = String::from_utf8_lossy(&result.stderr);
    assert!(err.contains("line 10"), "{err}");

    let missing = run(&["simulate", "/nonexistent/nowhere.scn"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn integrator_blowup_exits_with_3_and_flushes_partial_csvs() {
    // A step far outside the RK4 stability region diverges immediately.
    let dir = tempfile::tempdir().unwrap();
    let result = run(&[
        "simulate",
        scenario_path().to_str().unwrap(),
        "--controller",
        "droop",
        "--step-us",
        "2000000",
        "--horizon-ms",
        "1000000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(3), "{}", stdout(&result));
    assert!(stdout(&result).contains("failure:"), "{}", stdout(&result));
    // partial CSVs exist with at least the header and the initial sample
    let voltages = std::fs::read_to_string(dir.path().join("voltages.csv")).unwrap();
    assert!(voltages.lines().count() >= 2, "{voltages}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["failure"].as_str().unwrap().contains("blowup"));
}

#[test]
fn step_override_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(&[
        "simulate",
        scenario_path().to_str().unwrap(),
        "--controller",
        "droop",
        "--step-us",
        "2",
        "--horizon-ms",
        "0.1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(4));
    // stride 10 at 2 us steps: samples every 0.02 ms
    let voltages = std::fs::read_to_string(dir.path().join("voltages.csv")).unwrap();
    let second_row_t: f64 = voltages.lines().nth(2).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((second_row_t - 0.02).abs() < 1e-12, "t = {second_row_t}");
}

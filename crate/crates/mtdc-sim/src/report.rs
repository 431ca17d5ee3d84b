//! Run execution for the CLI: CSV emission mirroring the three standard
//! plots (voltages, controlled injections, line currents over time) and a
//! machine-readable verdict report for CI gating.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{lyapunov_monitor, range_verdict, sharing_verdict, RangeVerdict, SharingVerdict};
use crate::controller::{ControllerConfig, ControllerKind};
use crate::error::{Error, Result};
use crate::integrator::{simulate_to_steady, SystemState};
use crate::scenario::Scenario;

/// Final-voltage tolerance for the operating-range verdict: 1 V on a
/// 100 kV scale, far tighter than any engineering limit yet far looser
/// than float noise.
pub const RANGE_TOLERANCE_V: f64 = 1.0;

/// Relative tolerance when comparing the achieved injections against the
/// sharing optimum.
pub const SHARING_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MaybeVerdict<T> {
    Evaluated(T),
    NotApplicable { reason: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovVerdict {
    pub nonincreasing: bool,
    pub max_increase: f64,
    pub tolerance: f64,
    pub initial_value: f64,
    pub final_value: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CsvFiles {
    pub voltages: PathBuf,
    pub injections: PathBuf,
    pub line_currents: PathBuf,
}

/// Everything a CI gate needs to judge one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub controller: String,
    pub converged: bool,
    pub final_time_s: f64,
    pub total_steps: u64,
    /// Time stamp and stage of an integrator failure, if one occurred.
    pub failure: Option<String>,
    pub range: RangeVerdict,
    pub sharing: MaybeVerdict<SharingVerdict>,
    pub lyapunov: MaybeVerdict<LyapunovVerdict>,
    pub csv_files: CsvFiles,
}

impl RunReport {
    /// Gate for exit-code purposes: the run must settle without numerical
    /// failure, end inside the operating range, and never climb the Lyapunov
    /// function when one applies. The sharing verdict is informational.
    pub fn gate_passed(&self) -> bool {
        let lyapunov_ok = match &self.lyapunov {
            MaybeVerdict::Evaluated(v) => v.nonincreasing,
            MaybeVerdict::NotApplicable { .. } => true,
        };
        self.converged && self.failure.is_none() && self.range.satisfied && lyapunov_ok
    }
}

fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    let file =
        File::create(path).map_err(|e| Error::validation(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn write_row(w: &mut BufWriter<File>, values: impl Iterator<Item = f64>) -> Result<()> {
    let row = values.map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",");
    writeln!(w, "{row}").map_err(|e| Error::validation(format!("write failed: {e}")))
}

/// Emits the three CSV time series for a list of samples. Headers and column
/// order are deterministic: `t_ms,V1_kV,...`, `t_ms,u1_A,...`, and
/// `t_ms,I_1_2_A,...` with lines in canonical (from < to, sorted) order.
pub fn write_csv_outputs(
    dir: &Path,
    scenario: &Scenario,
    cfg: &ControllerConfig,
    samples: &[SystemState],
) -> Result<CsvFiles> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::validation(format!("cannot create output directory {}: {e}", dir.display())))?;
    let n = scenario.topology.n_terminals();
    let files = CsvFiles {
        voltages: dir.join("voltages.csv"),
        injections: dir.join("injections.csv"),
        line_currents: dir.join("line_currents.csv"),
    };

    let mut voltages = create_writer(&files.voltages)?;
    let mut injections = create_writer(&files.injections)?;
    let mut line_currents = create_writer(&files.line_currents)?;

    let v_header: Vec<String> = (1..=n).map(|i| format!("V{i}_kV")).collect();
    writeln!(voltages, "t_ms,{}", v_header.join(",")).map_err(|e| Error::validation(e.to_string()))?;
    let u_header: Vec<String> = (1..=n).map(|i| format!("u{i}_A")).collect();
    writeln!(injections, "t_ms,{}", u_header.join(",")).map_err(|e| Error::validation(e.to_string()))?;
    let i_header: Vec<String> = scenario
        .topology
        .lines()
        .iter()
        .map(|l| format!("I_{}_{}_A", l.from + 1, l.to + 1))
        .collect();
    writeln!(line_currents, "t_ms,{}", i_header.join(",")).map_err(|e| Error::validation(e.to_string()))?;

    for state in samples {
        let t_ms = state.t * 1e3;
        write_row(&mut voltages, std::iter::once(t_ms).chain(state.v.iter().map(|v| v / 1e3)))?;
        let u = cfg.control_output(&state.v, &state.z)?;
        write_row(&mut injections, std::iter::once(t_ms).chain(u))?;
        let currents = scenario.topology.line_currents(&state.v)?;
        write_row(&mut line_currents, std::iter::once(t_ms).chain(currents))?;
    }
    for w in [&mut voltages, &mut injections, &mut line_currents] {
        w.flush().map_err(|e| Error::validation(format!("flush failed: {e}")))?;
    }
    Ok(files)
}

/// Simulates a scenario to steady state (auto-extending the horizon), emits
/// the CSVs, and assembles the verdict report. Partial CSVs are still written
/// when the integrator fails mid-run.
pub fn run_scenario(
    scenario: &Scenario,
    kind_override: Option<ControllerKind>,
    out_dir: &Path,
) -> Result<RunReport> {
    let cfg = scenario.controller_config(kind_override)?;
    let run = simulate_to_steady(
        &scenario.topology,
        &cfg,
        &scenario.injection,
        &scenario.initial,
        &scenario.integrator,
    )?;

    let mut samples = run.samples.clone();
    if samples.last().map(|s| s.t) != Some(run.final_state.t) {
        samples.push(run.final_state.clone());
    }
    let csv_files = write_csv_outputs(out_dir, scenario, &cfg, &samples)?;

    let range = range_verdict(&run.final_state.v, &scenario.v_lo, &scenario.v_hi, RANGE_TOLERANCE_V)?;

    let sharing = match cfg.kind() {
        ControllerKind::Pi => MaybeVerdict::NotApplicable {
            reason: "PI compensates every disturbance locally; no current sharing to assess".to_string(),
        },
        _ => {
            let f: Vec<f64> = cfg.k_p().iter().map(|&g| 1.0 / g).collect();
            let u_final = cfg.control_output(&run.final_state.v, &run.final_state.z)?;
            MaybeVerdict::Evaluated(sharing_verdict(&f, &scenario.injection, &u_final, SHARING_TOLERANCE)?)
        }
    };

    let uniform_bounds =
        scenario.v_lo.iter().all(|&v| v == scenario.v_lo[0]) && scenario.v_hi.iter().all(|&v| v == scenario.v_hi[0]);
    let lyapunov = match cfg.kind() {
        ControllerKind::Droop => MaybeVerdict::NotApplicable {
            reason: "droop carries no integrator state".to_string(),
        },
        _ if !uniform_bounds => MaybeVerdict::NotApplicable {
            reason: "monotonicity is only guaranteed for uniform voltage bounds".to_string(),
        },
        _ => {
            let trace = lyapunov_monitor(&scenario.topology, &cfg, &scenario.injection, &samples)?;
            MaybeVerdict::Evaluated(LyapunovVerdict {
                nonincreasing: trace.nonincreasing,
                max_increase: trace.max_increase,
                tolerance: trace.tolerance,
                initial_value: trace.samples.first().map(|s| s.value).unwrap_or(0.0),
                final_value: trace.samples.last().map(|s| s.value).unwrap_or(0.0),
                samples: trace.samples.len(),
            })
        }
    };

    let report = RunReport {
        controller: cfg.kind().name().to_string(),
        converged: run.converged,
        final_time_s: run.final_state.t,
        total_steps: run.total_steps,
        failure: run.failure.as_ref().map(|e| e.to_string()),
        range,
        sharing,
        lyapunov,
        csv_files,
    };

    let report_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::validation(format!("cannot serialize report: {e}")))?;
    std::fs::write(&report_path, json)
        .map_err(|e| Error::validation(format!("cannot write {}: {e}", report_path.display())))?;

    Ok(report)
}

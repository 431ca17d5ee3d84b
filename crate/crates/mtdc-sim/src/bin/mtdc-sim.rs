//! Command-line front end: simulate scenarios, print droop equilibria, sweep
//! the resistance scale for sharing, and produce certified range-violating
//! disturbances.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure,
//! 4 verdict failed (for CI gating).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mtdc_sim::analysis::{droop_equilibrium, droop_equilibrium_residual, gamma_sweep, violating_injection};
use mtdc_sim::controller::ControllerKind;
use mtdc_sim::error::{Error, Result};
use mtdc_sim::report::{run_scenario, MaybeVerdict};
use mtdc_sim::scenario::Scenario;

const EXIT_VERDICT_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "mtdc-sim", version, about = "Simulate and verify decentralized voltage control of multi-terminal HVDC grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to steady state; emit CSVs and a verdict report.
    Simulate {
        /// Scenario file (.scn)
        scenario: PathBuf,
        /// Override the controller kind declared in the scenario
        #[arg(long, value_parser = parse_kind)]
        controller: Option<ControllerKind>,
        /// Output directory for voltages.csv, injections.csv, line_currents.csv, report.json
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the integrator step, in microseconds
        #[arg(long)]
        step_us: Option<f64>,
        /// Override the integrator horizon, in milliseconds
        #[arg(long)]
        horizon_ms: Option<f64>,
    },
    /// Print the droop steady-state voltages and the linear-solve residual.
    Equilibrium {
        scenario: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        controller: Option<ControllerKind>,
    },
    /// Sweep the line-resistance scale and report current-sharing dispersion.
    VerifySharing {
        scenario: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        controller: Option<ControllerKind>,
        /// Descending resistance scale factors
        #[arg(long, value_delimiter = ',', default_value = "1,0.1,0.01,0.001")]
        gammas: Vec<f64>,
    },
    /// Construct an injection that drives the droop equilibrium out of range.
    Counterexample {
        scenario: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        controller: Option<ControllerKind>,
        /// Directory for the generated counterexample scenario
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn parse_kind(s: &str) -> std::result::Result<ControllerKind, String> {
    ControllerKind::parse(s).map_err(|_| format!("unknown controller kind '{s}'; use droop, pi, or deadband-pi"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate {
            scenario,
            controller,
            out,
            step_us,
            horizon_ms,
        } => {
            let mut scenario = Scenario::load(&scenario)?;
            if let Some(us) = step_us {
                scenario.integrator.step = us * 1e-6;
            }
            if let Some(ms) = horizon_ms {
                scenario.integrator.horizon = ms * 1e-3;
            }
            scenario.integrator.validate()?;
            let report = run_scenario(&scenario, controller, &out)?;

            println!("controller: {}", report.controller);
            println!(
                "converged: {} (t = {:.6} s, {} steps)",
                report.converged, report.final_time_s, report.total_steps
            );
            if let Some(failure) = &report.failure {
                println!("failure: {failure}");
            }
            let v_str: Vec<String> = report
                .range
                .final_voltages
                .iter()
                .map(|v| format!("{:.4}", v / 1e3))
                .collect();
            println!("final voltages [kV]: {}", v_str.join(" "));
            println!("range verdict: {}", if report.range.satisfied { "satisfied" } else { "VIOLATED" });
            match &report.sharing {
                MaybeVerdict::Evaluated(s) => println!(
                    "sharing verdict: {} (mu = {:.3} A, max relative residual {:.3e})",
                    if s.satisfied { "optimal within 1%" } else { "off optimum" },
                    s.mu,
                    s.max_relative_residual
                ),
                MaybeVerdict::NotApplicable { reason } => println!("sharing verdict: n/a ({reason})"),
            }
            match &report.lyapunov {
                MaybeVerdict::Evaluated(l) => println!(
                    "lyapunov: {} (W {:.6e} -> {:.6e}, max increase {:.3e})",
                    if l.nonincreasing { "nonincreasing" } else { "INCREASED" },
                    l.initial_value,
                    l.final_value,
                    l.max_increase
                ),
                MaybeVerdict::NotApplicable { reason } => println!("lyapunov: n/a ({reason})"),
            }
            println!("csv: {}", report.csv_files.voltages.display());
            println!("csv: {}", report.csv_files.injections.display());
            println!("csv: {}", report.csv_files.line_currents.display());
            println!("report: {}", out.join("report.json").display());

            if report.gate_passed() {
                Ok(ExitCode::SUCCESS)
            } else if report.failure.is_some() {
                Ok(ExitCode::from(3))
            } else {
                Ok(ExitCode::from(EXIT_VERDICT_FAILED))
            }
        }

        Command::Equilibrium { scenario, controller } => {
            let scenario = Scenario::load(&scenario)?;
            let kind = controller.unwrap_or(scenario.kind);
            if kind != ControllerKind::Droop {
                return Err(Error::UnsupportedKind(format!(
                    "equilibrium is the droop steady state; got controller kind {}",
                    kind.name()
                )));
            }
            let v = droop_equilibrium(&scenario.topology, &scenario.k_p, &scenario.v_nom, &scenario.injection)?;
            let residual =
                droop_equilibrium_residual(&scenario.topology, &scenario.k_p, &scenario.v_nom, &scenario.injection, &v);
            println!("droop equilibrium voltages [kV]:");
            for (i, vi) in v.iter().enumerate() {
                println!("  terminal {}: {:.6}", i + 1, vi / 1e3);
            }
            println!("relative residual: {residual:.3e}");
            Ok(ExitCode::SUCCESS)
        }

        Command::VerifySharing {
            scenario,
            controller,
            gammas,
        } => {
            let scenario = Scenario::load(&scenario)?;
            let kind = controller.unwrap_or(scenario.kind);
            if kind == ControllerKind::Pi {
                return Err(Error::UnsupportedKind(
                    "sharing analysis applies to droop (or deadband PI in its droop regime), not PI".to_string(),
                ));
            }
            let points = gamma_sweep(
                &scenario.topology,
                &scenario.k_p,
                &scenario.v_nom,
                &scenario.injection,
                &gammas,
            )?;
            println!("{:>10}  {:>14}  {:>22}", "gamma", "dispersion", "deviation from optimum");
            for p in &points {
                let dispersion = match p.dispersion {
                    Some(d) => format!("{d:.6e}"),
                    None => "zero-mean".to_string(),
                };
                println!("{:>10}  {:>14}  {:>22.6e}", p.gamma, dispersion, p.optimum_deviation);
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Counterexample {
            scenario,
            controller,
            out,
        } => {
            let scenario = Scenario::load(&scenario)?;
            let kind = controller.unwrap_or(scenario.kind);
            if kind != ControllerKind::Droop {
                return Err(Error::UnsupportedKind(format!(
                    "the range counterexample targets the droop law; got {}",
                    kind.name()
                )));
            }
            let injection = violating_injection(
                &scenario.topology,
                &scenario.k_p,
                &scenario.v_nom,
                &scenario.v_lo,
                &scenario.v_hi,
            )?;
            let v = droop_equilibrium(&scenario.topology, &scenario.k_p, &scenario.v_nom, &injection)?;

            let n = scenario.topology.n_terminals();
            let (worst, margin) = (0..n)
                .map(|i| {
                    let below = scenario.v_lo[i] - v[i];
                    let above = v[i] - scenario.v_hi[i];
                    (i, below.max(above))
                })
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();

            let mut counterexample = scenario.with_injection(injection)?;
            counterexample.kind = ControllerKind::Droop;
            std::fs::create_dir_all(&out)
                .map_err(|e| Error::validation(format!("cannot create {}: {e}", out.display())))?;
            let path = out.join("counterexample.scn");
            std::fs::write(&path, counterexample.emit())
                .map_err(|e| Error::validation(format!("cannot write {}: {e}", path.display())))?;

            println!("injection [A]: {:?}", counterexample.injection.currents());
            println!(
                "terminal {} leaves the operating range by {:.3} V at the droop equilibrium",
                worst + 1,
                margin
            );
            println!("scenario written to {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

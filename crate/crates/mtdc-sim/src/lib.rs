//! Deterministic simulation and verification toolkit for voltage control of
//! multi-terminal HVDC (MTDC) grids.
//!
//! An MTDC grid is a set of converter terminals, each with a lumped
//! capacitance, joined by resistive lines. Uncontrolled current injections
//! disturb the terminal voltages; a decentralized controller at each terminal
//! injects a correcting current based on local measurements only. This crate
//! models the grid, implements three controller families, integrates the
//! closed loop, and verifies what each controller can and cannot deliver:
//!
//! * [`grid`] — topology, weighted Laplacian, Ohm's-law line currents, and
//!   the terminal voltage dynamics.
//! * [`controller`] — droop (proportional), PI, and deadband-PI laws behind
//!   one interface.
//! * [`integrator`] — fixed-step RK4 with trajectory recording, steady-state
//!   detection, and horizon auto-extension.
//! * [`analysis`] — droop equilibria, the current-sharing optimum with an
//!   independent KKT oracle, certified range violations for droop, the
//!   low-resistance sharing limit, PI locality, Lyapunov monitoring, and
//!   operating-range verdicts.
//! * [`scenario`] — a unit-checked text format describing a complete run.
//! * [`report`] — CSV emission and machine-readable run verdicts behind the
//!   `mtdc-sim` command-line tool.
//!
//! The headline trade-off the toolkit makes inspectable: droop keeps the grid
//! sharing current proportionally but cannot bound the voltages; PI pins the
//! voltages but kills sharing entirely; deadband PI steers every voltage into
//! the operating range while behaving like droop whenever the band is not
//! binding.

pub mod analysis;
pub mod controller;
pub mod error;
pub mod grid;
pub mod integrator;
pub mod report;
pub mod scenario;

pub use analysis::{
    deadband_droop_equivalence, droop_equilibrium, gamma_sweep, lyapunov_monitor, lyapunov_value,
    optimal_sharing, pi_locality_check, qp_oracle, range_verdict, sharing_verdict,
    stationary_integrator_state, violating_injection, EquivalenceReport, GammaSweepPoint,
    LyapunovSample, LyapunovTrace, RangeVerdict, SharingOptimum, SharingVerdict,
};
pub use controller::{deadband, ControllerConfig, ControllerKind};
pub use error::{Error, Result};
pub use grid::{GridTopology, Injection, Laplacian, Line};
pub use integrator::{
    simulate, simulate_to_steady, step, IntegratorConfig, SteadyStateRun, SystemState, Trajectory,
};
pub use report::{run_scenario, RunReport};
pub use scenario::Scenario;

//! Closed-form results and numerical verdicts for the closed-loop behavior:
//! droop equilibria, optimal current sharing and its KKT oracle, deliberate
//! range violations, the low-resistance sharing limit, PI locality, Lyapunov
//! monitoring for the deadband controller, and operating-range verdicts.
//!
//! The current-sharing optimum minimizes `sum_i f_i u_i^2 / 2` subject to the
//! network balance `L V = I_inj + u`. Feasibility only constrains the total,
//! `1^T (I_inj + u) = 0`, so the optimum has the closed form
//! `u* = mu F^{-1} 1` with `mu = -(sum_i I_i) / (sum_i 1/f_i)`: terminals
//! share current inversely to their cost coefficients. [`qp_oracle`] solves
//! the same program as an explicit KKT linear system and is kept independent
//! of the closed form so each path checks the other.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::controller::{deadband, ControllerConfig, ControllerKind};
use crate::error::{Error, Result};
use crate::grid::{GridTopology, Injection};
use crate::integrator::{simulate, IntegratorConfig, SystemState, Trajectory};

/// Comparison of an achieved control vector against the sharing optimum.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SharingVerdict {
    /// KKT multiplier of the balance constraint.
    pub mu: f64,
    /// Optimal injections `mu / f_i` per terminal.
    pub u_optimal: Vec<f64>,
    pub u_achieved: Vec<f64>,
    /// Max over terminals of |achieved - optimal| relative to ||u*||_inf
    /// (absolute amperes when the optimum is the zero vector).
    pub max_relative_residual: f64,
    pub satisfied: bool,
}

/// Closed-form optimum of the current-sharing program.
#[derive(Debug, Clone, PartialEq)]
pub struct SharingOptimum {
    pub mu: f64,
    pub u: Vec<f64>,
}

/// Final-voltage margins against the operating range.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RangeVerdict {
    pub final_voltages: Vec<f64>,
    /// `V_i - Vlo_i`; negative means the lower bound is violated.
    pub lower_margins: Vec<f64>,
    /// `Vhi_i - V_i`; negative means the upper bound is violated.
    pub upper_margins: Vec<f64>,
    pub satisfied: bool,
}

/// Value of the deadband Lyapunov function at one time instant.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LyapunovSample {
    pub t: f64,
    pub value: f64,
}

/// Lyapunov values along a trajectory plus the monotonicity check.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovTrace {
    pub samples: Vec<LyapunovSample>,
    /// Largest increase between consecutive samples (0 when never increasing).
    pub max_increase: f64,
    /// Increase allowed by roundoff: 1e-9 * max(1, W(t0)).
    pub tolerance: f64,
    pub nonincreasing: bool,
}

/// One resistance-scale point of the sharing sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSweepPoint {
    pub gamma: f64,
    /// Droop injections at the scaled-resistance equilibrium.
    pub u: Vec<f64>,
    /// Spread of the per-terminal shares u_i/Kp_i relative to their mean;
    /// `None` when the injections sum to zero and the shares vanish.
    pub dispersion: Option<f64>,
    /// Max deviation of `u` from the sharing optimum with `F^{-1} = Kp`,
    /// relative to ||u*||_inf (absolute amperes when u* = 0).
    pub optimum_deviation: f64,
}

/// Outcome of the twin deadband-PI / droop comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    /// Max over compared samples of ||V_deadband - V_droop||_inf (volts).
    pub max_voltage_deviation: f64,
    pub samples_compared: usize,
}

fn check_same_len(name: &str, len: usize, n: usize) -> Result<()> {
    if len != n {
        return Err(Error::validation(format!(
            "{name} has {len} entries for {n} terminals"
        )));
    }
    Ok(())
}

fn droop_system_matrix(topology: &GridTopology, k_p: &[f64]) -> DMatrix<f64> {
    let mut m = topology.laplacian().matrix().clone();
    for i in 0..topology.n_terminals() {
        m[(i, i)] += k_p[i];
    }
    m
}

/// Steady-state voltages of the droop-controlled grid:
/// `V = Vnom + (L + Kp)^{-1} I_inj`.
pub fn droop_equilibrium(
    topology: &GridTopology,
    k_p: &[f64],
    v_nom: &[f64],
    injection: &Injection,
) -> Result<Vec<f64>> {
    let n = topology.n_terminals();
    check_same_len("k_p", k_p.len(), n)?;
    check_same_len("v_nom", v_nom.len(), n)?;
    check_same_len("injection", injection.currents().len(), n)?;
    if let Some(i) = k_p.iter().position(|&g| !g.is_finite() || g < 0.0) {
        return Err(Error::validation(format!(
            "droop gain at terminal {} must be nonnegative and finite",
            i + 1
        )));
    }
    let m = droop_system_matrix(topology, k_p);
    let chol = Cholesky::new(m).ok_or_else(|| {
        Error::Singular("L + Kp is not positive definite; all droop gains are zero".to_string())
    })?;
    // A vanishing pivot means Kp ~ 0 and the Laplacian kernel survives;
    // Cholesky can succeed on such a matrix through roundoff alone, with the
    // dead pivot showing up at sqrt(eps) scale.
    let factor_diag = chol.l_dirty().diagonal();
    let max_pivot = factor_diag.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if factor_diag.iter().any(|&d| d.abs() <= 1e-7 * max_pivot) {
        return Err(Error::Singular(
            "L + Kp is numerically singular; all droop gains are zero".to_string(),
        ));
    }
    let shift = chol.solve(&DVector::from_column_slice(injection.currents()));
    Ok((0..n).map(|i| v_nom[i] + shift[i]).collect())
}

/// Relative residual `||(L + Kp)(V - Vnom) - I_inj|| / max(||I_inj||, 1)`.
pub fn droop_equilibrium_residual(
    topology: &GridTopology,
    k_p: &[f64],
    v_nom: &[f64],
    injection: &Injection,
    voltages: &[f64],
) -> f64 {
    let n = topology.n_terminals();
    let m = droop_system_matrix(topology, k_p);
    let shift = DVector::from_iterator(n, (0..n).map(|i| voltages[i] - v_nom[i]));
    let residual = &m * &shift - DVector::from_column_slice(injection.currents());
    residual.norm() / DVector::from_column_slice(injection.currents()).norm().max(1.0)
}

/// Closed-form optimum of the sharing program.
pub fn optimal_sharing(f: &[f64], injection: &Injection) -> Result<SharingOptimum> {
    check_same_len("cost coefficients", f.len(), injection.currents().len())?;
    if let Some(i) = f.iter().position(|&c| !c.is_finite() || c <= 0.0) {
        return Err(Error::validation(format!(
            "cost coefficient at terminal {} must be positive and finite",
            i + 1
        )));
    }
    let total: f64 = injection.total();
    let inv_sum: f64 = f.iter().map(|c| 1.0 / c).sum();
    let mu = -total / inv_sum;
    let u = f.iter().map(|c| mu / c).collect();
    Ok(SharingOptimum { mu, u })
}

/// Compares an achieved control vector against the sharing optimum at the
/// given relative tolerance.
pub fn sharing_verdict(f: &[f64], injection: &Injection, u_achieved: &[f64], rel_tol: f64) -> Result<SharingVerdict> {
    check_same_len("achieved control", u_achieved.len(), f.len())?;
    let optimum = optimal_sharing(f, injection)?;
    let scale = optimum
        .u
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let denom = if scale > 1e-300 && optimum.u.iter().any(|&x| x != 0.0) {
        scale
    } else {
        1.0
    };
    let max_relative_residual = optimum
        .u
        .iter()
        .zip(u_achieved)
        .fold(0.0f64, |m, (a, b)| m.max((b - a).abs() / denom));
    Ok(SharingVerdict {
        mu: optimum.mu,
        u_optimal: optimum.u,
        u_achieved: u_achieved.to_vec(),
        max_relative_residual,
        satisfied: max_relative_residual <= rel_tol,
    })
}

/// Solves the sharing program as an explicit KKT system in the n+1 unknowns
/// `(u, mu)`:
///
/// ```text
/// [ diag(f)  -1 ] [ u  ]   [ 0          ]
/// [ 1^T       0 ] [ mu ] = [ -sum I_inj ]
/// ```
///
/// The balance constraint collapses to its image-space condition
/// `1^T (I_inj + u) = 0`, since the Laplacian of a connected grid reaches
/// every total-zero vector. Independent of [`optimal_sharing`] by design.
pub fn qp_oracle(f: &[f64], injection: &Injection, topology: &GridTopology) -> Result<Vec<f64>> {
    let n = topology.n_terminals();
    check_same_len("cost coefficients", f.len(), n)?;
    check_same_len("injection", injection.currents().len(), n)?;
    if let Some(i) = f.iter().position(|&c| !c.is_finite() || c <= 0.0) {
        return Err(Error::validation(format!(
            "cost coefficient at terminal {} must be positive and finite",
            i + 1
        )));
    }
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        m[(i, i)] = f[i];
        m[(i, n)] = -1.0;
        m[(n, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = -injection.total();
    let solution = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("KKT system is singular".to_string()))?;
    Ok(solution.as_slice()[..n].to_vec())
}

/// Constructs an injection under which the droop equilibrium leaves the
/// operating range by at least 1% of the band width at some terminal.
///
/// The injection is `c (L + Kp) 1` for a scalar `c < 0`; since the Laplacian
/// annihilates the all-ones vector this shifts every equilibrium voltage by
/// exactly `c`. The returned injection is verified against
/// [`droop_equilibrium`] before being handed back, doubling `c` if the first
/// prediction falls short.
pub fn violating_injection(
    topology: &GridTopology,
    k_p: &[f64],
    v_nom: &[f64],
    v_lo: &[f64],
    v_hi: &[f64],
) -> Result<Injection> {
    let n = topology.n_terminals();
    check_same_len("k_p", k_p.len(), n)?;
    check_same_len("v_nom", v_nom.len(), n)?;
    check_same_len("v_lo", v_lo.len(), n)?;
    check_same_len("v_hi", v_hi.len(), n)?;
    if let Some(i) = (0..n).find(|&i| v_lo[i] > v_hi[i]) {
        return Err(Error::validation(format!(
            "voltage bounds inverted at terminal {}",
            i + 1
        )));
    }

    let m = droop_system_matrix(topology, k_p);
    let base: Vec<f64> = (0..n).map(|i| m.row(i).sum()).collect(); // (L + Kp) 1

    // Push every voltage down past the lower bound with some margin.
    let mut c = (0..n)
        .map(|i| {
            let band = v_hi[i] - v_lo[i];
            let margin = (0.02 * band).max(1.0);
            (v_lo[i] - v_nom[i]) - margin
        })
        .fold(f64::INFINITY, f64::min);

    for _ in 0..64 {
        let injection = Injection::new(n, base.iter().map(|b| c * b).collect())?;
        let v = droop_equilibrium(topology, k_p, v_nom, &injection)?;
        let violated = (0..n).any(|i| {
            let band = v_hi[i] - v_lo[i];
            let required = (0.01 * band).max(f64::MIN_POSITIVE);
            v[i] < v_lo[i] - required || v[i] > v_hi[i] + required
        });
        if violated {
            return Ok(injection);
        }
        c *= 2.0;
    }
    Err(Error::Singular(
        "could not certify a range violation; bounds appear unbounded".to_string(),
    ))
}

/// Droop sharing behavior as all line resistances are scaled by each `gamma`.
///
/// Dispersion is the spread of the shares `u_i / Kp_i` over their mean; the
/// optimum deviation measures `u` against the sharing optimum for
/// `F^{-1} = Kp`, which the droop loop attains as the resistances vanish.
pub fn gamma_sweep(
    topology: &GridTopology,
    k_p: &[f64],
    v_nom: &[f64],
    injection: &Injection,
    gammas: &[f64],
) -> Result<Vec<GammaSweepPoint>> {
    if gammas.is_empty() {
        return Err(Error::validation("gamma sweep needs at least one scale factor"));
    }
    if gammas.iter().any(|&g| !g.is_finite() || g <= 0.0) {
        return Err(Error::validation("gamma values must be positive and finite"));
    }
    if gammas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::validation("gamma values must be strictly descending"));
    }
    let n = topology.n_terminals();
    check_same_len("k_p", k_p.len(), n)?;

    let f: Vec<f64> = k_p.iter().map(|&g| 1.0 / g).collect();
    let optimum = optimal_sharing(&f, injection)?;
    let opt_scale = optimum.u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let total = injection.total();
    let total_scale: f64 = injection.currents().iter().map(|x| x.abs()).sum::<f64>().max(1.0);
    let zero_mean = total.abs() <= 1e-12 * total_scale;

    gammas
        .iter()
        .map(|&gamma| {
            let scaled = topology.with_scaled_resistances(gamma)?;
            let v = droop_equilibrium(&scaled, k_p, v_nom, injection)?;
            let u: Vec<f64> = (0..n).map(|i| -k_p[i] * (v[i] - v_nom[i])).collect();
            let shares: Vec<f64> = (0..n).map(|i| u[i] / k_p[i]).collect();
            let dispersion = if zero_mean {
                None
            } else {
                let mean = shares.iter().sum::<f64>() / n as f64;
                let spread = shares.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s))
                    - shares.iter().fold(f64::INFINITY, |m, &s| m.min(s));
                Some(spread / mean.abs())
            };
            let denom = if opt_scale > 0.0 { opt_scale } else { 1.0 };
            let optimum_deviation = u
                .iter()
                .zip(&optimum.u)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / denom));
            Ok(GammaSweepPoint {
                gamma,
                u,
                dispersion,
                optimum_deviation,
            })
        })
        .collect()
}

/// Max deviation of the final PI control from local compensation, i.e.
/// `||u(T) + I_inj||_inf`. At the PI steady state every disturbance is
/// compensated where it enters, so this vanishes as the run settles.
pub fn pi_locality_check(cfg: &ControllerConfig, trajectory: &Trajectory, injection: &Injection) -> Result<f64> {
    if cfg.kind() != ControllerKind::Pi {
        return Err(Error::UnsupportedKind(format!(
            "PI locality check needs a PI trajectory, got {}",
            cfg.kind().name()
        )));
    }
    if !trajectory.converged() {
        return Err(Error::NotAtSteadyState {
            t: trajectory.final_state().t,
        });
    }
    let final_state = trajectory.final_state();
    let u = cfg.control_output(&final_state.v, &final_state.z)?;
    Ok(u.iter()
        .zip(injection.currents())
        .fold(0.0f64, |m, (ui, ii)| m.max((ui + ii).abs())))
}

/// The integrator state `z0` with `L Vnom - Ki z0 + I_inj = 0`, the reference
/// point of the Lyapunov function. `Ki` is diagonal, so this is a
/// per-terminal division.
pub fn stationary_integrator_state(
    topology: &GridTopology,
    cfg: &ControllerConfig,
    injection: &Injection,
) -> Result<Vec<f64>> {
    let n = topology.n_terminals();
    check_same_len("controller", cfg.n(), n)?;
    check_same_len("injection", injection.currents().len(), n)?;
    if cfg.k_i().contains(&0.0) {
        return Err(Error::validation(
            "stationary integrator state undefined: integral gain is zero",
        ));
    }
    let coupling = topology.laplacian().apply(cfg.v_nom());
    Ok((0..n)
        .map(|i| (coupling[i] + injection.currents()[i]) / cfg.k_i()[i])
        .collect())
}

/// Lyapunov function of the deadband closed loop:
/// `W = d(V)^T C d(V) / 2 + (z - z0)^T Ki (z - z0) / 2`
/// with `d` the band excess. Nonnegative; zero exactly on the set where the
/// voltage sits in the band and the integrator rests at `z0`.
pub fn lyapunov_value(
    cfg: &ControllerConfig,
    topology: &GridTopology,
    state: &SystemState,
    z0: &[f64],
) -> Result<LyapunovSample> {
    if cfg.kind() == ControllerKind::Droop {
        return Err(Error::UnsupportedKind(
            "Lyapunov function is defined for the integral controllers".to_string(),
        ));
    }
    let n = topology.n_terminals();
    check_same_len("state", state.n(), n)?;
    check_same_len("z0", z0.len(), n)?;
    let excess = deadband(&state.v, cfg.v_lo(), cfg.v_hi())?;
    let caps = topology.capacitances();
    let mut value = 0.0;
    for i in 0..n {
        let dz = state.z[i] - z0[i];
        value += 0.5 * caps[i] * excess[i] * excess[i] + 0.5 * cfg.k_i()[i] * dz * dz;
    }
    Ok(LyapunovSample { t: state.t, value })
}

/// Evaluates the Lyapunov function along recorded samples and checks that it
/// never increases beyond roundoff (1e-9 relative to max(1, W at the start)).
pub fn lyapunov_monitor(
    topology: &GridTopology,
    cfg: &ControllerConfig,
    injection: &Injection,
    samples: &[SystemState],
) -> Result<LyapunovTrace> {
    if samples.is_empty() {
        return Err(Error::validation("Lyapunov monitor needs at least one sample"));
    }
    let z0 = stationary_integrator_state(topology, cfg, injection)?;
    let values: Vec<LyapunovSample> = samples
        .iter()
        .map(|s| lyapunov_value(cfg, topology, s, &z0))
        .collect::<Result<_>>()?;
    let tolerance = 1e-9 * values[0].value.max(1.0);
    let max_increase = values
        .windows(2)
        .fold(0.0f64, |m, w| m.max(w[1].value - w[0].value));
    Ok(LyapunovTrace {
        nonincreasing: max_increase <= tolerance,
        samples: values,
        max_increase,
        tolerance,
    })
}

/// Checks the final voltages against the operating range with a tolerance in
/// volts (1 V on a 100 kV scale by default at the CLI).
pub fn range_verdict(final_voltages: &[f64], v_lo: &[f64], v_hi: &[f64], tolerance: f64) -> Result<RangeVerdict> {
    let n = final_voltages.len();
    check_same_len("v_lo", v_lo.len(), n)?;
    check_same_len("v_hi", v_hi.len(), n)?;
    if !tolerance.is_finite() || tolerance < 0.0 {
        return Err(Error::validation("range tolerance must be nonnegative"));
    }
    let lower_margins: Vec<f64> = (0..n).map(|i| final_voltages[i] - v_lo[i]).collect();
    let upper_margins: Vec<f64> = (0..n).map(|i| v_hi[i] - final_voltages[i]).collect();
    let satisfied = lower_margins
        .iter()
        .chain(&upper_margins)
        .all(|&m| m >= -tolerance);
    Ok(RangeVerdict {
        final_voltages: final_voltages.to_vec(),
        lower_margins,
        upper_margins,
        satisfied,
    })
}

/// Runs the deadband-PI loop and its droop twin from the same initial
/// voltages and reports the worst voltage deviation between the two.
///
/// Precondition: the disturbance is small enough that the deadband run never
/// leaves the band, so its integrator stays at exactly zero and both loops
/// coincide. A band exit is reported as [`Error::BandExit`] — a violated
/// precondition, not a failed property.
pub fn deadband_droop_equivalence(
    topology: &GridTopology,
    cfg: &ControllerConfig,
    injection: &Injection,
    initial: &SystemState,
    icfg: &IntegratorConfig,
) -> Result<EquivalenceReport> {
    if cfg.kind() != ControllerKind::DeadbandPi {
        return Err(Error::UnsupportedKind(
            "equivalence check starts from a deadband-PI config".to_string(),
        ));
    }
    if initial.z.iter().any(|&z| z != 0.0) {
        return Err(Error::validation("equivalence check requires z(0) = 0"));
    }
    let deadband_run = simulate(topology, cfg, injection, initial, icfg)?;
    for s in deadband_run.samples().iter().chain([deadband_run.final_state()]) {
        if s.z.iter().any(|&z| z != 0.0) {
            return Err(Error::BandExit { t: s.t });
        }
    }
    let droop_cfg = cfg.with_kind(ControllerKind::Droop, 0.0)?;
    let droop_run = simulate(topology, &droop_cfg, injection, initial, icfg)?;

    let mut max_dev = 0.0f64;
    let compared = deadband_run.samples().len().min(droop_run.samples().len());
    for (a, b) in deadband_run.samples().iter().zip(droop_run.samples()) {
        for (x, y) in a.v.iter().zip(&b.v) {
            max_dev = max_dev.max((x - y).abs());
        }
    }
    for (x, y) in deadband_run.final_state().v.iter().zip(&droop_run.final_state().v) {
        max_dev = max_dev.max((x - y).abs());
    }
    Ok(EquivalenceReport {
        max_voltage_deviation: max_dev,
        samples_compared: compared,
    })
}

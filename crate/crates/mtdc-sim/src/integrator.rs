//! Fixed-step RK4 integration of the closed loop (grid dynamics plus
//! controller state), with trajectory recording and steady-state detection.
//!
//! The closed-loop right-hand side is affine in `(V, z)` except for the
//! deadband hinge, so it is precompiled into a small dense operator once per
//! run and evaluated with flat loops; microsecond steps over second-scale
//! horizons stay cheap. Everything is deterministic: identical inputs produce
//! bit-identical trajectories on the same build.
//!
//! Termination: a run ends early (flagged as converged) once the max-norm of
//! the full state derivative, `||dV/dt||_inf` and `||dz/dt||_inf`, drops below
//! the configured tolerance. [`simulate_to_steady`] keeps extending the
//! horizon past the configured one, recording ever more sparsely, until the
//! run converges or a hard step budget runs out.

use crate::controller::{ControllerConfig, ControllerKind};
use crate::error::{Error, Result};
use crate::grid::{GridTopology, Injection};

/// Joint state of the closed loop at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    /// Time in seconds.
    pub t: f64,
    /// Terminal voltages in volts.
    pub v: Vec<f64>,
    /// Controller integrator states in volt-seconds.
    pub z: Vec<f64>,
}

impl SystemState {
    pub fn new(t: f64, v: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        let state = SystemState { t, v, z };
        state.validate()?;
        Ok(state)
    }

    /// All terminals at the given voltage, integrators at zero, t = 0.
    pub fn flat(n: usize, voltage: f64) -> Self {
        SystemState {
            t: 0.0,
            v: vec![voltage; n],
            z: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    fn validate(&self) -> Result<()> {
        if self.v.len() != self.z.len() {
            return Err(Error::validation(format!(
                "state has {} voltages but {} integrator states",
                self.v.len(),
                self.z.len()
            )));
        }
        if !self.t.is_finite()
            || self.v.iter().any(|x| !x.is_finite())
            || self.z.iter().any(|x| !x.is_finite())
        {
            return Err(Error::validation("system state contains non-finite values"));
        }
        Ok(())
    }
}

/// Step size, horizon, and recording settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    /// Step size h in seconds.
    pub step: f64,
    /// Horizon T in seconds; the run covers [t0, t0 + T] unless it settles first.
    pub horizon: f64,
    /// Steady-state threshold on ||dV/dt||_inf (V/s) and ||dz/dt||_inf (V).
    pub steady_state_tol: f64,
    /// Record every this-many steps.
    pub record_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            step: 1e-6,
            horizon: 1.5e-3,
            steady_state_tol: 1e-3,
            record_stride: 10,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.step.is_finite() || self.step <= 0.0 {
            return Err(Error::validation(format!("step must be positive, got {}", self.step)));
        }
        if !self.horizon.is_finite() || self.horizon < self.step {
            return Err(Error::validation(format!(
                "horizon {} must be at least one step {}",
                self.horizon, self.step
            )));
        }
        if !self.steady_state_tol.is_finite() || self.steady_state_tol <= 0.0 {
            return Err(Error::validation("steady-state tolerance must be positive"));
        }
        if self.record_stride == 0 {
            return Err(Error::validation("record stride must be at least 1"));
        }
        Ok(())
    }
}

/// Samples of one run at uniform spacing `record_stride * step`, plus the
/// exact final state (which may fall between recording points when the run
/// stops early).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<SystemState>,
    step: f64,
    record_stride: usize,
    converged: bool,
    final_state: SystemState,
    steps_taken: u64,
}

impl Trajectory {
    pub fn samples(&self) -> &[SystemState] {
        &self.samples
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn record_stride(&self) -> usize {
        self.record_stride
    }

    /// True when the run stopped because the state derivative dropped below
    /// the steady-state tolerance.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn final_state(&self) -> &SystemState {
        &self.final_state
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }
}

/// Precompiled closed-loop right-hand side.
///
/// The voltage block is affine: `dV = A v + b - (Ki/C) z` with
/// `A = -diag(1/C) (L + Kp)` and `b = diag(1/C) (Kp Vnom + I_inj)`.
/// The integrator block dispatches on the controller kind. The composition
/// is identical (up to floating-point association) to
/// `dynamics_rhs(V, I_inj, control_output(V, z))` paired with
/// `state_derivative(V)`; a property test pins that equivalence.
pub(crate) struct ClosedLoop {
    n: usize,
    kind: ControllerKind,
    /// Row-major n x n: -(L[i][j] + [i==j] Kp_i) / C_i.
    a_vv: Vec<f64>,
    /// -Ki_i / C_i (exactly -0.0 for droop).
    neg_ki_over_c: Vec<f64>,
    /// (Kp_i Vnom_i + I_inj_i) / C_i.
    forcing: Vec<f64>,
    v_nom: Vec<f64>,
    v_lo: Vec<f64>,
    v_hi: Vec<f64>,
}

impl ClosedLoop {
    pub(crate) fn new(topology: &GridTopology, cfg: &ControllerConfig, injection: &Injection) -> Result<Self> {
        let n = topology.n_terminals();
        if cfg.n() != n || injection.currents().len() != n {
            return Err(Error::validation(format!(
                "closed loop dimensions disagree: {} terminals, {} controller entries, {} injections",
                n,
                cfg.n(),
                injection.currents().len()
            )));
        }
        let lap = topology.laplacian().matrix();
        let caps = topology.capacitances();
        let mut a_vv = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let coupling = lap[(i, j)] + if i == j { cfg.k_p()[i] } else { 0.0 };
                a_vv[i * n + j] = -coupling / caps[i];
            }
        }
        let neg_ki_over_c = (0..n).map(|i| -cfg.k_i()[i] / caps[i]).collect();
        let forcing = (0..n)
            .map(|i| (cfg.k_p()[i] * cfg.v_nom()[i] + injection.currents()[i]) / caps[i])
            .collect();
        Ok(ClosedLoop {
            n,
            kind: cfg.kind(),
            a_vv,
            neg_ki_over_c,
            forcing,
            v_nom: cfg.v_nom().to_vec(),
            v_lo: cfg.v_lo().to_vec(),
            v_hi: cfg.v_hi().to_vec(),
        })
    }

    pub(crate) fn dim(&self) -> usize {
        2 * self.n
    }

    #[cfg(test)]
    pub(crate) fn a_vv_entry(&self, i: usize, j: usize) -> f64 {
        self.a_vv[i * self.n + j]
    }

    /// dy/dt for the packed state y = [V, z].
    #[inline]
    pub(crate) fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let (v, z) = y.split_at(n);
        let (dv, dz) = dy.split_at_mut(n);
        for i in 0..n {
            let row = &self.a_vv[i * n..(i + 1) * n];
            let mut acc = self.forcing[i];
            for (a, vj) in row.iter().zip(v.iter()) {
                acc += a * vj;
            }
            dv[i] = acc + self.neg_ki_over_c[i] * z[i];
        }
        match self.kind {
            ControllerKind::Droop => dz.fill(0.0),
            ControllerKind::Pi => {
                for i in 0..n {
                    dz[i] = v[i] - self.v_nom[i];
                }
            }
            ControllerKind::DeadbandPi => {
                for i in 0..n {
                    dz[i] = (v[i] - self.v_hi[i]).max(0.0) - (self.v_lo[i] - v[i]).max(0.0);
                }
            }
        }
    }
}

struct Rk4Buffers {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
    prev: Vec<f64>,
}

impl Rk4Buffers {
    fn new(dim: usize) -> Self {
        Rk4Buffers {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            stage: vec![0.0; dim],
            prev: vec![0.0; dim],
        }
    }
}

/// One classical RK4 update of `y` in place. `buf.k1` must already hold the
/// derivative at `y` (the caller computes it for the steady-state check).
#[allow(clippy::needless_range_loop)] // lockstep over y and the stage buffers
#[inline]
fn rk4_advance(cl: &ClosedLoop, y: &mut [f64], h: f64, buf: &mut Rk4Buffers) {
    let half = 0.5 * h;
    let sixth = h / 6.0;
    buf.prev.copy_from_slice(y);
    for i in 0..y.len() {
        buf.stage[i] = y[i] + half * buf.k1[i];
    }
    cl.rhs(&buf.stage, &mut buf.k2);
    for i in 0..y.len() {
        buf.stage[i] = y[i] + half * buf.k2[i];
    }
    cl.rhs(&buf.stage, &mut buf.k3);
    for i in 0..y.len() {
        buf.stage[i] = y[i] + h * buf.k3[i];
    }
    cl.rhs(&buf.stage, &mut buf.k4);
    for i in 0..y.len() {
        y[i] += sixth * (buf.k1[i] + 2.0 * (buf.k2[i] + buf.k3[i]) + buf.k4[i]);
    }
}

/// Replays a failed step stage by stage to name the first non-finite one.
fn diagnose_stage(cl: &ClosedLoop, h: f64, buf: &mut Rk4Buffers) -> &'static str {
    let y = buf.prev.clone();
    let dim = y.len();
    let half = 0.5 * h;
    let mut k = vec![0.0; dim];
    let mut stage = vec![0.0; dim];
    cl.rhs(&y, &mut k);
    if !k.iter().all(|x| x.is_finite()) {
        return "stage k1";
    }
    for i in 0..dim {
        stage[i] = y[i] + half * k[i];
    }
    let mut k2 = vec![0.0; dim];
    cl.rhs(&stage, &mut k2);
    if !k2.iter().all(|x| x.is_finite()) {
        return "stage k2";
    }
    for i in 0..dim {
        stage[i] = y[i] + half * k2[i];
    }
    let mut k3 = vec![0.0; dim];
    cl.rhs(&stage, &mut k3);
    if !k3.iter().all(|x| x.is_finite()) {
        return "stage k3";
    }
    for i in 0..dim {
        stage[i] = y[i] + h * k3[i];
    }
    let mut k4 = vec![0.0; dim];
    cl.rhs(&stage, &mut k4);
    if !k4.iter().all(|x| x.is_finite()) {
        return "stage k4";
    }
    "state update"
}

fn pack(state: &SystemState) -> Vec<f64> {
    let mut y = Vec::with_capacity(2 * state.n());
    y.extend_from_slice(&state.v);
    y.extend_from_slice(&state.z);
    y
}

fn unpack(t: f64, y: &[f64], n: usize) -> SystemState {
    SystemState {
        t,
        v: y[..n].to_vec(),
        z: y[n..].to_vec(),
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Advances the closed loop by one RK4 step of size `h`.
pub fn step(
    topology: &GridTopology,
    cfg: &ControllerConfig,
    injection: &Injection,
    state: &SystemState,
    h: f64,
) -> Result<SystemState> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::validation(format!("step size must be positive, got {h}")));
    }
    state.validate()?;
    if state.n() != topology.n_terminals() {
        return Err(Error::validation("state dimension does not match topology"));
    }
    let cl = ClosedLoop::new(topology, cfg, injection)?;
    let mut buf = Rk4Buffers::new(cl.dim());
    let mut y = pack(state);
    cl.rhs(&y, &mut buf.k1);
    rk4_advance(&cl, &mut y, h, &mut buf);
    if !y.iter().all(|x| x.is_finite()) {
        let stage = diagnose_stage(&cl, h, &mut buf);
        return Err(Error::NumericalBlowup { t: state.t, stage });
    }
    Ok(unpack(state.t + h, &y, state.n()))
}

struct RunOutcome {
    samples: Vec<SystemState>,
    final_state: SystemState,
    converged: bool,
    steps_taken: u64,
    failure: Option<Error>,
}

fn run_block(
    cl: &ClosedLoop,
    buf: &mut Rk4Buffers,
    initial: &SystemState,
    icfg: &IntegratorConfig,
) -> RunOutcome {
    let n = initial.n();
    let h = icfg.step;
    let t0 = initial.t;
    let n_steps = (icfg.horizon / h).round().max(1.0) as u64;

    let mut y = pack(initial);
    let mut samples = vec![initial.clone()];
    let mut converged = false;
    let mut failure = None;
    let mut k: u64 = 0;

    loop {
        cl.rhs(&y, &mut buf.k1);
        if max_abs(&buf.k1) < icfg.steady_state_tol {
            converged = true;
            break;
        }
        if k == n_steps {
            break;
        }
        rk4_advance(cl, &mut y, h, buf);
        k += 1;
        if !y.iter().all(|x| x.is_finite()) {
            let stage = diagnose_stage(cl, h, buf);
            let t_fail = t0 + (k - 1) as f64 * h;
            failure = Some(Error::NumericalBlowup { t: t_fail, stage });
            y.copy_from_slice(&buf.prev);
            k -= 1;
            break;
        }
        if k.is_multiple_of(icfg.record_stride as u64) {
            samples.push(unpack(t0 + k as f64 * h, &y, n));
        }
    }

    let final_state = unpack(t0 + k as f64 * h, &y, n);
    RunOutcome {
        samples,
        final_state,
        converged,
        steps_taken: k,
        failure,
    }
}

/// Integrates the closed loop over `[t0, t0 + horizon]`, recording every
/// `record_stride` steps. Stops early, flagged as converged, once the state
/// derivative falls below the steady-state tolerance. The per-sample control
/// input is recomputable via [`ControllerConfig::control_output`].
pub fn simulate(
    topology: &GridTopology,
    cfg: &ControllerConfig,
    injection: &Injection,
    initial: &SystemState,
    icfg: &IntegratorConfig,
) -> Result<Trajectory> {
    icfg.validate()?;
    initial.validate()?;
    if initial.n() != topology.n_terminals() {
        return Err(Error::validation("initial state dimension does not match topology"));
    }
    let cl = ClosedLoop::new(topology, cfg, injection)?;
    let mut buf = Rk4Buffers::new(cl.dim());
    let outcome = run_block(&cl, &mut buf, initial, icfg);
    if let Some(err) = outcome.failure {
        return Err(err);
    }
    Ok(Trajectory {
        samples: outcome.samples,
        step: icfg.step,
        record_stride: icfg.record_stride,
        converged: outcome.converged,
        final_state: outcome.final_state,
        steps_taken: outcome.steps_taken,
    })
}

/// Hard budget on the total number of RK4 steps a [`simulate_to_steady`] call
/// may spend across all extensions.
pub const MAX_TOTAL_STEPS: u64 = 400_000_000;

/// A run extended past its configured horizon until steady state.
///
/// Samples are strictly increasing in time but not uniformly spaced: each
/// extension block records sparser than the previous one so that arbitrarily
/// long settling phases stay in bounded memory.
#[derive(Debug, Clone)]
pub struct SteadyStateRun {
    pub samples: Vec<SystemState>,
    pub final_state: SystemState,
    pub converged: bool,
    pub total_steps: u64,
    /// Set when the integrator blew up; samples up to the failure are kept.
    pub failure: Option<Error>,
}

/// Runs [`simulate`] over the configured horizon, then keeps extending the
/// horizon (tripling the end time, quadrupling the record stride per block)
/// until the run converges or [`MAX_TOTAL_STEPS`] is exhausted.
pub fn simulate_to_steady(
    topology: &GridTopology,
    cfg: &ControllerConfig,
    injection: &Injection,
    initial: &SystemState,
    icfg: &IntegratorConfig,
) -> Result<SteadyStateRun> {
    icfg.validate()?;
    initial.validate()?;
    if initial.n() != topology.n_terminals() {
        return Err(Error::validation("initial state dimension does not match topology"));
    }
    let cl = ClosedLoop::new(topology, cfg, injection)?;
    let mut buf = Rk4Buffers::new(cl.dim());

    let mut samples: Vec<SystemState> = Vec::new();
    let mut total_steps: u64 = 0;
    let mut block_cfg = icfg.clone();
    let mut state = initial.clone();

    loop {
        let outcome = run_block(&cl, &mut buf, &state, &block_cfg);
        total_steps += outcome.steps_taken;
        let skip = usize::from(!samples.is_empty()); // block start repeats the previous final state
        samples.extend(outcome.samples.into_iter().skip(skip));
        state = outcome.final_state;

        if outcome.failure.is_some() || outcome.converged || total_steps >= MAX_TOTAL_STEPS {
            return Ok(SteadyStateRun {
                samples,
                final_state: state,
                converged: outcome.converged,
                total_steps,
                failure: outcome.failure,
            });
        }
        // Extend: cover twice the elapsed time in the next block, sampled sparser.
        let elapsed = state.t - initial.t;
        block_cfg.horizon = 2.0 * elapsed.max(block_cfg.horizon);
        block_cfg.record_stride = block_cfg.record_stride.saturating_mul(4);
    }
}

//! Python extension module `mtdcsim`: the grid model, the three controllers,
//! the RK4 simulator, and the sharing/range/Lyapunov analyses, exposed with
//! plain lists and dicts. Terminal indices are 0-based here (1-based only in
//! scenario files).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mtdc_sim as core;
use mtdc_sim::controller::ControllerKind;
use mtdc_sim::error::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::NumericalBlowup { .. } | Error::NotAtSteadyState { .. } | Error::BandExit { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_kind(name: &str) -> PyResult<ControllerKind> {
    ControllerKind::parse(name).map_err(to_py_err)
}

/// Terminals, capacitances, and resistive lines; owns the weighted Laplacian.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct GridTopology {
    inner: core::GridTopology,
}

#[pymethods]
impl GridTopology {
    /// `lines` are 0-based `(i, j, resistance_ohm)` triples.
    #[new]
    fn new(n_terminals: usize, lines: Vec<(usize, usize, f64)>, capacitances: Vec<f64>) -> PyResult<Self> {
        Ok(GridTopology {
            inner: core::GridTopology::new(n_terminals, &lines, capacitances).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn n_terminals(&self) -> usize {
        self.inner.n_terminals()
    }

    #[getter]
    fn capacitances(&self) -> Vec<f64> {
        self.inner.capacitances().to_vec()
    }

    /// Canonical line list as `(i, j, resistance_ohm)` with i < j.
    #[getter]
    fn lines(&self) -> Vec<(usize, usize, f64)> {
        self.inner
            .lines()
            .iter()
            .map(|l| (l.from, l.to, l.resistance))
            .collect()
    }

    /// Dense weighted Laplacian (siemens) as a list of rows.
    fn laplacian(&self) -> Vec<Vec<f64>> {
        let m = self.inner.laplacian().matrix();
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    }

    /// Ohm's-law line currents (amperes) in canonical line order.
    fn line_currents(&self, voltages: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.line_currents(&voltages).map_err(to_py_err)
    }

    /// dV/dt (volts/second) for the given voltages, injections, and controls.
    fn dynamics_rhs(&self, voltages: Vec<f64>, i_inj: Vec<f64>, u: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.dynamics_rhs(&voltages, &i_inj, &u).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "GridTopology(n_terminals={}, lines={})",
            self.inner.n_terminals(),
            self.inner.lines().len()
        )
    }
}

/// Gains, nominal voltage, and band for one of the three control laws.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct ControllerConfig {
    inner: core::ControllerConfig,
}

#[pymethods]
impl ControllerConfig {
    #[staticmethod]
    fn droop(k_p: Vec<f64>, v_nom: Vec<f64>) -> PyResult<Self> {
        Ok(ControllerConfig {
            inner: core::ControllerConfig::droop(k_p, v_nom).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn pi(k_p: Vec<f64>, k_i: Vec<f64>, v_nom: Vec<f64>) -> PyResult<Self> {
        Ok(ControllerConfig {
            inner: core::ControllerConfig::pi(k_p, k_i, v_nom).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn deadband_pi(
        k_p: Vec<f64>,
        k_i: Vec<f64>,
        v_nom: Vec<f64>,
        v_lo: Vec<f64>,
        v_hi: Vec<f64>,
    ) -> PyResult<Self> {
        Ok(ControllerConfig {
            inner: core::ControllerConfig::deadband_pi(k_p, k_i, v_nom, v_lo, v_hi).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    /// Controlled current injection `u` (amperes) at the given state.
    fn control_output(&self, voltages: Vec<f64>, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.control_output(&voltages, &z).map_err(to_py_err)
    }

    /// Integrator state derivative dz/dt (volts).
    fn state_derivative(&self, voltages: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.state_derivative(&voltages).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("ControllerConfig(kind={})", self.inner.kind().name())
    }
}

fn run_to_dict(py: Python<'_>, cfg: &core::ControllerConfig, samples: &[core::SystemState], converged: bool, steps: u64) -> PyResult<Py<PyDict>> {
    let dict = PyDict::new(py);
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let v: Vec<Vec<f64>> = samples.iter().map(|s| s.v.clone()).collect();
    let z: Vec<Vec<f64>> = samples.iter().map(|s| s.z.clone()).collect();
    let u: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| cfg.control_output(&s.v, &s.z))
        .collect::<Result<_, _>>()
        .map_err(to_py_err)?;
    dict.set_item("t", t)?;
    dict.set_item("v", v)?;
    dict.set_item("z", z)?;
    dict.set_item("u", u)?;
    dict.set_item("converged", converged)?;
    dict.set_item("steps", steps)?;
    if let Some(last) = samples.last() {
        dict.set_item("final_t", last.t)?;
        dict.set_item("final_v", last.v.clone())?;
        dict.set_item("final_z", last.z.clone())?;
    }
    Ok(dict.into())
}

/// Integrates the closed loop with fixed-step RK4.
///
/// Returns a dict with keys `t`, `v`, `z`, `u` (recorded samples),
/// `converged`, `steps`, and the final state. With `extend=True` the horizon
/// keeps growing until the run settles.
#[pyfunction]
#[pyo3(signature = (topology, config, i_inj, v0, z0=None, step=1e-6, horizon=1.5e-3, steady_state_tol=1e-3, record_stride=10, extend=false))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    topology: PyRef<GridTopology>,
    config: PyRef<ControllerConfig>,
    i_inj: Vec<f64>,
    v0: Vec<f64>,
    z0: Option<Vec<f64>>,
    step: f64,
    horizon: f64,
    steady_state_tol: f64,
    record_stride: usize,
    extend: bool,
) -> PyResult<Py<PyDict>> {
    let n = topology.inner.n_terminals();
    let injection = core::Injection::new(n, i_inj).map_err(to_py_err)?;
    let initial = core::SystemState::new(0.0, v0, z0.unwrap_or_else(|| vec![0.0; n])).map_err(to_py_err)?;
    let icfg = core::IntegratorConfig {
        step,
        horizon,
        steady_state_tol,
        record_stride,
    };
    if extend {
        let run = core::simulate_to_steady(&topology.inner, &config.inner, &injection, &initial, &icfg)
            .map_err(to_py_err)?;
        if let Some(failure) = run.failure {
            return Err(to_py_err(failure));
        }
        let mut samples = run.samples;
        if samples.last().map(|s| s.t) != Some(run.final_state.t) {
            samples.push(run.final_state.clone());
        }
        run_to_dict(py, &config.inner, &samples, run.converged, run.total_steps)
    } else {
        let traj = core::simulate(&topology.inner, &config.inner, &injection, &initial, &icfg).map_err(to_py_err)?;
        let mut samples = traj.samples().to_vec();
        if samples.last().map(|s| s.t) != Some(traj.final_state().t) {
            samples.push(traj.final_state().clone());
        }
        run_to_dict(py, &config.inner, &samples, traj.converged(), traj.steps_taken())
    }
}

/// Droop steady-state voltages `Vnom + (L + Kp)^-1 I_inj`.
#[pyfunction]
fn droop_equilibrium(
    topology: PyRef<GridTopology>,
    k_p: Vec<f64>,
    v_nom: Vec<f64>,
    i_inj: Vec<f64>,
) -> PyResult<Vec<f64>> {
    let injection = core::Injection::new(topology.inner.n_terminals(), i_inj).map_err(to_py_err)?;
    core::droop_equilibrium(&topology.inner, &k_p, &v_nom, &injection).map_err(to_py_err)
}

/// Closed-form sharing optimum: returns `(mu, u_optimal)`.
#[pyfunction]
fn optimal_sharing(f: Vec<f64>, i_inj: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
    let injection = core::Injection::new(f.len(), i_inj).map_err(to_py_err)?;
    let optimum = core::optimal_sharing(&f, &injection).map_err(to_py_err)?;
    Ok((optimum.mu, optimum.u))
}

/// Independent KKT solution of the sharing program.
#[pyfunction]
fn qp_oracle(f: Vec<f64>, i_inj: Vec<f64>, topology: PyRef<GridTopology>) -> PyResult<Vec<f64>> {
    let injection = core::Injection::new(topology.inner.n_terminals(), i_inj).map_err(to_py_err)?;
    core::qp_oracle(&f, &injection, &topology.inner).map_err(to_py_err)
}

/// Band excess `max(V - v_hi, 0) - max(v_lo - V, 0)` per terminal.
#[pyfunction]
fn deadband(voltages: Vec<f64>, v_lo: Vec<f64>, v_hi: Vec<f64>) -> PyResult<Vec<f64>> {
    core::deadband(&voltages, &v_lo, &v_hi).map_err(to_py_err)
}

/// Droop sharing vs the scale of the line resistances.
///
/// Returns one dict per gamma: `gamma`, `u`, `dispersion` (None when the
/// injections sum to zero), `optimum_deviation`.
#[pyfunction]
fn gamma_sweep(
    py: Python<'_>,
    topology: PyRef<GridTopology>,
    k_p: Vec<f64>,
    v_nom: Vec<f64>,
    i_inj: Vec<f64>,
    gammas: Vec<f64>,
) -> PyResult<Vec<Py<PyDict>>> {
    let injection = core::Injection::new(topology.inner.n_terminals(), i_inj).map_err(to_py_err)?;
    let points = core::gamma_sweep(&topology.inner, &k_p, &v_nom, &injection, &gammas).map_err(to_py_err)?;
    points
        .into_iter()
        .map(|p| {
            let dict = PyDict::new(py);
            dict.set_item("gamma", p.gamma)?;
            dict.set_item("u", p.u)?;
            dict.set_item("dispersion", p.dispersion)?;
            dict.set_item("optimum_deviation", p.optimum_deviation)?;
            Ok(dict.into())
        })
        .collect()
}

/// A parsed scenario file.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    inner: core::Scenario,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn load(path: String) -> PyResult<Self> {
        Ok(Scenario {
            inner: core::Scenario::load(&path).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn parse(text: String) -> PyResult<Self> {
        Ok(Scenario {
            inner: core::Scenario::parse_str(&text).map_err(to_py_err)?,
        })
    }

    /// The bundled four-terminal scenario.
    #[staticmethod]
    fn paper_fig1() -> Self {
        Scenario {
            inner: core::Scenario::paper_fig1(),
        }
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.name()
    }

    #[getter]
    fn topology(&self) -> GridTopology {
        GridTopology {
            inner: self.inner.topology.clone(),
        }
    }

    #[getter]
    fn i_inj(&self) -> Vec<f64> {
        self.inner.injection.currents().to_vec()
    }

    /// Canonical text form (SI units).
    fn emit(&self) -> String {
        self.inner.emit()
    }

    /// Runs the scenario to steady state and returns the verdicts:
    /// `converged`, `final_t`, `final_v`, `range_satisfied`,
    /// `lyapunov_nonincreasing` (None for droop), and `sharing` (None for PI).
    #[pyo3(signature = (controller=None))]
    fn run(&self, py: Python<'_>, controller: Option<String>) -> PyResult<Py<PyDict>> {
        let kind = controller.as_deref().map(parse_kind).transpose()?;
        let cfg = self.inner.controller_config(kind).map_err(to_py_err)?;
        let run = core::simulate_to_steady(
            &self.inner.topology,
            &cfg,
            &self.inner.injection,
            &self.inner.initial,
            &self.inner.integrator,
        )
        .map_err(to_py_err)?;
        if let Some(failure) = run.failure {
            return Err(to_py_err(failure));
        }
        let mut samples = run.samples;
        if samples.last().map(|s| s.t) != Some(run.final_state.t) {
            samples.push(run.final_state.clone());
        }

        let range = core::range_verdict(&run.final_state.v, &self.inner.v_lo, &self.inner.v_hi, 1.0)
            .map_err(to_py_err)?;
        let lyapunov = match cfg.kind() {
            ControllerKind::Droop => None,
            _ => {
                let trace = core::lyapunov_monitor(&self.inner.topology, &cfg, &self.inner.injection, &samples)
                    .map_err(to_py_err)?;
                Some(trace.nonincreasing)
            }
        };
        let sharing = match cfg.kind() {
            ControllerKind::Pi => None,
            _ => {
                let f: Vec<f64> = cfg.k_p().iter().map(|&g| 1.0 / g).collect();
                let u_final = cfg
                    .control_output(&run.final_state.v, &run.final_state.z)
                    .map_err(to_py_err)?;
                let verdict =
                    core::sharing_verdict(&f, &self.inner.injection, &u_final, 0.01).map_err(to_py_err)?;
                let d = PyDict::new(py);
                d.set_item("mu", verdict.mu)?;
                d.set_item("max_relative_residual", verdict.max_relative_residual)?;
                d.set_item("satisfied", verdict.satisfied)?;
                Some(d)
            }
        };

        let dict = PyDict::new(py);
        dict.set_item("controller", cfg.kind().name())?;
        dict.set_item("converged", run.converged)?;
        dict.set_item("final_t", run.final_state.t)?;
        dict.set_item("final_v", run.final_state.v.clone())?;
        dict.set_item("range_satisfied", range.satisfied)?;
        dict.set_item("lyapunov_nonincreasing", lyapunov)?;
        dict.set_item("sharing", sharing)?;
        Ok(dict.into())
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(kind={}, n_terminals={})",
            self.inner.kind.name(),
            self.inner.topology.n_terminals()
        )
    }
}

#[pymodule]
fn mtdcsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<GridTopology>()?;
    m.add_class::<ControllerConfig>()?;
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(droop_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_sharing, m)?)?;
    m.add_function(wrap_pyfunction!(qp_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(deadband, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_sweep, m)?)?;
    Ok(())
}

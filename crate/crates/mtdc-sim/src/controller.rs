//! Decentralized voltage controllers.
//!
//! Three control laws share one interface; each terminal sees only its own
//! voltage, its own integrator state, and its own gains.
//!
//! * Droop: `u_i = -Kp_i (V_i - Vnom_i)`, stateless.
//! * PI: the droop term plus `-Ki_i z_i` with `dz_i/dt = V_i - Vnom_i`.
//! * Deadband PI: same output law, but the integrator only accumulates the
//!   voltage excess outside the band `[Vlo_i, Vhi_i]`:
//!   `dz_i/dt = max(V_i - Vhi_i, 0) - max(Vlo_i - V_i, 0)`.
//!
//! With a degenerate band `Vlo = Vnom = Vhi` the deadband controller reduces
//! to the PI controller; with `z = 0` its output equals the droop output.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Droop,
    Pi,
    DeadbandPi,
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Droop => "droop",
            ControllerKind::Pi => "pi",
            ControllerKind::DeadbandPi => "deadband-pi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "droop" => Ok(ControllerKind::Droop),
            "pi" => Ok(ControllerKind::Pi),
            "deadband-pi" => Ok(ControllerKind::DeadbandPi),
            other => Err(Error::UnsupportedKind(other.to_string())),
        }
    }
}

/// Per-terminal gains, nominal voltages, and voltage bounds.
///
/// `k_p` is in siemens (amperes per volt), `k_i` in amperes per volt-second.
/// The bounds are only read by the deadband controller; droop and PI carry
/// them along untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    kind: ControllerKind,
    k_p: Vec<f64>,
    k_i: Vec<f64>,
    v_nom: Vec<f64>,
    v_lo: Vec<f64>,
    v_hi: Vec<f64>,
}

impl ControllerConfig {
    /// Full constructor; the kind-specific builders below are usually more
    /// convenient. Validation: positive `k_p` everywhere; positive `k_i` for
    /// the integral kinds (exactly zero for droop); a single nominal voltage
    /// shared by all terminals; `v_lo <= v_nom <= v_hi` per terminal for the
    /// deadband kind.
    pub fn new(
        kind: ControllerKind,
        k_p: Vec<f64>,
        k_i: Vec<f64>,
        v_nom: Vec<f64>,
        v_lo: Vec<f64>,
        v_hi: Vec<f64>,
    ) -> Result<Self> {
        let n = k_p.len();
        if n == 0 {
            return Err(Error::validation("controller config needs at least one terminal"));
        }
        for (name, v) in [
            ("k_i", &k_i),
            ("v_nom", &v_nom),
            ("v_lo", &v_lo),
            ("v_hi", &v_hi),
        ] {
            if v.len() != n {
                return Err(Error::validation(format!(
                    "{name} has {} entries but k_p has {n}",
                    v.len()
                )));
            }
        }
        for (name, v) in [
            ("k_p", &k_p),
            ("k_i", &k_i),
            ("v_nom", &v_nom),
            ("v_lo", &v_lo),
            ("v_hi", &v_hi),
        ] {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::validation(format!("{name} at terminal {} is not finite", i + 1)));
            }
        }
        if let Some(i) = k_p.iter().position(|&g| g <= 0.0) {
            return Err(Error::validation(format!(
                "proportional gain at terminal {} must be positive",
                i + 1
            )));
        }
        match kind {
            ControllerKind::Droop => {
                if k_i.iter().any(|&g| g != 0.0) {
                    return Err(Error::validation("droop controller must have zero integral gains"));
                }
            }
            ControllerKind::Pi | ControllerKind::DeadbandPi => {
                if let Some(i) = k_i.iter().position(|&g| g <= 0.0) {
                    return Err(Error::validation(format!(
                        "integral gain at terminal {} must be positive",
                        i + 1
                    )));
                }
            }
        }
        if v_nom.iter().any(|&v| v != v_nom[0]) {
            return Err(Error::validation("nominal voltage must be identical across terminals"));
        }
        if let Some(i) = (0..n).find(|&i| v_lo[i] > v_hi[i]) {
            return Err(Error::validation(format!(
                "voltage bounds inverted at terminal {}: v_lo {} > v_hi {}",
                i + 1,
                v_lo[i],
                v_hi[i]
            )));
        }
        if kind == ControllerKind::DeadbandPi {
            if let Some(i) = (0..n).find(|&i| v_nom[i] < v_lo[i] || v_nom[i] > v_hi[i]) {
                return Err(Error::validation(format!(
                    "nominal voltage at terminal {} lies outside [v_lo, v_hi]",
                    i + 1
                )));
            }
        }
        Ok(ControllerConfig {
            kind,
            k_p,
            k_i,
            v_nom,
            v_lo,
            v_hi,
        })
    }

    pub fn droop(k_p: Vec<f64>, v_nom: Vec<f64>) -> Result<Self> {
        let n = k_p.len();
        let band_lo = v_nom.clone();
        let band_hi = v_nom.clone();
        ControllerConfig::new(ControllerKind::Droop, k_p, vec![0.0; n], v_nom, band_lo, band_hi)
    }

    pub fn pi(k_p: Vec<f64>, k_i: Vec<f64>, v_nom: Vec<f64>) -> Result<Self> {
        let band_lo = v_nom.clone();
        let band_hi = v_nom.clone();
        ControllerConfig::new(ControllerKind::Pi, k_p, k_i, v_nom, band_lo, band_hi)
    }

    pub fn deadband_pi(
        k_p: Vec<f64>,
        k_i: Vec<f64>,
        v_nom: Vec<f64>,
        v_lo: Vec<f64>,
        v_hi: Vec<f64>,
    ) -> Result<Self> {
        ControllerConfig::new(ControllerKind::DeadbandPi, k_p, k_i, v_nom, v_lo, v_hi)
    }

    /// Uniform parameters across `n` terminals.
    pub fn uniform(kind: ControllerKind, n: usize, k_p: f64, k_i: f64, v_nom: f64, v_lo: f64, v_hi: f64) -> Result<Self> {
        ControllerConfig::new(
            kind,
            vec![k_p; n],
            vec![if kind == ControllerKind::Droop { 0.0 } else { k_i }; n],
            vec![v_nom; n],
            vec![v_lo; n],
            vec![v_hi; n],
        )
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.k_p.len()
    }

    pub fn k_p(&self) -> &[f64] {
        &self.k_p
    }

    pub fn k_i(&self) -> &[f64] {
        &self.k_i
    }

    pub fn v_nom(&self) -> &[f64] {
        &self.v_nom
    }

    pub fn v_lo(&self) -> &[f64] {
        &self.v_lo
    }

    pub fn v_hi(&self) -> &[f64] {
        &self.v_hi
    }

    /// Same parameters under a different control law. Droop zeroes the
    /// integral gains; switching away from droop needs positive ones.
    pub fn with_kind(&self, kind: ControllerKind, k_i_fallback: f64) -> Result<Self> {
        let k_i = match kind {
            ControllerKind::Droop => vec![0.0; self.n()],
            _ => {
                if self.k_i.iter().all(|&g| g > 0.0) {
                    self.k_i.clone()
                } else {
                    vec![k_i_fallback; self.n()]
                }
            }
        };
        ControllerConfig::new(
            kind,
            self.k_p.clone(),
            k_i,
            self.v_nom.clone(),
            self.v_lo.clone(),
            self.v_hi.clone(),
        )
    }

    /// Controlled current injection: `u_i = -Kp_i (V_i - Vnom_i) - Ki_i z_i`.
    /// The integral term is absent for the droop kind.
    pub fn control_output(&self, voltages: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(voltages, z)?;
        Ok((0..self.n())
            .map(|i| {
                let proportional = -self.k_p[i] * (voltages[i] - self.v_nom[i]);
                match self.kind {
                    ControllerKind::Droop => proportional,
                    _ => proportional - self.k_i[i] * z[i],
                }
            })
            .collect())
    }

    /// Integrator state derivative, dispatched on the controller kind:
    /// zero for droop, the voltage error for PI, and the band excess for
    /// deadband PI.
    pub fn state_derivative(&self, voltages: &[f64]) -> Result<Vec<f64>> {
        if voltages.len() != self.n() {
            return Err(Error::validation(format!(
                "voltage vector has {} entries for {} terminals",
                voltages.len(),
                self.n()
            )));
        }
        Ok(match self.kind {
            ControllerKind::Droop => vec![0.0; self.n()],
            ControllerKind::Pi => (0..self.n()).map(|i| voltages[i] - self.v_nom[i]).collect(),
            ControllerKind::DeadbandPi => deadband(voltages, &self.v_lo, &self.v_hi)?,
        })
    }

    fn check_dim(&self, voltages: &[f64], z: &[f64]) -> Result<()> {
        if voltages.len() != self.n() || z.len() != self.n() {
            return Err(Error::validation(format!(
                "controller expects {} terminals, got {} voltages and {} integrator states",
                self.n(),
                voltages.len(),
                z.len()
            )));
        }
        Ok(())
    }
}

/// Band excess `max(V_i - Vhi_i, 0) - max(Vlo_i - V_i, 0)`: zero inside the
/// band, continuous and piecewise linear outside it.
pub fn deadband(voltages: &[f64], v_lo: &[f64], v_hi: &[f64]) -> Result<Vec<f64>> {
    if voltages.len() != v_lo.len() || voltages.len() != v_hi.len() {
        return Err(Error::validation("deadband inputs have mismatched dimensions"));
    }
    if let Some(i) = (0..voltages.len()).find(|&i| v_lo[i] > v_hi[i]) {
        return Err(Error::validation(format!(
            "voltage bounds inverted at terminal {}: v_lo {} > v_hi {}",
            i + 1,
            v_lo[i],
            v_hi[i]
        )));
    }
    Ok((0..voltages.len())
        .map(|i| (voltages[i] - v_hi[i]).max(0.0) - (v_lo[i] - voltages[i]).max(0.0))
        .collect())
}

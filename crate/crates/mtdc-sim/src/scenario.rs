//! Scenario files: a unit-checked, versioned text format describing one
//! complete run (grid, controller, disturbance, initial state, integrator).
//!
//! Every physical quantity carries a mandatory unit suffix; unit confusion is
//! the dominant failure mode in grid simulations, so a bare number is a parse
//! error. Terminals are 1-based in files and 0-based in the API.
//!
//! ```text
//! mtdc-scenario v1
//!
//! [grid]
//! terminals = 4
//! capacitance = 0.01 F            # scalar broadcasts to all terminals
//! line = 1 2 3.7 ohm              # one entry per line, any order
//!
//! [controller]
//! kind = deadband-pi              # droop | pi | deadband-pi
//! k_p = 10 S
//! k_i = 10 A_per_Vs               # omit (or zero) for droop
//! v_nom = 100 kV
//! v_lo = 95 kV
//! v_hi = 105 kV
//!
//! [injection]
//! i_inj = -80 -65 -60 -65 kA
//!
//! [initial]
//! v = 105 104.96 104.9 105.07 kV
//! z = 0 Vs                        # optional, defaults to zero
//!
//! [integrator]                    # section and keys optional
//! step = 1 us
//! horizon = 1.5 ms
//! steady_state_tol = 1e-3 V_per_s
//! record_stride = 10
//! ```
//!
//! Accepted units: voltages `V`/`kV`, currents `A`/`kA`, resistance `ohm`,
//! capacitance `F`/`mF`/`uF`, time `s`/`ms`/`us`, proportional gain `S`,
//! integral gain `A_per_Vs`, integrator state `Vs`, steady-state tolerance
//! `V_per_s`. `#` starts a comment. Unknown sections or keys are rejected
//! with the offending line number.

use std::collections::HashMap;
use std::path::Path;

use crate::controller::{ControllerConfig, ControllerKind};
use crate::error::{Error, Result};
use crate::grid::{GridTopology, Injection};
use crate::integrator::{IntegratorConfig, SystemState};

pub const SCENARIO_HEADER: &str = "mtdc-scenario v1";

/// Bundled four-terminal scenario: five 3.7-ohm lines, 95/105 kV bounds,
/// uniform gains 10/10, voltages initialized just around the upper bound.
pub const PAPER_FIG1_SCN: &str = include_str!("../scenarios/paper_fig1.scn");

/// A fully validated run description.
///
/// Controller parameters are kept raw (not as a [`ControllerConfig`]) so a
/// CLI override can re-dispatch the same gains under a different law via
/// [`Scenario::controller_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: GridTopology,
    pub kind: ControllerKind,
    pub k_p: Vec<f64>,
    pub k_i: Vec<f64>,
    pub v_nom: Vec<f64>,
    pub v_lo: Vec<f64>,
    pub v_hi: Vec<f64>,
    pub injection: Injection,
    pub initial: SystemState,
    pub integrator: IntegratorConfig,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::scenario(0, format!("cannot read {}: {e}", path.as_ref().display())))?;
        Scenario::parse_str(&text)
    }

    /// The bundled four-terminal scenario.
    pub fn paper_fig1() -> Self {
        Scenario::parse_str(PAPER_FIG1_SCN).expect("bundled scenario must parse")
    }

    /// Builds the controller for this scenario, optionally under a different
    /// control law than the file declares. Switching away from droop requires
    /// positive integral gains in the file.
    ///
    /// Droop and PI configs carry the degenerate band `v_lo = v_nom = v_hi`
    /// (their laws never read the scenario band); the scenario bounds still
    /// judge the operating-range verdict.
    pub fn controller_config(&self, kind_override: Option<ControllerKind>) -> Result<ControllerConfig> {
        let kind = kind_override.unwrap_or(self.kind);
        let integral_gains = || -> Result<Vec<f64>> {
            if self.k_i.iter().any(|&g| g <= 0.0) {
                return Err(Error::validation(format!(
                    "controller kind {} needs positive integral gains; declare k_i in the scenario",
                    kind.name()
                )));
            }
            Ok(self.k_i.clone())
        };
        match kind {
            ControllerKind::Droop => ControllerConfig::droop(self.k_p.clone(), self.v_nom.clone()),
            ControllerKind::Pi => ControllerConfig::pi(self.k_p.clone(), integral_gains()?, self.v_nom.clone()),
            ControllerKind::DeadbandPi => ControllerConfig::deadband_pi(
                self.k_p.clone(),
                integral_gains()?,
                self.v_nom.clone(),
                self.v_lo.clone(),
                self.v_hi.clone(),
            ),
        }
    }

    /// Same scenario with a different disturbance (used to write the
    /// counterexample scenario).
    pub fn with_injection(&self, injection: Injection) -> Result<Self> {
        if injection.currents().len() != self.topology.n_terminals() {
            return Err(Error::validation("injection dimension does not match scenario"));
        }
        Ok(Scenario {
            injection,
            ..self.clone()
        })
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let raw = RawScenario::tokenize(text)?;
        raw.build()
    }

    /// Canonical text form in SI units; `parse_str(emit())` reproduces the
    /// scenario field for field.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        out.push_str(SCENARIO_HEADER);
        out.push_str("\n\n[grid]\n");
        out.push_str(&format!("terminals = {}\n", self.topology.n_terminals()));
        out.push_str(&format!("capacitance = {} F\n", fmt_vec(self.topology.capacitances())));
        for line in self.topology.lines() {
            out.push_str(&format!(
                "line = {} {} {:?} ohm\n",
                line.from + 1,
                line.to + 1,
                line.resistance
            ));
        }
        out.push_str("\n[controller]\n");
        out.push_str(&format!("kind = {}\n", self.kind.name()));
        out.push_str(&format!("k_p = {} S\n", fmt_vec(&self.k_p)));
        out.push_str(&format!("k_i = {} A_per_Vs\n", fmt_vec(&self.k_i)));
        out.push_str(&format!("v_nom = {} V\n", fmt_vec(&self.v_nom)));
        out.push_str(&format!("v_lo = {} V\n", fmt_vec(&self.v_lo)));
        out.push_str(&format!("v_hi = {} V\n", fmt_vec(&self.v_hi)));
        out.push_str("\n[injection]\n");
        out.push_str(&format!("i_inj = {} A\n", fmt_vec(self.injection.currents())));
        out.push_str("\n[initial]\n");
        out.push_str(&format!("v = {} V\n", fmt_vec(&self.initial.v)));
        out.push_str(&format!("z = {} Vs\n", fmt_vec(&self.initial.z)));
        out.push_str("\n[integrator]\n");
        out.push_str(&format!("step = {:?} s\n", self.integrator.step));
        out.push_str(&format!("horizon = {:?} s\n", self.integrator.horizon));
        out.push_str(&format!(
            "steady_state_tol = {:?} V_per_s\n",
            self.integrator.steady_state_tol
        ));
        out.push_str(&format!("record_stride = {}\n", self.integrator.record_stride));
        out
    }
}

fn fmt_vec(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

const SECTIONS: [&str; 5] = ["grid", "controller", "injection", "initial", "integrator"];

fn section_keys(section: &str) -> &'static [&'static str] {
    match section {
        "grid" => &["terminals", "capacitance", "line"],
        "controller" => &["kind", "k_p", "k_i", "v_nom", "v_lo", "v_hi"],
        "injection" => &["i_inj"],
        "initial" => &["v", "z"],
        "integrator" => &["step", "horizon", "steady_state_tol", "record_stride"],
        _ => &[],
    }
}

#[derive(Debug, Clone, Copy)]
enum Unit {
    Voltage,
    Current,
    Resistance,
    Capacitance,
    Time,
    PropGain,
    IntGain,
    VoltSeconds,
    VoltsPerSecond,
}

impl Unit {
    fn factor(self, token: &str) -> Option<f64> {
        match (self, token) {
            (Unit::Voltage, "V") => Some(1.0),
            (Unit::Voltage, "kV") => Some(1e3),
            (Unit::Current, "A") => Some(1.0),
            (Unit::Current, "kA") => Some(1e3),
            (Unit::Resistance, "ohm") => Some(1.0),
            (Unit::Capacitance, "F") => Some(1.0),
            (Unit::Capacitance, "mF") => Some(1e-3),
            (Unit::Capacitance, "uF") => Some(1e-6),
            (Unit::Time, "s") => Some(1.0),
            (Unit::Time, "ms") => Some(1e-3),
            (Unit::Time, "us") => Some(1e-6),
            (Unit::PropGain, "S") => Some(1.0),
            (Unit::IntGain, "A_per_Vs") => Some(1.0),
            (Unit::VoltSeconds, "Vs") => Some(1.0),
            (Unit::VoltsPerSecond, "V_per_s") => Some(1.0),
            _ => None,
        }
    }

    fn expectation(self) -> &'static str {
        match self {
            Unit::Voltage => "V or kV",
            Unit::Current => "A or kA",
            Unit::Resistance => "ohm",
            Unit::Capacitance => "F, mF, or uF",
            Unit::Time => "s, ms, or us",
            Unit::PropGain => "S",
            Unit::IntGain => "A_per_Vs",
            Unit::VoltSeconds => "Vs",
            Unit::VoltsPerSecond => "V_per_s",
        }
    }
}

#[derive(Debug)]
struct Entry {
    line: usize,
    value: String,
}

#[derive(Debug)]
struct RawScenario {
    kv: HashMap<(String, String), Entry>,
    grid_lines: Vec<Entry>,
    section_lines: HashMap<String, usize>,
}

impl RawScenario {
    fn tokenize(text: &str) -> Result<Self> {
        let mut header_seen = false;
        let mut current_section: Option<String> = None;
        let mut kv = HashMap::new();
        let mut grid_lines = Vec::new();
        let mut section_lines = HashMap::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if !header_seen {
                if content != SCENARIO_HEADER {
                    return Err(Error::scenario(
                        line_no,
                        format!("expected header '{SCENARIO_HEADER}', found '{content}'"),
                    ));
                }
                header_seen = true;
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                if !SECTIONS.contains(&name) {
                    return Err(Error::scenario(line_no, format!("unknown section [{name}]")));
                }
                if section_lines.insert(name.to_string(), line_no).is_some() {
                    return Err(Error::scenario(line_no, format!("duplicate section [{name}]")));
                }
                current_section = Some(name.to_string());
                continue;
            }
            let section = current_section
                .as_ref()
                .ok_or_else(|| Error::scenario(line_no, "key before any section header"))?;
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::scenario(line_no, "expected 'key = value'"))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !section_keys(section).contains(&key.as_str()) {
                return Err(Error::scenario(
                    line_no,
                    format!("unknown key '{key}' in section [{section}]"),
                ));
            }
            if section == "grid" && key == "line" {
                grid_lines.push(Entry { line: line_no, value });
                continue;
            }
            if kv
                .insert((section.clone(), key.clone()), Entry { line: line_no, value })
                .is_some()
            {
                return Err(Error::scenario(line_no, format!("duplicate key '{key}'")));
            }
        }
        if !header_seen {
            return Err(Error::scenario(1, format!("empty scenario; expected '{SCENARIO_HEADER}'")));
        }
        Ok(RawScenario {
            kv,
            grid_lines,
            section_lines,
        })
    }

    fn section_line(&self, section: &str) -> usize {
        self.section_lines.get(section).copied().unwrap_or(1)
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.kv.get(&(section.to_string(), key.to_string()))
    }

    fn require(&self, section: &str, key: &str) -> Result<&Entry> {
        if !self.section_lines.contains_key(section) {
            return Err(Error::scenario(1, format!("missing section [{section}]")));
        }
        self.get(section, key).ok_or_else(|| {
            Error::scenario(
                self.section_line(section),
                format!("missing key '{key}' in section [{section}]"),
            )
        })
    }

    fn build(&self) -> Result<Scenario> {
        // [grid]
        let terminals_entry = self.require("grid", "terminals")?;
        let n: usize = terminals_entry
            .value
            .parse()
            .map_err(|_| Error::scenario(terminals_entry.line, "terminals must be a positive integer"))?;
        if n == 0 {
            return Err(Error::scenario(terminals_entry.line, "terminals must be at least 1"));
        }
        let capacitances = parse_unit_vector(self.require("grid", "capacitance")?, n, Unit::Capacitance)?;

        let mut lines = Vec::new();
        let mut seen_pairs = std::collections::HashSet::new();
        for entry in &self.grid_lines {
            let (i, j, r) = parse_line_entry(entry, n)?;
            let pair = (i.min(j), i.max(j));
            if !seen_pairs.insert(pair) {
                return Err(Error::scenario(
                    entry.line,
                    format!("duplicate line between terminals {} and {}", pair.0 + 1, pair.1 + 1),
                ));
            }
            lines.push((i, j, r));
        }
        let topology = GridTopology::new(n, &lines, capacitances)
            .map_err(|e| Error::scenario(self.section_line("grid"), e.to_string()))?;

        // [controller]
        let kind_entry = self.require("controller", "kind")?;
        let kind = ControllerKind::parse(&kind_entry.value).map_err(|_| {
            Error::scenario(
                kind_entry.line,
                format!("unknown controller kind '{}'; use droop, pi, or deadband-pi", kind_entry.value),
            )
        })?;
        let k_p = parse_unit_vector(self.require("controller", "k_p")?, n, Unit::PropGain)?;
        let k_i = match self.get("controller", "k_i") {
            Some(entry) => parse_unit_vector(entry, n, Unit::IntGain)?,
            None => {
                if kind != ControllerKind::Droop {
                    return Err(Error::scenario(
                        self.section_line("controller"),
                        format!("controller kind {} requires key 'k_i'", kind.name()),
                    ));
                }
                vec![0.0; n]
            }
        };
        let v_nom = parse_unit_vector(self.require("controller", "v_nom")?, n, Unit::Voltage)?;
        let v_lo_entry = self.require("controller", "v_lo")?;
        let v_lo_line = v_lo_entry.line;
        let v_lo = parse_unit_vector(v_lo_entry, n, Unit::Voltage)?;
        let v_hi = parse_unit_vector(self.require("controller", "v_hi")?, n, Unit::Voltage)?;
        if let Some(i) = (0..n).find(|&i| v_lo[i] > v_hi[i]) {
            return Err(Error::scenario(
                v_lo_line,
                format!("voltage bounds inverted at terminal {}: v_lo {} > v_hi {}", i + 1, v_lo[i], v_hi[i]),
            ));
        }

        // [injection]
        let injection = Injection::new(n, parse_unit_vector(self.require("injection", "i_inj")?, n, Unit::Current)?)
            .map_err(|e| Error::scenario(self.section_line("injection"), e.to_string()))?;

        // [initial]
        let v0 = parse_unit_vector(self.require("initial", "v")?, n, Unit::Voltage)?;
        let z0 = match self.get("initial", "z") {
            Some(entry) => parse_unit_vector(entry, n, Unit::VoltSeconds)?,
            None => vec![0.0; n],
        };
        let initial = SystemState::new(0.0, v0, z0)
            .map_err(|e| Error::scenario(self.section_line("initial"), e.to_string()))?;

        // [integrator] (fully optional)
        let defaults = IntegratorConfig::default();
        let integrator = IntegratorConfig {
            step: match self.get("integrator", "step") {
                Some(e) => parse_unit_scalar(e, Unit::Time)?,
                None => defaults.step,
            },
            horizon: match self.get("integrator", "horizon") {
                Some(e) => parse_unit_scalar(e, Unit::Time)?,
                None => defaults.horizon,
            },
            steady_state_tol: match self.get("integrator", "steady_state_tol") {
                Some(e) => parse_unit_scalar(e, Unit::VoltsPerSecond)?,
                None => defaults.steady_state_tol,
            },
            record_stride: match self.get("integrator", "record_stride") {
                Some(e) => e
                    .value
                    .parse()
                    .map_err(|_| Error::scenario(e.line, "record_stride must be a positive integer"))?,
                None => defaults.record_stride,
            },
        };
        integrator
            .validate()
            .map_err(|e| Error::scenario(self.section_line("integrator"), e.to_string()))?;

        let scenario = Scenario {
            topology,
            kind,
            k_p,
            k_i,
            v_nom,
            v_lo,
            v_hi,
            injection,
            initial,
            integrator,
        };
        // Validate the declared controller combination up front.
        scenario
            .controller_config(None)
            .map_err(|e| Error::scenario(self.section_line("controller"), e.to_string()))?;
        Ok(scenario)
    }
}

fn parse_number(token: &str, line: usize) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| Error::scenario(line, format!("expected a number, found '{token}'")))
}

/// `<numbers...> <unit>`; a single number broadcasts to all terminals.
fn parse_unit_vector(entry: &Entry, n: usize, unit: Unit) -> Result<Vec<f64>> {
    let tokens: Vec<&str> = entry.value.split_whitespace().collect();
    if tokens.len() < 2 {
        return Err(Error::scenario(
            entry.line,
            format!("expected '<values> <unit>' with unit in {{{}}}", unit.expectation()),
        ));
    }
    let unit_token = tokens[tokens.len() - 1];
    let factor = unit.factor(unit_token).ok_or_else(|| {
        Error::scenario(
            entry.line,
            format!("unit mismatch: expected {}, found '{unit_token}'", unit.expectation()),
        )
    })?;
    let numbers = &tokens[..tokens.len() - 1];
    let values: Vec<f64> = numbers
        .iter()
        .map(|t| parse_number(t, entry.line).map(|x| x * factor))
        .collect::<Result<_>>()?;
    if values.len() == 1 {
        return Ok(vec![values[0]; n]);
    }
    if values.len() != n {
        return Err(Error::scenario(
            entry.line,
            format!("expected 1 or {n} values, found {}", values.len()),
        ));
    }
    Ok(values)
}

fn parse_unit_scalar(entry: &Entry, unit: Unit) -> Result<f64> {
    let values = parse_unit_vector(entry, 1, unit)?;
    Ok(values[0])
}

/// `line = <i> <j> <resistance> ohm` with 1-based terminal indices.
fn parse_line_entry(entry: &Entry, n: usize) -> Result<(usize, usize, f64)> {
    let tokens: Vec<&str> = entry.value.split_whitespace().collect();
    if tokens.len() != 4 {
        return Err(Error::scenario(entry.line, "expected 'line = <i> <j> <resistance> ohm'"));
    }
    if Unit::Resistance.factor(tokens[3]).is_none() {
        return Err(Error::scenario(
            entry.line,
            format!("unit mismatch: expected ohm, found '{}'", tokens[3]),
        ));
    }
    let parse_idx = |t: &str| -> Result<usize> {
        let one_based: usize = t
            .parse()
            .map_err(|_| Error::scenario(entry.line, format!("terminal index must be an integer, found '{t}'")))?;
        if one_based == 0 || one_based > n {
            return Err(Error::scenario(
                entry.line,
                format!("terminal index {one_based} outside 1..={n}"),
            ));
        }
        Ok(one_based - 1)
    };
    let i = parse_idx(tokens[0])?;
    let j = parse_idx(tokens[1])?;
    if i == j {
        return Err(Error::scenario(entry.line, format!("self-loop at terminal {}", i + 1)));
    }
    let r = parse_number(tokens[2], entry.line)?;
    Ok((i, j, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bundled_scenario_parses_to_expected_values() {
        let s = Scenario::paper_fig1();
        assert_eq!(s.topology.n_terminals(), 4);
        assert_eq!(s.topology.lines().len(), 5);
        assert!(s.topology.lines().iter().all(|l| l.resistance == 3.7));
        assert_eq!(s.kind, ControllerKind::DeadbandPi);
        assert_eq!(s.k_p, vec![10.0; 4]);
        assert_eq!(s.k_i, vec![10.0; 4]);
        assert_eq!(s.v_nom, vec![100e3; 4]);
        assert_eq!(s.v_lo, vec![95e3; 4]);
        assert_eq!(s.v_hi, vec![105e3; 4]);
        assert_eq!(s.initial.v, vec![105e3, 104.96e3, 104.9e3, 105.07e3]);
        assert_eq!(s.initial.z, vec![0.0; 4]);
        assert_eq!(s.integrator.step, 1e-6);
        assert_eq!(s.integrator.horizon, 1.5e-3);
    }

    #[test]
    fn round_trip_is_field_for_field() {
        let s = Scenario::paper_fig1();
        let emitted = s.emit();
        let reparsed = Scenario::parse_str(&emitted).unwrap();
        assert_eq!(s, reparsed);
    }

    #[test]
    fn kilovolt_round_trip_stays_within_one_ulp() {
        let s = Scenario::paper_fig1();
        // 104.96 kV in the file; internal volts back to kilovolts
        let internal = s.initial.v[1];
        let back = internal / 1000.0;
        let ulp = (104.96f64).to_bits();
        let neighbors = [f64::from_bits(ulp - 1), 104.96, f64::from_bits(ulp + 1)];
        assert!(neighbors.contains(&back), "kV round trip drifted: {back}");
    }

    #[test]
    fn rejects_inverted_bounds_naming_terminal_and_line() {
        let text = "\
mtdc-scenario v1
[grid]
terminals = 2
capacitance = 0.01 F
line = 1 2 3.7 ohm
[controller]
kind = droop
k_p = 10 S
v_nom = 100 kV
v_lo = 106 kV
v_hi = 105 kV
[injection]
i_inj = 0 A
[initial]
v = 100 kV
";
        match Scenario::parse_str(text) {
            Err(Error::Scenario { line, message }) => {
                assert_eq!(line, 10);
                assert!(message.contains("terminal 1"), "{message}");
            }
            other => panic!("expected scenario error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_line_entries() {
        let text = "\
mtdc-scenario v1
[grid]
terminals = 2
capacitance = 0.01 F
line = 1 2 3.7 ohm
line = 2 1 1.0 ohm
[controller]
kind = droop
k_p = 10 S
v_nom = 100 kV
v_lo = 95 kV
v_hi = 105 kV
[injection]
i_inj = 0 A
[initial]
v = 100 kV
";
        match Scenario::parse_str(text) {
            Err(Error::Scenario { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected scenario error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_keys_units_and_missing_keys() {
        let base = |middle: &str| {
            format!(
                "mtdc-scenario v1\n[grid]\nterminals = 2\ncapacitance = 0.01 F\nline = 1 2 3.7 ohm\n\
                 [controller]\nkind = droop\nk_p = 10 S\n{middle}v_lo = 95 kV\nv_hi = 105 kV\n\
                 [injection]\ni_inj = 0 A\n[initial]\nv = 100 kV\n"
            )
        };
        // unknown key
        assert!(matches!(
            Scenario::parse_str(&base("v_nom = 100 kV\nwobble = 3 V\n")),
            Err(Error::Scenario { .. })
        ));
        // unit mismatch
        match Scenario::parse_str(&base("v_nom = 100 A\n")) {
            Err(Error::Scenario { message, .. }) => assert!(message.contains("unit mismatch"), "{message}"),
            other => panic!("expected unit mismatch, got {other:?}"),
        }
        // missing key
        match Scenario::parse_str(&base("")) {
            Err(Error::Scenario { message, .. }) => assert!(message.contains("v_nom"), "{message}"),
            other => panic!("expected missing key error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_disconnected_topology_with_grid_line() {
        let text = "\
mtdc-scenario v1
[grid]
terminals = 3
capacitance = 0.01 F
line = 1 2 3.7 ohm
[controller]
kind = droop
k_p = 10 S
v_nom = 100 kV
v_lo = 95 kV
v_hi = 105 kV
[injection]
i_inj = 0 A
[initial]
v = 100 kV
";
        match Scenario::parse_str(text) {
            Err(Error::Scenario { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("connected"), "{message}");
            }
            other => panic!("expected scenario error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(matches!(
            Scenario::parse_str("mtdc-scenario v2\n"),
            Err(Error::Scenario { line: 1, .. })
        ));
        assert!(matches!(Scenario::parse_str(""), Err(Error::Scenario { line: 1, .. })));
    }

    #[test]
    fn integral_kind_requires_k_i() {
        let text = "\
mtdc-scenario v1
[grid]
terminals = 2
capacitance = 0.01 F
line = 1 2 3.7 ohm
[controller]
kind = pi
k_p = 10 S
v_nom = 100 kV
v_lo = 95 kV
v_hi = 105 kV
[injection]
i_inj = 0 A
[initial]
v = 100 kV
";
        match Scenario::parse_str(text) {
            Err(Error::Scenario { message, .. }) => assert!(message.contains("k_i"), "{message}"),
            other => panic!("expected missing k_i error, got {other:?}"),
        }
    }

    fn arb_scenario() -> impl Strategy<Value = Scenario> {
        (2usize..=5).prop_flat_map(|n| {
            let resistances = proptest::collection::vec(0.5f64..10.0, n - 1);
            let caps = proptest::collection::vec(1e-3f64..0.5, n);
            let currents = proptest::collection::vec(-5e4f64..5e4, n);
            let v0 = proptest::collection::vec(90e3f64..110e3, n);
            let kind_pick = 0usize..3;
            (Just(n), resistances, caps, currents, v0, kind_pick).prop_map(
                |(n, rs, caps, currents, v0, kind_pick)| {
                    let kind =
                        [ControllerKind::Droop, ControllerKind::Pi, ControllerKind::DeadbandPi][kind_pick];
                    let lines: Vec<(usize, usize, f64)> =
                        rs.iter().enumerate().map(|(i, &r)| (i, i + 1, r)).collect();
                    let topology = GridTopology::new(n, &lines, caps).unwrap();
                    let k_i = if kind == ControllerKind::Droop { 0.0 } else { 7.5 };
                    Scenario {
                        topology,
                        kind,
                        k_p: vec![12.5; n],
                        k_i: vec![k_i; n],
                        v_nom: vec![100e3; n],
                        v_lo: vec![95e3; n],
                        v_hi: vec![105e3; n],
                        injection: Injection::new(n, currents).unwrap(),
                        initial: SystemState::new(0.0, v0, vec![0.0; n]).unwrap(),
                        integrator: IntegratorConfig::default(),
                    }
                },
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn emit_parse_round_trip(scenario in arb_scenario()) {
            let reparsed = Scenario::parse_str(&scenario.emit()).unwrap();
            prop_assert_eq!(scenario, reparsed);
        }
    }
}

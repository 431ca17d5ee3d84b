//! Electrical model of a multi-terminal DC grid.
//!
//! Terminals are converter stations with a lumped capacitance `C_i`; they are
//! joined by purely resistive lines. The line current obeys Ohm's law,
//! `I_ij = (V_i - V_j) / R_ij`, and the terminal voltage dynamics follow from
//! Kirchhoff's current law:
//!
//! ```text
//! C_i dV_i/dt = -sum_{j in N(i)} (V_i - V_j)/R_ij + I_i_inj + u_i
//! ```
//!
//! In vector form the coupling term is the weighted graph Laplacian with edge
//! weights `1/R_ij`, so `dV/dt = E (-L V + I_inj + u)` with `E = diag(1/C_i)`.
//!
//! All quantities are SI internally: volts, amperes, ohms, farads, seconds.
//! Kilovolt/millisecond conversions happen only at the file-format boundary.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A resistive line between two terminals, stored with `from < to`.
/// Current sign convention: positive from the lower to the higher index.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Line resistance in ohms, strictly positive.
    pub resistance: f64,
}

/// Weighted graph Laplacian of the line network, edge weights `1/R_ij` (siemens).
///
/// Symmetric, positive semidefinite, row sums zero; rank `n - 1` when the
/// topology is connected.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
}

impl Laplacian {
    /// Stamps conductances into a dense matrix. The diagonal is accumulated as
    /// the negated sum of the row's off-diagonal entries, in line order, so
    /// that summing a row in that same order cancels exactly.
    fn build(n: usize, lines: &[Line]) -> Self {
        let mut matrix = DMatrix::zeros(n, n);
        for line in lines {
            let g = 1.0 / line.resistance;
            matrix[(line.from, line.to)] -= g;
            matrix[(line.to, line.from)] -= g;
            matrix[(line.from, line.from)] += g;
            matrix[(line.to, line.to)] += g;
        }
        Laplacian { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// `L v` as a plain vector.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| (0..n).map(|j| self.matrix[(i, j)] * v[j]).sum())
            .collect()
    }
}

/// Per-terminal uncontrolled injected current (amperes), constant over a run.
/// This is the disturbance the controllers react to.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    currents: Vec<f64>,
}

impl Injection {
    pub fn new(n_terminals: usize, currents: Vec<f64>) -> Result<Self> {
        if currents.len() != n_terminals {
            return Err(Error::validation(format!(
                "injection has {} entries for {} terminals",
                currents.len(),
                n_terminals
            )));
        }
        if let Some(i) = currents.iter().position(|c| !c.is_finite()) {
            return Err(Error::validation(format!(
                "injection at terminal {} is not finite",
                i + 1
            )));
        }
        Ok(Injection { currents })
    }

    pub fn zeros(n_terminals: usize) -> Self {
        Injection {
            currents: vec![0.0; n_terminals],
        }
    }

    pub fn currents(&self) -> &[f64] {
        &self.currents
    }

    /// Sum of all injected currents; the sharing optimum depends only on this.
    pub fn total(&self) -> f64 {
        self.currents.iter().sum()
    }
}

/// The MTDC grid: terminal capacitances plus the resistive line network.
/// Owns the weighted Laplacian built from the line conductances.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTopology {
    n_terminals: usize,
    lines: Vec<Line>,
    capacitances: Vec<f64>,
    laplacian: Laplacian,
}

impl GridTopology {
    /// Validates and canonicalizes the topology, then builds the Laplacian.
    ///
    /// Lines are given as 0-based `(i, j, resistance)` triples in any order and
    /// are stored sorted with `i < j`. Rejected: self-loops, duplicate lines,
    /// out-of-range indices, nonpositive resistances or capacitances, and
    /// disconnected graphs.
    pub fn new(n_terminals: usize, lines: &[(usize, usize, f64)], capacitances: Vec<f64>) -> Result<Self> {
        if n_terminals == 0 {
            return Err(Error::validation("grid needs at least one terminal"));
        }
        if capacitances.len() != n_terminals {
            return Err(Error::validation(format!(
                "{} capacitances given for {} terminals",
                capacitances.len(),
                n_terminals
            )));
        }
        for (i, c) in capacitances.iter().enumerate() {
            if !c.is_finite() || *c <= 0.0 {
                return Err(Error::validation(format!(
                    "capacitance of terminal {} must be positive and finite, got {c}",
                    i + 1
                )));
            }
        }

        let mut canonical = Vec::with_capacity(lines.len());
        for &(i, j, resistance) in lines {
            if i >= n_terminals || j >= n_terminals {
                return Err(Error::topology(format!(
                    "line ({}, {}) references a terminal outside 1..={n_terminals}",
                    i + 1,
                    j + 1
                )));
            }
            if i == j {
                return Err(Error::topology(format!("self-loop at terminal {}", i + 1)));
            }
            if !resistance.is_finite() || resistance <= 0.0 {
                return Err(Error::validation(format!(
                    "resistance of line ({}, {}) must be positive and finite, got {resistance}",
                    i + 1,
                    j + 1
                )));
            }
            let (from, to) = if i < j { (i, j) } else { (j, i) };
            canonical.push(Line { from, to, resistance });
        }
        canonical.sort_by_key(|l| (l.from, l.to));
        if let Some(w) = canonical.windows(2).find(|w| w[0].from == w[1].from && w[0].to == w[1].to) {
            return Err(Error::topology(format!(
                "duplicate line between terminals {} and {}",
                w[0].from + 1,
                w[0].to + 1
            )));
        }

        if !is_connected(n_terminals, &canonical) {
            return Err(Error::topology("line graph is not connected"));
        }

        let laplacian = Laplacian::build(n_terminals, &canonical);
        Ok(GridTopology {
            n_terminals,
            lines: canonical,
            capacitances,
            laplacian,
        })
    }

    pub fn n_terminals(&self) -> usize {
        self.n_terminals
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn capacitances(&self) -> &[f64] {
        &self.capacitances
    }

    pub fn laplacian(&self) -> &Laplacian {
        &self.laplacian
    }

    /// Same grid with every line resistance multiplied by `gamma`.
    /// Used by the sharing analysis to study the low-resistance limit.
    pub fn with_scaled_resistances(&self, gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::validation(format!(
                "resistance scale factor must be positive and finite, got {gamma}"
            )));
        }
        let lines: Vec<(usize, usize, f64)> = self
            .lines
            .iter()
            .map(|l| (l.from, l.to, l.resistance * gamma))
            .collect();
        GridTopology::new(self.n_terminals, &lines, self.capacitances.clone())
    }

    /// Ohm's-law current on every line, in canonical line order, signed
    /// positive from the lower-indexed terminal to the higher-indexed one.
    pub fn line_currents(&self, voltages: &[f64]) -> Result<Vec<f64>> {
        self.check_dim("voltage", voltages)?;
        Ok(self
            .lines
            .iter()
            .map(|l| (voltages[l.from] - voltages[l.to]) / l.resistance)
            .collect())
    }

    /// Right-hand side of the terminal voltage ODE:
    /// `dV_i/dt = (-(L V)_i + I_inj_i + u_i) / C_i`.
    pub fn dynamics_rhs(&self, voltages: &[f64], injection: &[f64], control: &[f64]) -> Result<Vec<f64>> {
        self.check_dim("voltage", voltages)?;
        self.check_dim("injection", injection)?;
        self.check_dim("control", control)?;
        let coupling = self.laplacian.apply(voltages);
        Ok((0..self.n_terminals)
            .map(|i| (-coupling[i] + injection[i] + control[i]) / self.capacitances[i])
            .collect())
    }

    fn check_dim(&self, what: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.n_terminals {
            return Err(Error::validation(format!(
                "{what} vector has {} entries for {} terminals",
                v.len(),
                self.n_terminals
            )));
        }
        Ok(())
    }
}

fn is_connected(n: usize, lines: &[Line]) -> bool {
    if n <= 1 {
        return true;
    }
    let mut adjacency = vec![Vec::new(); n];
    for line in lines {
        adjacency[line.from].push(line.to);
        adjacency[line.to].push(line.from);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in &adjacency[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DVector, SymmetricEigen};
    use proptest::prelude::*;

    /// Four-terminal grid with lines {(1,2),(1,3),(2,3),(2,4),(3,4)}, all
    /// 3.7 ohms, 0.01 F per terminal (0-based indices internally).
    pub(crate) fn four_terminal() -> GridTopology {
        GridTopology::new(
            4,
            &[(0, 1, 3.7), (0, 2, 3.7), (1, 2, 3.7), (1, 3, 3.7), (2, 3, 3.7)],
            vec![0.01; 4],
        )
        .unwrap()
    }

    #[test]
    fn two_terminal_laplacian_stamps_conductances() {
        let topo = GridTopology::new(2, &[(0, 1, 0.5)], vec![0.01, 0.01]).unwrap();
        let l = topo.laplacian().matrix();
        assert_eq!(l[(0, 0)], 2.0);
        assert_eq!(l[(0, 1)], -2.0);
        assert_eq!(l[(1, 0)], -2.0);
        assert_eq!(l[(1, 1)], 2.0);
    }

    #[test]
    fn four_terminal_laplacian_matches_hand_stamp() {
        let topo = four_terminal();
        let l = topo.laplacian().matrix();
        let g = 1.0 / 3.7;
        // degrees 2, 3, 3, 2
        assert_relative_eq!(l[(0, 0)], 2.0 * g, max_relative = 1e-15);
        assert_relative_eq!(l[(1, 1)], 3.0 * g, max_relative = 1e-15);
        assert_relative_eq!(l[(2, 2)], 3.0 * g, max_relative = 1e-15);
        assert_relative_eq!(l[(3, 3)], 2.0 * g, max_relative = 1e-15);
        for (i, j) in [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)] {
            assert_eq!(l[(i, j)], -g);
            assert_eq!(l[(j, i)], -g);
        }
        // non-adjacent pairs
        assert_eq!(l[(0, 3)], 0.0);
        assert_eq!(l[(3, 0)], 0.0);
    }

    #[test]
    fn laplacian_row_sums_cancel_exactly_in_stamp_order() {
        let topo = four_terminal();
        let l = topo.laplacian().matrix();
        for i in 0..4 {
            // off-diagonals first (in index order, matching the stamp), diagonal last
            let mut off = 0.0;
            for j in 0..4 {
                if j != i {
                    off += l[(i, j)];
                }
            }
            assert_eq!(off + l[(i, i)], 0.0);
        }
    }

    #[test]
    fn laplacian_is_psd_with_rank_n_minus_1() {
        let topo = four_terminal();
        let eig = SymmetricEigen::new(topo.laplacian().matrix().clone());
        let mut lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let norm = lambdas.last().unwrap().abs();
        assert!(lambdas[0] >= -1e-9 * norm, "smallest eigenvalue {}", lambdas[0]);
        assert!(lambdas[1] > 0.0, "second smallest eigenvalue {}", lambdas[1]);
    }

    #[test]
    fn line_currents_zero_for_uniform_voltage() {
        let topo = four_terminal();
        let currents = topo.line_currents(&[100e3; 4]).unwrap();
        assert!(currents.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn line_current_follows_ohms_law() {
        let topo = GridTopology::new(2, &[(0, 1, 0.5)], vec![0.01, 0.01]).unwrap();
        let currents = topo.line_currents(&[100e3, 99e3]).unwrap();
        assert_eq!(currents, vec![2000.0]);
    }

    #[test]
    fn four_terminal_line_currents_from_paper_voltages() {
        let topo = four_terminal();
        let v = [105e3, 104.96e3, 104.9e3, 105.07e3];
        let currents = topo.line_currents(&v).unwrap();
        // canonical order (1,2),(1,3),(2,3),(2,4),(3,4); I_12 = 40/3.7 A
        assert_relative_eq!(currents[0], 40.0 / 3.7, max_relative = 1e-12);
        assert_relative_eq!(currents[1], 100.0 / 3.7, max_relative = 1e-12);
        assert_relative_eq!(currents[2], 60.0 / 3.7, max_relative = 1e-12);
        assert_relative_eq!(currents[3], -110.0 / 3.7, max_relative = 1e-12);
        assert_relative_eq!(currents[4], -170.0 / 3.7, max_relative = 1e-12);
    }

    #[test]
    fn line_current_antisymmetric_under_endpoint_swap() {
        // Swapped input order canonicalizes to the same line, so the signed
        // current must satisfy I_ij = -(V_j - V_i)/R.
        let topo = GridTopology::new(2, &[(1, 0, 0.5)], vec![0.01, 0.01]).unwrap();
        let v = [100e3, 99e3];
        let currents = topo.line_currents(&v).unwrap();
        assert_eq!(currents[0], -((v[1] - v[0]) / 0.5));
    }

    #[test]
    fn rhs_zero_for_uniform_voltage_without_inputs() {
        let topo = four_terminal();
        let rhs = topo.dynamics_rhs(&[100e3; 4], &[0.0; 4], &[0.0; 4]).unwrap();
        for d in rhs {
            // L*1n cancels only up to roundoff (~eps * g * V ~ 1e-11 A),
            // amplified by 1/C = 100; still twelve orders below the kV/ms scale
            assert!(d.abs() < 1e-8, "dV/dt = {d}");
        }
    }

    #[test]
    fn single_terminal_rhs_is_current_over_capacitance() {
        let topo = GridTopology::new(1, &[], vec![0.01]).unwrap();
        let rhs = topo.dynamics_rhs(&[100e3], &[5.0], &[0.0]).unwrap();
        assert_eq!(rhs, vec![500.0]);
    }

    #[test]
    fn rejects_bad_topologies() {
        assert!(matches!(
            GridTopology::new(2, &[], vec![0.01, 0.01]),
            Err(Error::Topology(_))
        ));
        assert!(matches!(
            GridTopology::new(4, &[(0, 1, 3.7), (2, 3, 3.7)], vec![0.01; 4]),
            Err(Error::Topology(_))
        ));
        assert!(matches!(
            GridTopology::new(2, &[(0, 0, 1.0)], vec![0.01, 0.01]),
            Err(Error::Topology(_))
        ));
        assert!(matches!(
            GridTopology::new(2, &[(0, 1, 1.0), (1, 0, 2.0)], vec![0.01, 0.01]),
            Err(Error::Topology(_))
        ));
        assert!(matches!(
            GridTopology::new(2, &[(0, 3, 1.0)], vec![0.01, 0.01]),
            Err(Error::Topology(_))
        ));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            GridTopology::new(2, &[(0, 1, -0.5)], vec![0.01, 0.01]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            GridTopology::new(2, &[(0, 1, 0.5)], vec![0.01, -0.01]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            GridTopology::new(2, &[(0, 1, 0.5)], vec![0.01]),
            Err(Error::Validation(_))
        ));
        let topo = four_terminal();
        assert!(topo.line_currents(&[1.0, 2.0]).is_err());
        assert!(topo.dynamics_rhs(&[0.0; 4], &[0.0; 3], &[0.0; 4]).is_err());
        assert!(Injection::new(4, vec![1.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(Injection::new(3, vec![1.0, 2.0]).is_err());
    }

    /// Random connected topology: a random spanning tree plus extra edges.
    fn arb_topology() -> impl Strategy<Value = GridTopology> {
        (2usize..=8).prop_flat_map(|n| {
            let tree = proptest::collection::vec(0usize..usize::MAX, n - 1);
            let extras = proptest::collection::vec((0usize..n, 0usize..n), 0..=n);
            let resistances = proptest::collection::vec(0.1f64..10.0, 2 * n);
            let caps = proptest::collection::vec(1e-3f64..1.0, n);
            (Just(n), tree, extras, resistances, caps).prop_map(|(n, tree, extras, rs, caps)| {
                let mut lines: Vec<(usize, usize, f64)> = Vec::new();
                let mut seen = std::collections::HashSet::new();
                let mut ridx = 0;
                for (k, pick) in tree.iter().enumerate() {
                    let child = k + 1;
                    let parent = pick % child;
                    lines.push((parent, child, rs[ridx % rs.len()]));
                    seen.insert((parent, child));
                    ridx += 1;
                }
                for (a, b) in extras {
                    let (i, j) = if a < b { (a, b) } else { (b, a) };
                    if i != j && !seen.contains(&(i, j)) {
                        seen.insert((i, j));
                        lines.push((i, j, rs[ridx % rs.len()]));
                        ridx += 1;
                    }
                }
                GridTopology::new(n, &lines, caps).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        /// Matrix-form RHS equals the per-neighbor scalar sum.
        #[test]
        fn rhs_matches_scalar_neighbor_sum(
            topo in arb_topology(),
            seed in proptest::collection::vec(-1e5f64..1e5, 3 * 8),
        ) {
            let n = topo.n_terminals();
            let v: Vec<f64> = (0..n).map(|i| 1e5 + seed[i]).collect();
            let inj: Vec<f64> = (0..n).map(|i| seed[n + i]).collect();
            let u: Vec<f64> = (0..n).map(|i| seed[2 * n + i]).collect();
            let rhs = topo.dynamics_rhs(&v, &inj, &u).unwrap();

            for i in 0..n {
                let mut line_sum = 0.0;
                let mut line_magnitude = 0.0;
                for line in topo.lines() {
                    if line.from == i {
                        line_sum += (v[line.from] - v[line.to]) / line.resistance;
                        line_magnitude += ((v[line.from] - v[line.to]) / line.resistance).abs();
                    } else if line.to == i {
                        line_sum += (v[line.to] - v[line.from]) / line.resistance;
                        line_magnitude += ((v[line.to] - v[line.from]) / line.resistance).abs();
                    }
                }
                let scalar = (-line_sum + inj[i] + u[i]) / topo.capacitances()[i];
                // roundoff scales with the terms being summed, which may
                // cancel almost completely in the result
                let scale = (line_magnitude + inj[i].abs() + u[i].abs()) / topo.capacitances()[i];
                prop_assert!(
                    (rhs[i] - scalar).abs() <= 1e-12 * scale.max(1.0),
                    "terminal {i}: matrix {} vs scalar {}", rhs[i], scalar
                );
            }
        }

        /// Charge balance: sum_i C_i dV_i/dt = sum_i (I_inj_i + u_i).
        /// Line currents cancel pairwise, so the Laplacian term drops out.
        #[test]
        fn charge_balance_holds(
            topo in arb_topology(),
            seed in proptest::collection::vec(-1e5f64..1e5, 3 * 8),
        ) {
            let n = topo.n_terminals();
            let v: Vec<f64> = (0..n).map(|i| 1e5 + seed[i]).collect();
            let inj: Vec<f64> = (0..n).map(|i| seed[n + i]).collect();
            let u: Vec<f64> = (0..n).map(|i| seed[2 * n + i]).collect();
            let rhs = topo.dynamics_rhs(&v, &inj, &u).unwrap();

            let lhs: f64 = (0..n).map(|i| topo.capacitances()[i] * rhs[i]).sum();
            let total: f64 = (0..n).map(|i| inj[i] + u[i]).sum();
            // the pairwise-cancelling line currents set the roundoff floor
            let coupling: f64 = topo.laplacian().apply(&v).iter().map(|x| x.abs()).sum();
            let scale: f64 = (0..n)
                .map(|i| inj[i].abs() + u[i].abs())
                .sum::<f64>()
                .max(coupling)
                .max(1.0);
            prop_assert!((lhs - total).abs() <= 1e-9 * scale, "lhs {lhs} vs {total}");
        }

        /// The all-ones vector is in the Laplacian kernel: 1^T L v stays at
        /// roundoff level relative to ||L v||.
        #[test]
        fn ones_vector_annihilates_laplacian(
            topo in arb_topology(),
            seed in proptest::collection::vec(-1e4f64..1e4, 8),
        ) {
            let n = topo.n_terminals();
            let v: Vec<f64> = (0..n).map(|i| 1e5 + seed[i]).collect();
            let lv = topo.laplacian().apply(&v);
            let residual: f64 = lv.iter().sum();
            let norm = DVector::from_column_slice(&lv).norm();
            let fallback = 1e-12 * topo.laplacian().matrix().norm() * DVector::from_column_slice(&v).norm();
            prop_assert!(residual.abs() <= 1e-9 * norm.max(fallback));
        }

        /// Uniform voltage produces coupling currents at pure roundoff level.
        #[test]
        fn uniform_voltage_in_kernel(topo in arb_topology(), level in 1e3f64..2e5) {
            let n = topo.n_terminals();
            let lv = topo.laplacian().apply(&vec![level; n]);
            let bound = 1e-12 * topo.laplacian().matrix().norm() * level;
            for x in lv {
                prop_assert!(x.abs() <= bound.max(1e-12));
            }
        }
    }
}

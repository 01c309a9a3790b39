//! Physical instance data and admittance assembly.
//!
//! A [`Network`] holds buses, lines, the discrete upgrade options that act on
//! lines, linear selection rows over the upgrade vector, and the load
//! scenarios the plan must survive. Everything is per-unit.
//!
//! The admittance matrix is a pure Laplacian: each line stamps its branch
//! admittance `y` as `+y` on both diagonals and `-y` on the off-diagonal pair.
//! Shunt elements are not representable, so every row sums to zero.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Slack used when comparing `Aa` against `b`.
pub const SELECTION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series branch admittance.
    pub y_branch: Complex64,
    /// Current magnitude limit.
    pub i_max: f64,
}

/// A discrete reinforcement of one line: adds `delta_y` to its branch
/// admittance and `delta_i` to its current limit.
#[derive(Debug, Clone, PartialEq)]
pub struct UpgradeOption {
    pub id: usize,
    pub line_id: usize,
    pub delta_y: Complex64,
    pub delta_i: f64,
    pub cost: f64,
}

/// One load/generation snapshot.
///
/// Injection bounds are read componentwise: the real part of `s_min[j]` bounds
/// active power from below, the imaginary part bounds reactive power. Bounds
/// may be infinite, but each component keeps at least one finite side.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: usize,
    pub s_min: Vec<Complex64>,
    pub s_max: Vec<Complex64>,
    pub slack_bus: usize,
    pub slack_voltage: f64,
}

impl Scenario {
    /// True when both components of bus `j`'s injection box are degenerate.
    pub fn is_pinned(&self, j: usize) -> bool {
        self.s_min[j] == self.s_max[j]
    }
}

/// Where a selection row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RowOrigin {
    /// Row `index` of the user-supplied `Aa <= b` system.
    User { index: usize },
    /// Auto-generated `sum of options on line <= 1`.
    AtMostOnePerLine { line: usize },
}

impl fmt::Display for RowOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowOrigin::User { index } => write!(f, "user row {index}"),
            RowOrigin::AtMostOnePerLine { line } => {
                write!(f, "at-most-one-upgrade row for line {line}")
            }
        }
    }
}

/// A dense row `coeffs . a <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
    pub origin: RowOrigin,
}

impl SelectionRow {
    pub fn lhs(&self, a: &[u8]) -> f64 {
        self.coeffs
            .iter()
            .zip(a)
            .map(|(c, &ai)| c * f64::from(ai))
            .sum()
    }

    pub fn is_satisfied(&self, a: &[u8]) -> bool {
        self.lhs(a) <= self.rhs + SELECTION_EPS
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub upgrades: Vec<UpgradeOption>,
    /// User-supplied rows of `Aa <= b`; see [`Network::selection_rows`] for
    /// the complete system including the per-line exclusivity rows.
    pub user_rows: Vec<(Vec<f64>, f64)>,
    pub scenarios: Vec<Scenario>,
}

impl Network {
    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_line(&self) -> usize {
        self.lines.len()
    }

    pub fn n_upg(&self) -> usize {
        self.upgrades.len()
    }

    pub fn n_scen(&self) -> usize {
        self.scenarios.len()
    }

    /// Upgrade option ids acting on `line`, ascending.
    pub fn options_for_line(&self, line: usize) -> Vec<usize> {
        self.upgrades
            .iter()
            .filter(|u| u.line_id == line)
            .map(|u| u.id)
            .collect()
    }

    /// Lines incident to `bus`, ascending.
    pub fn incident_lines(&self, bus: usize) -> impl Iterator<Item = &Line> {
        self.lines
            .iter()
            .filter(move |l| l.from_bus == bus || l.to_bus == bus)
    }

    /// The complete selection system: user rows verbatim (in order), then one
    /// `sum_{i in U_line} a_i <= 1` row for every line with two or more
    /// options, by ascending line id.
    pub fn selection_rows(&self) -> Vec<SelectionRow> {
        let n_u = self.n_upg();
        let mut rows: Vec<SelectionRow> = self
            .user_rows
            .iter()
            .enumerate()
            .map(|(index, (coeffs, rhs))| SelectionRow {
                coeffs: coeffs.clone(),
                rhs: *rhs,
                origin: RowOrigin::User { index },
            })
            .collect();
        for line in &self.lines {
            let opts = self.options_for_line(line.id);
            if opts.len() < 2 {
                continue;
            }
            let mut coeffs = vec![0.0; n_u];
            for i in opts {
                coeffs[i] = 1.0;
            }
            rows.push(SelectionRow {
                coeffs,
                rhs: 1.0,
                origin: RowOrigin::AtMostOnePerLine { line: line.id },
            });
        }
        rows
    }

    /// Upgrade costs, indexed by option id.
    pub fn costs(&self) -> Vec<f64> {
        self.upgrades.iter().map(|u| u.cost).collect()
    }
}

/// Dense complex `n x n` bus admittance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    n: usize,
    entries: Vec<Complex64>,
}

impl AdmittanceMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.n + col]
    }

    /// Stamps a series branch admittance `y` between buses `j` and `l`.
    pub fn stamp_branch(&mut self, j: usize, l: usize, y: Complex64) {
        let n = self.n;
        self.entries[j * n + j] += y;
        self.entries[l * n + l] += y;
        self.entries[j * n + l] -= y;
        self.entries[l * n + j] -= y;
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|r| {
                self.entries[r * self.n..(r + 1) * self.n]
                    .iter()
                    .zip(v)
                    .map(|(y, x)| y * x)
                    .sum()
            })
            .collect()
    }

    pub fn row_sum(&self, row: usize) -> Complex64 {
        self.entries[row * self.n..(row + 1) * self.n].iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.norm()).fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|r| (r + 1..self.n).all(|c| self.get(r, c) == self.get(c, r)))
    }

    /// Complex bus injections `diag(v) * conj(Y v)`.
    pub fn injections(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.mul_vec(v)
            .into_iter()
            .zip(v)
            .map(|(i, vj)| vj * i.conj())
            .collect()
    }
}

/// Admittance matrix and line ratings for one upgrade decision.
#[derive(Debug, Clone, PartialEq)]
pub struct UpgradedGrid {
    pub admittance: AdmittanceMatrix,
    /// Effective branch admittance per line.
    pub y_branch: Vec<Complex64>,
    /// Effective current limit per line.
    pub i_max: Vec<f64>,
}

/// Assembles the base Laplacian from every line's branch admittance.
pub fn assemble_admittance(net: &Network) -> AdmittanceMatrix {
    let mut y = AdmittanceMatrix::zeros(net.n_bus());
    for line in &net.lines {
        y.stamp_branch(line.from_bus, line.to_bus, line.y_branch);
    }
    y
}

/// Checks `a` for length, binarity and every selection row.
pub fn check_assignment(net: &Network, a: &[u8]) -> Result<()> {
    if a.len() != net.n_upg() {
        return Err(Error::AssignmentLength {
            expected: net.n_upg(),
            got: a.len(),
        });
    }
    if let Some((index, &value)) = a.iter().enumerate().find(|(_, &v)| v > 1) {
        return Err(Error::NonBinary { index, value });
    }
    for (row, sel) in net.selection_rows().iter().enumerate() {
        if !sel.is_satisfied(a) {
            return Err(Error::SelectionViolated {
                row,
                description: sel.origin.to_string(),
                lhs: sel.lhs(a),
                rhs: sel.rhs,
            });
        }
    }
    Ok(())
}

/// Applies the selected upgrades to the base network.
///
/// Each selected option replaces its line's branch admittance with
/// `y_branch + delta_y` and raises the limit by `delta_i`. Options are
/// restricted to one line each, so the result equals the base matrix plus the
/// sum of the selected options' branch stamps.
pub fn apply_upgrades(net: &Network, a: &[u8]) -> Result<UpgradedGrid> {
    check_assignment(net, a)?;
    let mut y_branch: Vec<Complex64> = net.lines.iter().map(|l| l.y_branch).collect();
    let mut i_max: Vec<f64> = net.lines.iter().map(|l| l.i_max).collect();
    for (opt, _) in net.upgrades.iter().zip(a).filter(|(_, &ai)| ai == 1) {
        y_branch[opt.line_id] += opt.delta_y;
        i_max[opt.line_id] += opt.delta_i;
    }
    let mut admittance = AdmittanceMatrix::zeros(net.n_bus());
    for (line, &y) in net.lines.iter().zip(&y_branch) {
        admittance.stamp_branch(line.from_bus, line.to_bus, y);
    }
    Ok(UpgradedGrid {
        admittance,
        y_branch,
        i_max,
    })
}

/// A single violated network invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    NoBuses,
    IdMismatch {
        kind: &'static str,
        position: usize,
        id: usize,
    },
    DuplicateId {
        kind: &'static str,
        id: usize,
    },
    BusBounds {
        bus: usize,
        v_min: f64,
        v_max: f64,
    },
    DanglingBus {
        line: usize,
        bus: usize,
    },
    SelfLoop {
        line: usize,
        bus: usize,
    },
    DuplicateLine {
        line: usize,
        first: usize,
    },
    LineLimit {
        line: usize,
        i_max: f64,
    },
    ZeroBranch {
        line: usize,
    },
    DanglingLine {
        upgrade: usize,
        line: usize,
        n_line: usize,
    },
    NegativeDeltaI {
        upgrade: usize,
        delta_i: f64,
    },
    NegativeCost {
        upgrade: usize,
        cost: f64,
    },
    SingularUpgrade {
        upgrade: usize,
        line: usize,
    },
    NonFiniteUpgrade {
        upgrade: usize,
    },
    SelectionWidth {
        row: usize,
        width: usize,
        n_upg: usize,
    },
    NonFiniteSelection {
        row: usize,
    },
    ScenarioBusCount {
        scenario: usize,
        got: usize,
        n_bus: usize,
    },
    InjectionBounds {
        scenario: usize,
        bus: usize,
    },
    UnboundedInjection {
        scenario: usize,
        bus: usize,
    },
    SlackBus {
        scenario: usize,
        bus: usize,
    },
    SlackVoltage {
        scenario: usize,
        v: f64,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ValidationIssue::*;
        match self {
            NoBuses => write!(f, "network has no buses"),
            IdMismatch { kind, position, id } => {
                write!(
                    f,
                    "{kind} at position {position} has id {id}; ids must be dense"
                )
            }
            DuplicateId { kind, id } => write!(f, "duplicate {kind} id {id}"),
            BusBounds { bus, v_min, v_max } => write!(
                f,
                "bus {bus}: voltage bounds must satisfy 0 < v_min <= v_max (got {v_min}, {v_max})"
            ),
            DanglingBus { line, bus } => write!(f, "line {line} references missing bus {bus}"),
            SelfLoop { line, bus } => write!(f, "line {line} connects bus {bus} to itself"),
            DuplicateLine { line, first } => {
                write!(f, "line {line} duplicates the bus pair of line {first}")
            }
            LineLimit { line, i_max } => {
                write!(
                    f,
                    "line {line}: current limit must be positive (got {i_max})"
                )
            }
            ZeroBranch { line } => {
                write!(
                    f,
                    "line {line}: branch admittance must be finite and nonzero"
                )
            }
            DanglingLine {
                upgrade,
                line,
                n_line,
            } => write!(
                f,
                "upgrade {upgrade} references missing line {line} (network has {n_line} lines)"
            ),
            NegativeDeltaI { upgrade, delta_i } => {
                write!(f, "upgrade {upgrade}: delta_i must be >= 0 (got {delta_i})")
            }
            NegativeCost { upgrade, cost } => {
                write!(f, "upgrade {upgrade}: cost must be >= 0 (got {cost})")
            }
            SingularUpgrade { upgrade, line } => write!(
                f,
                "upgrade {upgrade}: upgraded branch admittance of line {line} is zero"
            ),
            NonFiniteUpgrade { upgrade } => write!(f, "upgrade {upgrade}: non-finite data"),
            SelectionWidth { row, width, n_upg } => write!(
                f,
                "selection row {row} has {width} coefficients, expected {n_upg}"
            ),
            NonFiniteSelection { row } => write!(f, "selection row {row} has non-finite data"),
            ScenarioBusCount {
                scenario,
                got,
                n_bus,
            } => write!(
                f,
                "scenario {scenario} has bounds for {got} buses, expected {n_bus}"
            ),
            InjectionBounds { scenario, bus } => write!(
                f,
                "scenario {scenario}, bus {bus}: injection lower bound exceeds upper bound"
            ),
            UnboundedInjection { scenario, bus } => write!(
                f,
                "scenario {scenario}, bus {bus}: each injection component needs a finite bound"
            ),
            SlackBus { scenario, bus } => {
                write!(f, "scenario {scenario}: slack bus {bus} does not exist")
            }
            SlackVoltage { scenario, v } => write!(
                f,
                "scenario {scenario}: slack voltage {v} outside the slack bus voltage bounds"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidNetwork(self.issues))
        }
    }
}

/// Collects every violated invariant of `net`.
pub fn validate_network(net: &Network) -> ValidationReport {
    use ValidationIssue::*;
    let mut issues = Vec::new();
    let n_bus = net.n_bus();
    let n_line = net.n_line();
    let n_upg = net.n_upg();

    if n_bus == 0 {
        issues.push(NoBuses);
    }
    for (position, bus) in net.buses.iter().enumerate() {
        if bus.id != position {
            issues.push(IdMismatch {
                kind: "bus",
                position,
                id: bus.id,
            });
        }
        let ok = bus.v_min.is_finite()
            && bus.v_max.is_finite()
            && bus.v_min > 0.0
            && bus.v_min <= bus.v_max;
        if !ok {
            issues.push(BusBounds {
                bus: bus.id,
                v_min: bus.v_min,
                v_max: bus.v_max,
            });
        }
    }

    let mut pairs: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (position, line) in net.lines.iter().enumerate() {
        if line.id != position {
            issues.push(IdMismatch {
                kind: "line",
                position,
                id: line.id,
            });
        }
        let mut endpoints_ok = true;
        for bus in [line.from_bus, line.to_bus] {
            if bus >= n_bus {
                issues.push(DanglingBus { line: line.id, bus });
                endpoints_ok = false;
            }
        }
        if line.from_bus == line.to_bus {
            issues.push(SelfLoop {
                line: line.id,
                bus: line.from_bus,
            });
            endpoints_ok = false;
        }
        if endpoints_ok {
            let key = (
                line.from_bus.min(line.to_bus),
                line.from_bus.max(line.to_bus),
            );
            if let Some(&first) = pairs.get(&key) {
                issues.push(DuplicateLine {
                    line: line.id,
                    first,
                });
            } else {
                pairs.insert(key, line.id);
            }
        }
        if !(line.i_max.is_finite() && line.i_max > 0.0) {
            issues.push(LineLimit {
                line: line.id,
                i_max: line.i_max,
            });
        }
        if !(line.y_branch.is_finite() && line.y_branch.norm() > 0.0) {
            issues.push(ZeroBranch { line: line.id });
        }
    }

    for (position, opt) in net.upgrades.iter().enumerate() {
        if opt.id != position {
            issues.push(IdMismatch {
                kind: "upgrade",
                position,
                id: opt.id,
            });
        }
        if !(opt.delta_y.is_finite() && opt.delta_i.is_finite() && opt.cost.is_finite()) {
            issues.push(NonFiniteUpgrade { upgrade: opt.id });
        }
        if opt.delta_i < 0.0 {
            issues.push(NegativeDeltaI {
                upgrade: opt.id,
                delta_i: opt.delta_i,
            });
        }
        if opt.cost < 0.0 {
            issues.push(NegativeCost {
                upgrade: opt.id,
                cost: opt.cost,
            });
        }
        match net.lines.get(opt.line_id) {
            None => issues.push(DanglingLine {
                upgrade: opt.id,
                line: opt.line_id,
                n_line,
            }),
            Some(line) => {
                if (line.y_branch + opt.delta_y).norm() == 0.0 {
                    issues.push(SingularUpgrade {
                        upgrade: opt.id,
                        line: line.id,
                    });
                }
            }
        }
    }

    for (row, (coeffs, rhs)) in net.user_rows.iter().enumerate() {
        if coeffs.len() != n_upg {
            issues.push(SelectionWidth {
                row,
                width: coeffs.len(),
                n_upg,
            });
        }
        if !rhs.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            issues.push(NonFiniteSelection { row });
        }
    }

    for (position, scen) in net.scenarios.iter().enumerate() {
        if scen.id != position {
            issues.push(IdMismatch {
                kind: "scenario",
                position,
                id: scen.id,
            });
        }
        if scen.s_min.len() != n_bus || scen.s_max.len() != n_bus {
            issues.push(ScenarioBusCount {
                scenario: scen.id,
                got: scen.s_min.len().min(scen.s_max.len()),
                n_bus,
            });
        } else {
            for bus in 0..n_bus {
                let (lo, hi) = (scen.s_min[bus], scen.s_max[bus]);
                if lo.re.is_nan()
                    || lo.im.is_nan()
                    || hi.re.is_nan()
                    || hi.im.is_nan()
                    || lo.re > hi.re
                    || lo.im > hi.im
                {
                    issues.push(InjectionBounds {
                        scenario: scen.id,
                        bus,
                    });
                }
                let free = |a: f64, b: f64| !a.is_finite() && !b.is_finite();
                if free(lo.re, hi.re) || free(lo.im, hi.im) {
                    issues.push(UnboundedInjection {
                        scenario: scen.id,
                        bus,
                    });
                }
            }
        }
        match net.buses.get(scen.slack_bus) {
            None => issues.push(SlackBus {
                scenario: scen.id,
                bus: scen.slack_bus,
            }),
            Some(bus) => {
                let v = scen.slack_voltage;
                if !(v > 0.0 && v >= bus.v_min && v <= bus.v_max) {
                    issues.push(SlackVoltage {
                        scenario: scen.id,
                        v,
                    });
                }
            }
        }
    }

    ValidationReport { issues }
}

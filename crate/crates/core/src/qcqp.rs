//! Standard-form mixed-integer QCQP.
//!
//! Every constraint has the shape
//!
//! ```text
//! alpha <= z' Q z + q' y + m' a <= beta
//! ```
//!
//! where, per scenario, `z = [v_r; v_q]` holds rectangular bus voltages and
//! `y = [l_r; l_q]` holds directed line powers. The binary vector `a` is
//! shared by all scenarios and additionally constrained by linear rows
//! `A a <= b`. The objective is linear in `a`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SelectionRow;

/// Default absolute feasibility tolerance.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Index map for the per-scenario variable blocks.
///
/// `z` has length `2N`: `v_r` at `0..N`, `v_q` at `N..2N`. `y` has length
/// `4L`: `l_r` at `0..2L`, `l_q` at `2L..4L`. Within each half, directed entry
/// `2e` is the flow at the from-bus end of line `e`, `2e + 1` the flow at the
/// to-bus end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableLayout {
    pub n_bus: usize,
    pub n_line: usize,
    pub n_scen: usize,
    pub n_upg: usize,
}

impl VariableLayout {
    pub fn z_len(&self) -> usize {
        2 * self.n_bus
    }

    pub fn y_len(&self) -> usize {
        4 * self.n_line
    }

    pub fn vr(&self, bus: usize) -> usize {
        bus
    }

    pub fn vq(&self, bus: usize) -> usize {
        self.n_bus + bus
    }

    /// Directed flow index for line `line` at its from-bus (`to_end = false`)
    /// or to-bus (`to_end = true`) end.
    pub fn directed(&self, line: usize, to_end: bool) -> usize {
        2 * line + usize::from(to_end)
    }

    pub fn lr(&self, dir: usize) -> usize {
        dir
    }

    pub fn lq(&self, dir: usize) -> usize {
        2 * self.n_line + dir
    }
}

/// Symmetric matrix stored as its upper triangle.
///
/// A diagonal triplet `(r, r, v)` contributes `v * x_r^2`; an off-diagonal
/// triplet `(r, c, v)` with `r < c` stands for `Q_rc = Q_cr = v` and
/// contributes `2 v x_r x_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSymMatrix {
    dim: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl SparseSymMatrix {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            triplets: Vec::new(),
        }
    }

    /// Wraps triplets as given, preserving their order.
    pub fn from_triplets(dim: usize, triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(r, c, v) in &triplets {
            if r > c {
                return Err(Error::MalformedProblem(format!(
                    "triplet ({r}, {c}) is below the diagonal"
                )));
            }
            if c >= dim {
                return Err(Error::MalformedProblem(format!(
                    "triplet ({r}, {c}) outside dimension {dim}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::MalformedProblem(format!(
                    "triplet ({r}, {c}) has non-finite value"
                )));
            }
            if !seen.insert((r, c)) {
                return Err(Error::MalformedProblem(format!(
                    "duplicate triplet ({r}, {c})"
                )));
            }
        }
        Ok(Self { dim, triplets })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// `x' Q x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.triplets
            .iter()
            .map(|&(r, c, v)| {
                if r == c {
                    v * x[r] * x[r]
                } else {
                    2.0 * v * x[r] * x[c]
                }
            })
            .sum()
    }
}

/// Accumulates symmetric entries in full-matrix terms before canonicalizing.
#[derive(Debug, Clone)]
pub struct SymBuilder {
    dim: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl SymBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    /// Adds `v` to the symmetric entry `Q_rc = Q_cr`.
    pub fn add(&mut self, r: usize, c: usize, v: f64) -> &mut Self {
        let key = (r.min(c), r.max(c));
        *self.entries.entry(key).or_insert(0.0) += v;
        self
    }

    /// Adds the monomial `coeff * x_r * x_c` to the quadratic form. Cross
    /// terms are split evenly between `Q_rc` and `Q_cr`.
    pub fn add_monomial(&mut self, r: usize, c: usize, coeff: f64) -> &mut Self {
        if r == c {
            self.add(r, r, coeff)
        } else {
            self.add(r, c, 0.5 * coeff)
        }
    }

    /// Multiplies every entry by `s`.
    pub fn scale(&mut self, s: f64) -> &mut Self {
        for v in self.entries.values_mut() {
            *v *= s;
        }
        self
    }

    /// Sorted upper-triangle triplets with exact zeros removed.
    pub fn build(&self) -> SparseSymMatrix {
        SparseSymMatrix {
            dim: self.dim,
            triplets: self
                .entries
                .iter()
                .filter(|(_, &v)| v != 0.0)
                .map(|(&(r, c), &v)| (r, c, v))
                .collect(),
        }
    }
}

/// Sparse vector as `(index, value)` pairs with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVec {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn unit(dim: usize, index: usize) -> Self {
        Self {
            dim,
            entries: vec![(index, 1.0)],
        }
    }

    pub fn from_entries(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::MalformedProblem(format!(
                    "sparse vector indices not strictly increasing at {}",
                    w[1].0
                )));
            }
        }
        if let Some(&(i, _)) = entries.iter().find(|(i, _)| *i >= dim) {
            return Err(Error::MalformedProblem(format!(
                "sparse index {i} outside dimension {dim}"
            )));
        }
        if entries.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::MalformedProblem(
                "sparse vector has non-finite value".into(),
            ));
        }
        Ok(Self { dim, entries })
    }

    /// Builds from unsorted pairs, summing duplicates and dropping zeros.
    pub fn accumulate(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut map = BTreeMap::new();
        for (i, v) in pairs {
            *map.entry(i).or_insert(0.0) += v;
        }
        Self {
            dim,
            entries: map.into_iter().filter(|(_, v)| *v != 0.0).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * x[i]).sum()
    }

    pub fn dot_binary(&self, a: &[u8]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * f64::from(a[i])).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Voltage,
    Current,
    LinePowerReal,
    LinePowerReactive,
    BalanceReal,
    BalanceReactive,
    /// Optional `|y_i| <= M` box row.
    FlowBox,
}

/// Network element a constraint row was generated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Element {
    Bus(usize),
    Line(usize),
    /// Directed flow of `line` measured at bus `at_bus`.
    Flow {
        line: usize,
        at_bus: usize,
    },
    /// Entry `index` of the scenario's `y` block.
    FlowVar(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum UpgradeTag {
    Base,
    Option(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub element: Element,
    pub upgrade: UpgradeTag,
}

impl Provenance {
    pub fn base(element: Element) -> Self {
        Self {
            element,
            upgrade: UpgradeTag::Base,
        }
    }
}

/// One row `alpha <= z'Qz + q'y + m'a <= beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConstraint {
    /// Scenario whose `z`/`y` blocks the row reads; `None` for rows over `a`
    /// only.
    pub scenario: Option<usize>,
    pub quad: SparseSymMatrix,
    pub lin_y: SparseVec,
    pub lin_a: SparseVec,
    pub alpha: f64,
    pub beta: f64,
    pub kind: ConstraintKind,
    pub provenance: Provenance,
}

impl QuadConstraint {
    pub fn check_bounds(&self) -> Result<()> {
        if self.alpha.is_nan() || self.beta.is_nan() || self.alpha > self.beta {
            return Err(Error::MalformedProblem(format!(
                "bounds [{}, {}] are not ordered",
                self.alpha, self.beta
            )));
        }
        if !self.alpha.is_finite() && !self.beta.is_finite() {
            return Err(Error::MalformedProblem(
                "constraint has no finite bound".into(),
            ));
        }
        if self.alpha == f64::INFINITY || self.beta == f64::NEG_INFINITY {
            return Err(Error::MalformedProblem(
                "bound has the wrong sign of infinity".into(),
            ));
        }
        Ok(())
    }
}

/// Candidate values for one scenario's continuous blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBlock {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub a: Vec<u8>,
    pub blocks: Vec<ScenarioBlock>,
}

impl Point {
    /// All-zero point shaped like `layout`.
    pub fn zeros(layout: &VariableLayout) -> Self {
        Self {
            a: vec![0; layout.n_upg],
            blocks: (0..layout.n_scen)
                .map(|_| ScenarioBlock {
                    z: vec![0.0; layout.z_len()],
                    y: vec![0.0; layout.y_len()],
                })
                .collect(),
        }
    }

    pub fn check_layout(&self, layout: &VariableLayout) -> Result<()> {
        if self.a.len() != layout.n_upg {
            return Err(Error::LayoutMismatch(format!(
                "a has length {}, expected {}",
                self.a.len(),
                layout.n_upg
            )));
        }
        if self.blocks.len() != layout.n_scen {
            return Err(Error::LayoutMismatch(format!(
                "{} scenario blocks, expected {}",
                self.blocks.len(),
                layout.n_scen
            )));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if b.z.len() != layout.z_len() || b.y.len() != layout.y_len() {
                return Err(Error::LayoutMismatch(format!(
                    "scenario {k}: z/y lengths {}/{}, expected {}/{}",
                    b.z.len(),
                    b.y.len(),
                    layout.z_len(),
                    layout.y_len()
                )));
            }
        }
        Ok(())
    }
}

/// The full problem: minimize `c'a` subject to every row and `A a <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub layout: VariableLayout,
    pub constraints: Vec<QuadConstraint>,
    pub selection: Vec<SelectionRow>,
    pub objective: Vec<f64>,
    pub big_m: f64,
}

impl Problem {
    /// Checks dimensions, index ranges and bound ordering of every row.
    pub fn check(&self) -> Result<()> {
        let l = &self.layout;
        if !(self.big_m > 0.0 && self.big_m.is_finite()) {
            return Err(Error::MalformedProblem(format!(
                "big_m must be positive, got {}",
                self.big_m
            )));
        }
        if self.objective.len() != l.n_upg {
            return Err(Error::MalformedProblem(format!(
                "objective has length {}, expected {}",
                self.objective.len(),
                l.n_upg
            )));
        }
        for (i, row) in self.selection.iter().enumerate() {
            if row.coeffs.len() != l.n_upg {
                return Err(Error::MalformedProblem(format!(
                    "selection row {i} has {} coefficients, expected {}",
                    row.coeffs.len(),
                    l.n_upg
                )));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let ctx = |e: Error| Error::MalformedProblem(format!("constraint {i}: {e}"));
            c.check_bounds().map_err(ctx)?;
            match c.scenario {
                Some(k) if k >= l.n_scen => {
                    return Err(ctx(Error::ScenarioOutOfRange {
                        index: k,
                        count: l.n_scen,
                    }))
                }
                None if !(c.quad.is_empty() && c.lin_y.is_empty()) => {
                    return Err(ctx(Error::MalformedProblem(
                        "scenario-free row reads z or y".into(),
                    )))
                }
                _ => {}
            }
            if c.quad.dim() != l.z_len() || c.lin_y.dim() != l.y_len() || c.lin_a.dim() != l.n_upg {
                return Err(ctx(Error::MalformedProblem(
                    "block dimensions do not match the layout".into(),
                )));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, a: &[u8]) -> f64 {
        self.objective
            .iter()
            .zip(a)
            .map(|(c, &ai)| c * f64::from(ai))
            .sum()
    }

    pub fn count_kind(&self, kind: ConstraintKind) -> usize {
        self.constraints.iter().filter(|c| c.kind == kind).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintRecord {
    pub value: f64,
    pub alpha: f64,
    pub beta: f64,
    pub violation: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionRecord {
    pub lhs: f64,
    pub rhs: f64,
    pub violation: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub constraints: Vec<ConstraintRecord>,
    pub selection: Vec<SelectionRecord>,
    pub objective: f64,
    pub worst_violation: f64,
    pub binary: bool,
    pub feasible: bool,
    pub tol: f64,
}

impl EvalReport {
    pub fn record_count(&self) -> usize {
        self.constraints.len() + self.selection.len()
    }

    /// Indices of constraint rows violated beyond the tolerance.
    pub fn violated(&self) -> impl Iterator<Item = usize> + '_ {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.satisfied)
            .map(|(i, _)| i)
    }
}

fn violation(value: f64, alpha: f64, beta: f64) -> f64 {
    if value.is_nan() {
        return f64::INFINITY;
    }
    (alpha - value).max(value - beta).max(0.0)
}

/// Value of a single row at `p` and its status at absolute tolerance `tol`.
pub fn evaluate_constraint(c: &QuadConstraint, p: &Point, tol: f64) -> Result<ConstraintRecord> {
    let mut value = c.lin_a.dot_binary(&p.a);
    if let Some(k) = c.scenario {
        let block = p.blocks.get(k).ok_or(Error::ScenarioOutOfRange {
            index: k,
            count: p.blocks.len(),
        })?;
        if block.z.len() < c.quad.dim() || block.y.len() < c.lin_y.dim() {
            return Err(Error::LayoutMismatch(format!(
                "scenario {k} block is shorter than the constraint data"
            )));
        }
        value += c.quad.quad_form(&block.z) + c.lin_y.dot(&block.y);
    }
    let violation = violation(value, c.alpha, c.beta);
    Ok(ConstraintRecord {
        value,
        alpha: c.alpha,
        beta: c.beta,
        violation,
        satisfied: violation <= tol,
    })
}

/// Evaluates every constraint and selection row, in problem order.
pub fn evaluate_problem(prob: &Problem, p: &Point, tol: f64) -> Result<EvalReport> {
    p.check_layout(&prob.layout)?;
    let constraints = prob
        .constraints
        .iter()
        .map(|c| evaluate_constraint(c, p, tol))
        .collect::<Result<Vec<_>>>()?;
    let selection: Vec<SelectionRecord> = prob
        .selection
        .iter()
        .map(|row| {
            let lhs = row.lhs(&p.a);
            let violation = (lhs - row.rhs).max(0.0);
            SelectionRecord {
                lhs,
                rhs: row.rhs,
                violation,
                satisfied: violation <= tol,
            }
        })
        .collect();
    let worst_violation = constraints
        .iter()
        .map(|r| r.violation)
        .chain(selection.iter().map(|r| r.violation))
        .fold(0.0, f64::max);
    let binary = p.a.iter().all(|&v| v <= 1);
    Ok(EvalReport {
        objective: prob.objective_value(&p.a),
        feasible: binary && worst_violation <= tol,
        constraints,
        selection,
        worst_violation,
        binary,
        tol,
    })
}

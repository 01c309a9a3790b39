//! Text documents for networks, problems, points and evaluation reports.
//!
//! All documents are JSON objects carrying `"version": "1"`. Unknown fields
//! are rejected in strict mode and ignored otherwise. Infinite bounds are
//! written as `null`. Numbers use the shortest decimal that round-trips, so
//! serializing a parsed problem reproduces the input byte for byte.

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    validate_network, Bus, Line, Network, RowOrigin, Scenario, SelectionRow, UpgradeOption,
    ValidationIssue,
};
use crate::qcqp::{
    ConstraintKind, EvalReport, Point, Problem, Provenance, QuadConstraint, ScenarioBlock,
    SparseSymMatrix, SparseVec, VariableLayout,
};

pub const FORMAT_VERSION: &str = "1";

fn syntax(e: serde_json::Error) -> Error {
    Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Deserializes `text`, collecting paths of fields the schema does not know.
fn parse_json<T: DeserializeOwned>(text: &str, strict: bool) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let mut unknown = Vec::new();
    let value: T = serde_ignored::deserialize(&mut de, |path| unknown.push(path.to_string()))
        .map_err(syntax)?;
    de.end().map_err(syntax)?;
    if strict && !unknown.is_empty() {
        return Err(Error::UnknownFields(unknown));
    }
    Ok(value)
}

fn check_version(found: &str) -> Result<()> {
    if found == FORMAT_VERSION {
        Ok(())
    } else {
        Err(Error::Version {
            found: found.to_string(),
        })
    }
}

fn to_text<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

fn lower(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NEG_INFINITY)
}

fn upper(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::INFINITY)
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

// Network documents.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub version: String,
    pub buses: Vec<BusDoc>,
    pub lines: Vec<LineDoc>,
    #[serde(default)]
    pub upgrades: Vec<UpgradeDoc>,
    #[serde(default)]
    pub selection: Vec<RowDoc>,
    pub scenarios: Vec<ScenarioDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusDoc {
    pub id: usize,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineDoc {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    /// Branch admittance as `[re, im]`.
    pub y: [f64; 2],
    pub i_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpgradeDoc {
    pub id: usize,
    pub line: usize,
    pub delta_y: [f64; 2],
    pub delta_i: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDoc {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackDoc {
    pub bus: usize,
    pub v: f64,
}

/// Injection box of one bus; `null` leaves a side unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsDoc {
    pub p_min: Option<f64>,
    pub p_max: Option<f64>,
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDoc {
    pub id: usize,
    pub slack: SlackDoc,
    /// One entry per bus, indexed by bus id.
    pub s_bounds: Vec<BoundsDoc>,
}

/// Sorts `items` by id and checks the ids are exactly `0..n`.
fn dense_by_id<T>(
    kind: &'static str,
    mut items: Vec<T>,
    id: impl Fn(&T) -> usize,
    issues: &mut Vec<ValidationIssue>,
) -> Vec<T> {
    items.sort_by_key(|x| id(x));
    for w in items.windows(2) {
        if id(&w[0]) == id(&w[1]) {
            issues.push(ValidationIssue::DuplicateId {
                kind,
                id: id(&w[0]),
            });
        }
    }
    for (position, item) in items.iter().enumerate() {
        if id(item) != position
            && !issues.contains(&ValidationIssue::DuplicateId { kind, id: id(item) })
        {
            issues.push(ValidationIssue::IdMismatch {
                kind,
                position,
                id: id(item),
            });
            break;
        }
    }
    items
}

impl NetworkDocument {
    pub fn into_network(self) -> Result<Network> {
        check_version(&self.version)?;
        let mut issues = Vec::new();
        let buses = dense_by_id("bus", self.buses, |b| b.id, &mut issues);
        let lines = dense_by_id("line", self.lines, |l| l.id, &mut issues);
        let upgrades = dense_by_id("upgrade", self.upgrades, |u| u.id, &mut issues);
        let scenarios = dense_by_id("scenario", self.scenarios, |s| s.id, &mut issues);
        if !issues.is_empty() {
            return Err(Error::InvalidNetwork(issues));
        }
        let net = Network {
            buses: buses
                .into_iter()
                .map(|b| Bus {
                    id: b.id,
                    v_min: b.v_min,
                    v_max: b.v_max,
                })
                .collect(),
            lines: lines
                .into_iter()
                .map(|l| Line {
                    id: l.id,
                    from_bus: l.from,
                    to_bus: l.to,
                    y_branch: Complex64::new(l.y[0], l.y[1]),
                    i_max: l.i_max,
                })
                .collect(),
            upgrades: upgrades
                .into_iter()
                .map(|u| UpgradeOption {
                    id: u.id,
                    line_id: u.line,
                    delta_y: Complex64::new(u.delta_y[0], u.delta_y[1]),
                    delta_i: u.delta_i,
                    cost: u.cost,
                })
                .collect(),
            user_rows: self
                .selection
                .into_iter()
                .map(|r| (r.coeffs, r.rhs))
                .collect(),
            scenarios: scenarios
                .into_iter()
                .map(|s| Scenario {
                    id: s.id,
                    s_min: s
                        .s_bounds
                        .iter()
                        .map(|b| Complex64::new(lower(b.p_min), lower(b.q_min)))
                        .collect(),
                    s_max: s
                        .s_bounds
                        .iter()
                        .map(|b| Complex64::new(upper(b.p_max), upper(b.q_max)))
                        .collect(),
                    slack_bus: s.slack.bus,
                    slack_voltage: s.slack.v,
                })
                .collect(),
        };
        validate_network(&net).into_result()?;
        Ok(net)
    }

    pub fn from_network(net: &Network) -> Self {
        Self {
            version: FORMAT_VERSION.to_string(),
            buses: net
                .buses
                .iter()
                .map(|b| BusDoc {
                    id: b.id,
                    v_min: b.v_min,
                    v_max: b.v_max,
                })
                .collect(),
            lines: net
                .lines
                .iter()
                .map(|l| LineDoc {
                    id: l.id,
                    from: l.from_bus,
                    to: l.to_bus,
                    y: [l.y_branch.re, l.y_branch.im],
                    i_max: l.i_max,
                })
                .collect(),
            upgrades: net
                .upgrades
                .iter()
                .map(|u| UpgradeDoc {
                    id: u.id,
                    line: u.line_id,
                    delta_y: [u.delta_y.re, u.delta_y.im],
                    delta_i: u.delta_i,
                    cost: u.cost,
                })
                .collect(),
            selection: net
                .user_rows
                .iter()
                .map(|(coeffs, rhs)| RowDoc {
                    coeffs: coeffs.clone(),
                    rhs: *rhs,
                })
                .collect(),
            scenarios: net
                .scenarios
                .iter()
                .map(|s| ScenarioDoc {
                    id: s.id,
                    slack: SlackDoc {
                        bus: s.slack_bus,
                        v: s.slack_voltage,
                    },
                    s_bounds: s
                        .s_min
                        .iter()
                        .zip(&s.s_max)
                        .map(|(lo, hi)| BoundsDoc {
                            p_min: finite(lo.re),
                            p_max: finite(hi.re),
                            q_min: finite(lo.im),
                            q_max: finite(hi.im),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Parses and validates a network document.
pub fn parse_network(text: &str, strict: bool) -> Result<Network> {
    parse_json::<NetworkDocument>(text, strict)?.into_network()
}

pub fn serialize_network(net: &Network) -> String {
    to_text(&NetworkDocument::from_network(net))
}

// Problem documents.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDocument {
    pub version: String,
    pub layout: VariableLayout,
    pub big_m: f64,
    pub objective: Vec<f64>,
    pub selection: Vec<SelectionDoc>,
    pub constraints: Vec<ConstraintDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDoc {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
    pub origin: RowOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDoc {
    pub kind: ConstraintKind,
    pub scenario: Option<usize>,
    pub provenance: Provenance,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Upper-triangle triplets `[row, col, value]` over `z`.
    #[serde(rename = "Q")]
    pub quad: Vec<(usize, usize, f64)>,
    /// `[index, value]` pairs over `y`.
    #[serde(rename = "q")]
    pub lin_y: Vec<(usize, f64)>,
    /// `[index, value]` pairs over `a`.
    #[serde(rename = "m")]
    pub lin_a: Vec<(usize, f64)>,
}

impl ProblemDocument {
    pub fn from_problem(prob: &Problem) -> Self {
        Self {
            version: FORMAT_VERSION.to_string(),
            layout: prob.layout,
            big_m: prob.big_m,
            objective: prob.objective.clone(),
            selection: prob
                .selection
                .iter()
                .map(|r| SelectionDoc {
                    coeffs: r.coeffs.clone(),
                    rhs: r.rhs,
                    origin: r.origin,
                })
                .collect(),
            constraints: prob
                .constraints
                .iter()
                .map(|c| ConstraintDoc {
                    kind: c.kind,
                    scenario: c.scenario,
                    provenance: c.provenance,
                    alpha: finite(c.alpha),
                    beta: finite(c.beta),
                    quad: c.quad.triplets().to_vec(),
                    lin_y: c.lin_y.entries().to_vec(),
                    lin_a: c.lin_a.entries().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_problem(self) -> Result<Problem> {
        check_version(&self.version)?;
        let layout = self.layout;
        let constraints = self
            .constraints
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let ctx = |e: Error| Error::MalformedProblem(format!("constraint {i}: {e}"));
                Ok(QuadConstraint {
                    scenario: c.scenario,
                    quad: SparseSymMatrix::from_triplets(layout.z_len(), c.quad).map_err(ctx)?,
                    lin_y: SparseVec::from_entries(layout.y_len(), c.lin_y).map_err(ctx)?,
                    lin_a: SparseVec::from_entries(layout.n_upg, c.lin_a).map_err(ctx)?,
                    alpha: lower(c.alpha),
                    beta: upper(c.beta),
                    kind: c.kind,
                    provenance: c.provenance,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let prob = Problem {
            layout,
            constraints,
            selection: self
                .selection
                .into_iter()
                .map(|r| SelectionRow {
                    coeffs: r.coeffs,
                    rhs: r.rhs,
                    origin: r.origin,
                })
                .collect(),
            objective: self.objective,
            big_m: self.big_m,
        };
        prob.check()?;
        Ok(prob)
    }
}

/// Canonical text of `prob`.
pub fn serialize_problem(prob: &Problem) -> String {
    to_text(&ProblemDocument::from_problem(prob))
}

pub fn parse_problem(text: &str, strict: bool) -> Result<Problem> {
    parse_json::<ProblemDocument>(text, strict)?.into_problem()
}

// Points.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDocument {
    pub version: String,
    pub a: Vec<u8>,
    pub scenarios: Vec<ScenarioBlock>,
}

pub fn serialize_point(p: &Point) -> String {
    to_text(&PointDocument {
        version: FORMAT_VERSION.to_string(),
        a: p.a.clone(),
        scenarios: p.blocks.clone(),
    })
}

pub fn parse_point(text: &str, strict: bool) -> Result<Point> {
    let doc: PointDocument = parse_json(text, strict)?;
    check_version(&doc.version)?;
    Ok(Point {
        a: doc.a,
        blocks: doc.scenarios,
    })
}

// Evaluation reports.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDocument {
    pub version: String,
    pub feasible: bool,
    pub binary: bool,
    pub objective: f64,
    pub worst_violation: f64,
    pub tol: f64,
    pub constraints: Vec<ConstraintReportDoc>,
    pub selection: Vec<SelectionReportDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintReportDoc {
    pub index: usize,
    pub kind: ConstraintKind,
    pub scenario: Option<usize>,
    pub provenance: Provenance,
    pub value: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub violation: Option<f64>,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReportDoc {
    pub index: usize,
    pub origin: RowOrigin,
    pub lhs: f64,
    pub rhs: f64,
    pub violation: f64,
    pub satisfied: bool,
}

/// Structured report, one record per constraint and selection row.
pub fn serialize_report(prob: &Problem, report: &EvalReport) -> String {
    to_text(&ReportDocument {
        version: FORMAT_VERSION.to_string(),
        feasible: report.feasible,
        binary: report.binary,
        objective: report.objective,
        worst_violation: report.worst_violation,
        tol: report.tol,
        constraints: prob
            .constraints
            .iter()
            .zip(&report.constraints)
            .enumerate()
            .map(|(index, (c, r))| ConstraintReportDoc {
                index,
                kind: c.kind,
                scenario: c.scenario,
                provenance: c.provenance,
                value: finite(r.value),
                alpha: finite(r.alpha),
                beta: finite(r.beta),
                violation: finite(r.violation),
                satisfied: r.satisfied,
            })
            .collect(),
        selection: prob
            .selection
            .iter()
            .zip(&report.selection)
            .enumerate()
            .map(|(index, (row, r))| SelectionReportDoc {
                index,
                origin: row.origin,
                lhs: r.lhs,
                rhs: r.rhs,
                violation: r.violation,
                satisfied: r.satisfied,
            })
            .collect(),
    })
}

use thiserror::Error;

use crate::grid::ValidationIssue;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {}", join_issues(.0))]
    InvalidNetwork(Vec<ValidationIssue>),

    #[error("upgrade vector has length {got}, expected {expected}")]
    AssignmentLength { expected: usize, got: usize },

    #[error("upgrade vector entry a[{index}] = {value} is not binary")]
    NonBinary { index: usize, value: u8 },

    #[error("upgrade vector violates selection row {row} ({description}): lhs {lhs} > rhs {rhs}")]
    SelectionViolated {
        row: usize,
        description: String,
        lhs: f64,
        rhs: f64,
    },

    #[error("line {line} with upgrade option {option} has a zero upgraded branch admittance")]
    SingularUpgrade { line: usize, option: usize },

    #[error("scenario index {index} out of range ({count} scenarios)")]
    ScenarioOutOfRange { index: usize, count: usize },

    #[error("point does not match the problem layout: {0}")]
    LayoutMismatch(String),

    #[error("{n_upg} upgrade options exceed the enumeration cap of {cap}; export the problem to an external MIQCQP solver instead")]
    EnumerationCap { n_upg: usize, cap: usize },

    #[error(
        "scenario {scenario} does not pin the injection at non-slack bus {bus} (s_min != s_max)"
    )]
    UnpinnedInjection { scenario: usize, bus: usize },

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("malformed problem document: {0}")]
    MalformedProblem(String),

    #[error("unsupported document version {found:?}, expected \"1\"")]
    Version { found: String },

    #[error("unknown field(s) in strict mode: {}", .0.join(", "))]
    UnknownFields(Vec<String>),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

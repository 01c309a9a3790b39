//! Mixed-integer QCQP toolkit for AC transmission upgrade planning.
//!
//! The crate converts a [`grid::Network`] (buses, lines, discrete line
//! upgrades, load scenarios) into a standard-form [`qcqp::Problem`] over
//! rectangular voltages, directed line powers and binary upgrade decisions;
//! evaluates candidate points against it; and solves small instances exactly
//! by enumerating upgrade vectors and certifying each with a Newton power flow.

pub mod enumerate;
pub mod error;
pub mod grid;
pub mod io;
pub mod powerflow;
pub mod qcqp;
pub mod reformulate;

pub use error::{Error, Result};
pub use grid::{
    apply_upgrades, assemble_admittance, validate_network, AdmittanceMatrix, Bus, Line, Network,
    Scenario, UpgradeOption,
};
pub use powerflow::{branch_flows, solve_newton, PFConfig, PFResult};
pub use qcqp::{evaluate_constraint, evaluate_problem, EvalReport, Point, Problem};
pub use reformulate::{build_problem, compute_big_m, ReformOptions};

//! Exact solver for small instances by enumeration of upgrade vectors.
//!
//! Candidates satisfying `A a <= b` are visited in ascending cost (ties by the
//! little-endian integer value of `a`). Each candidate is certified per
//! scenario with a Newton power flow on the upgraded network followed by the
//! complex-domain checks: voltage magnitudes, line currents and the slack
//! injection box. The first certified candidate is optimal with respect to
//! the oracle. Its point is then re-checked against the reformulated problem;
//! both checks must agree.
//!
//! A candidate that fails is only "not certified": Newton finds one power-flow
//! solution from a flat start and may miss others, so nothing here proves
//! infeasibility.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{apply_upgrades, Network, SelectionRow, UpgradedGrid};
use crate::powerflow::{line_flows, solve_newton, PFConfig};
use crate::qcqp::{evaluate_problem, EvalReport, Point, Problem, ScenarioBlock, VariableLayout};
use crate::reformulate::{build_problem, layout_for, ReformOptions};

/// Largest upgrade count accepted by [`enumerate_assignments`].
pub const ENUMERATION_CAP: usize = 20;

/// Binary vectors of length `n_upg` satisfying every row, in ascending order
/// of their little-endian integer value.
pub fn enumerate_assignments(rows: &[SelectionRow], n_upg: usize) -> Result<Vec<Vec<u8>>> {
    if n_upg > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            n_upg,
            cap: ENUMERATION_CAP,
        });
    }
    Ok((0u32..1 << n_upg)
        .map(|bits| {
            (0..n_upg)
                .map(|i| ((bits >> i) & 1) as u8)
                .collect::<Vec<_>>()
        })
        .filter(|a| rows.iter().all(|r| r.is_satisfied(a)))
        .collect())
}

fn assignment_key(a: &[u8]) -> u32 {
    a.iter()
        .enumerate()
        .map(|(i, &ai)| u32::from(ai) << i)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub reform: ReformOptions,
    pub pf: PFConfig,
    /// Worker threads for candidate certification; 0 uses rayon's default.
    pub jobs: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            reform: ReformOptions::default(),
            pf: PFConfig::default(),
            jobs: 1,
        }
    }
}

/// Why a candidate has no certificate.
#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    PowerFlow {
        scenario: usize,
        diagnostic: String,
    },
    Voltage {
        scenario: usize,
        bus: usize,
        magnitude: f64,
    },
    Current {
        scenario: usize,
        line: usize,
        current: f64,
        limit: f64,
    },
    SlackInjection {
        scenario: usize,
        injection: Complex64,
    },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::PowerFlow {
                scenario,
                diagnostic,
            } => write!(
                f,
                "scenario {scenario}: no power-flow solution found ({diagnostic})"
            ),
            Rejection::Voltage {
                scenario,
                bus,
                magnitude,
            } => write!(
                f,
                "scenario {scenario}: |v| = {magnitude} at bus {bus} outside bounds"
            ),
            Rejection::Current {
                scenario,
                line,
                current,
                limit,
            } => write!(
                f,
                "scenario {scenario}: line {line} current {current} exceeds {limit}"
            ),
            Rejection::SlackInjection {
                scenario,
                injection,
            } => write!(
                f,
                "scenario {scenario}: slack injection {injection} outside bounds"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLog {
    pub a: Vec<u8>,
    pub objective: f64,
    /// `None` when the candidate was certified.
    pub rejection: Option<Rejection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub a: Vec<u8>,
    pub point: Point,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Best {
    pub a: Vec<u8>,
    pub objective: f64,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    Optimal,
    /// Every candidate was tried and none was certified.
    InfeasibleNoCertificate,
    /// The complex-domain and reformulated checks disagreed.
    Error(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub best: Option<Best>,
    pub explored: usize,
    /// One entry per explored candidate, in search order.
    pub log: Vec<CandidateLog>,
    pub problem: Problem,
}

/// Runs the power-flow oracle and the complex-domain checks for `a`,
/// returning the certificate point blocks on success.
pub fn certify_candidate(
    net: &Network,
    layout: &VariableLayout,
    a: &[u8],
    pf: &PFConfig,
    tol: f64,
) -> Result<std::result::Result<Point, Rejection>> {
    let grid = apply_upgrades(net, a)?;
    let mut blocks = Vec::with_capacity(net.n_scen());
    for scen in &net.scenarios {
        match certify_scenario(net, layout, &grid, scen.id, pf, tol)? {
            Ok(block) => blocks.push(block),
            Err(rej) => return Ok(Err(rej)),
        }
    }
    Ok(Ok(Point {
        a: a.to_vec(),
        blocks,
    }))
}

fn certify_scenario(
    net: &Network,
    layout: &VariableLayout,
    grid: &UpgradedGrid,
    k: usize,
    pf: &PFConfig,
    tol: f64,
) -> Result<std::result::Result<ScenarioBlock, Rejection>> {
    let scen = &net.scenarios[k];
    let res = solve_newton(
        &grid.admittance,
        &scen.s_min,
        (scen.slack_bus, scen.slack_voltage),
        pf,
    )?;
    if !res.converged {
        return Ok(Err(Rejection::PowerFlow {
            scenario: k,
            diagnostic: res.diagnostic.unwrap_or_default(),
        }));
    }
    let v = &res.v;
    for bus in &net.buses {
        let magnitude = v[bus.id].norm();
        if magnitude < bus.v_min - tol || magnitude > bus.v_max + tol {
            return Ok(Err(Rejection::Voltage {
                scenario: k,
                bus: bus.id,
                magnitude,
            }));
        }
    }
    for line in &net.lines {
        let current = grid.y_branch[line.id].norm() * (v[line.from_bus] - v[line.to_bus]).norm();
        let limit = grid.i_max[line.id];
        if current > limit + tol {
            return Ok(Err(Rejection::Current {
                scenario: k,
                line: line.id,
                current,
                limit,
            }));
        }
    }
    let s = res.slack_injection;
    let (lo, hi) = (scen.s_min[scen.slack_bus], scen.s_max[scen.slack_bus]);
    if s.re < lo.re - tol || s.re > hi.re + tol || s.im < lo.im - tol || s.im > hi.im + tol {
        return Ok(Err(Rejection::SlackInjection {
            scenario: k,
            injection: s,
        }));
    }

    let mut z = vec![0.0; layout.z_len()];
    for (j, vj) in v.iter().enumerate() {
        z[layout.vr(j)] = vj.re;
        z[layout.vq(j)] = vj.im;
    }
    let mut y = vec![0.0; layout.y_len()];
    for (e, flow) in line_flows(&grid.admittance, &net.lines, v)
        .iter()
        .enumerate()
    {
        for (to_end, s) in [(false, flow.at_from), (true, flow.at_to)] {
            let d = layout.directed(e, to_end);
            y[layout.lr(d)] = s.re;
            y[layout.lq(d)] = s.im;
        }
    }
    Ok(Ok(ScenarioBlock { z, y }))
}

fn check_pinned(net: &Network) -> Result<()> {
    for scen in &net.scenarios {
        for bus in 0..net.n_bus() {
            if bus != scen.slack_bus && !scen.is_pinned(bus) {
                return Err(Error::UnpinnedInjection {
                    scenario: scen.id,
                    bus,
                });
            }
        }
    }
    Ok(())
}

/// Finds the cheapest upgrade vector the oracle can certify.
pub fn solve(net: &Network, options: &SolveOptions, tol: f64) -> Result<SolveResult> {
    let problem = build_problem(net, &options.reform)?;
    check_pinned(net)?;
    let layout = layout_for(net);

    let mut candidates = enumerate_assignments(&problem.selection, net.n_upg())?;
    // Stable sort keeps ascending integer order among equal costs.
    candidates.sort_by(|a, b| {
        problem
            .objective_value(a)
            .total_cmp(&problem.objective_value(b))
            .then(assignment_key(a).cmp(&assignment_key(b)))
    });

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::InvalidOption(format!("thread pool: {e}")))?;
    let chunk = pool.current_num_threads().max(1) * 2;

    let mut log = Vec::new();
    let mut found = None;
    for batch in candidates.chunks(chunk) {
        let outcomes: Vec<_> = pool.install(|| {
            batch
                .par_iter()
                .map(|a| certify_candidate(net, &layout, a, &options.pf, tol))
                .collect::<Result<Vec<_>>>()
        })?;
        for (a, outcome) in batch.iter().zip(outcomes) {
            let objective = problem.objective_value(a);
            match outcome {
                Ok(point) => {
                    log.push(CandidateLog {
                        a: a.clone(),
                        objective,
                        rejection: None,
                    });
                    found = Some((a.clone(), objective, point));
                    break;
                }
                Err(rej) => log.push(CandidateLog {
                    a: a.clone(),
                    objective,
                    rejection: Some(rej),
                }),
            }
        }
        if found.is_some() {
            break;
        }
    }

    let explored = log.len();
    let Some((a, objective, point)) = found else {
        return Ok(SolveResult {
            status: SolveStatus::InfeasibleNoCertificate,
            best: None,
            explored,
            log,
            problem,
        });
    };
    let eval = evaluate_problem(&problem, &point, tol)?;
    let status = if eval.feasible {
        SolveStatus::Optimal
    } else {
        let rows: Vec<String> = eval.violated().map(|i| i.to_string()).collect();
        SolveStatus::Error(format!(
            "certificate passes the complex-domain checks but violates reformulated rows [{}] (worst {})",
            rows.join(", "),
            eval.worst_violation
        ))
    };
    Ok(SolveResult {
        status,
        best: Some(Best {
            a: a.clone(),
            objective,
            certificate: Certificate { a, point, eval },
        }),
        explored,
        log,
        problem,
    })
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{ArgAction, Parser, Subcommand};
use upgrade_qcqp::enumerate::{solve, SolveOptions, SolveStatus};
use upgrade_qcqp::io::{
    parse_network, parse_point, parse_problem, serialize_point, serialize_problem, serialize_report,
};
use upgrade_qcqp::powerflow::line_flows;
use upgrade_qcqp::qcqp::DEFAULT_TOL;
use upgrade_qcqp::{
    apply_upgrades, build_problem, evaluate_problem, solve_newton, Network, PFConfig, ReformOptions,
};

/// Build, check and solve AC transmission upgrade QCQPs.
#[derive(Parser)]
#[command(name = "upqcqp", version)]
struct Cli {
    /// Override the big-M constant.
    #[arg(long, global = true, value_name = "X")]
    big_m: Option<f64>,

    /// Reject unknown document fields.
    #[arg(
        long,
        global = true,
        value_name = "BOOL",
        default_value_t = true,
        action = ArgAction::Set,
        num_args = 0..=1,
        default_missing_value = "true"
    )]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the problem for a network and write it as a problem document.
    #[command(visible_alias = "export")]
    Build {
        network: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Evaluate a point against a problem; prints one record per constraint.
    Check {
        problem: PathBuf,
        point: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Find the cheapest certified upgrade vector by enumeration.
    Solve {
        network: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Certificate path; defaults to `<network stem>.certificate.json`
        /// next to the network.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print every explored candidate.
        #[arg(short, long)]
        verbose: bool,
    },
    /// Run the power flow for one scenario and upgrade vector.
    Flow {
        network: PathBuf,
        #[arg(long, default_value_t = 0)]
        scenario: usize,
        /// Upgrade vector as a string of 0/1, option 0 first.
        #[arg(long, default_value = "")]
        a: String,
    },
}

/// Input problems exit with 2.
struct InputError(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.into())
    }
}

fn read(path: &Path) -> Result<String, InputError> {
    Ok(fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
}

fn write(path: &Path, text: &str) -> Result<(), InputError> {
    Ok(fs::write(path, text).with_context(|| format!("writing {}", path.display()))?)
}

fn load_network(path: &Path, strict: bool) -> Result<Network, InputError> {
    Ok(parse_network(&read(path)?, strict).with_context(|| format!("in {}", path.display()))?)
}

fn bits(a: &[u8]) -> String {
    a.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
}

fn parse_bits(s: &str) -> anyhow::Result<Vec<u8>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => bail!("upgrade vector must be a string of 0 and 1, got {s:?}"),
        })
        .collect()
}

fn run(cli: Cli) -> Result<bool, InputError> {
    let reform = ReformOptions {
        big_m_override: cli.big_m,
        ..ReformOptions::default()
    };
    match cli.command {
        Command::Build { network, output } => {
            let net = load_network(&network, cli.strict)?;
            let prob = build_problem(&net, &reform)?;
            write(&output, &serialize_problem(&prob))?;
            println!(
                "wrote {} constraints, {} selection rows, big-M {}",
                prob.constraints.len(),
                prob.selection.len(),
                prob.big_m
            );
            Ok(true)
        }
        Command::Check {
            problem,
            point,
            tol,
        } => {
            let prob = parse_problem(&read(&problem)?, cli.strict)
                .with_context(|| format!("in {}", problem.display()))?;
            let p = parse_point(&read(&point)?, cli.strict)
                .with_context(|| format!("in {}", point.display()))?;
            let report = evaluate_problem(&prob, &p, tol)?;
            print!("{}", serialize_report(&prob, &report));
            let violated = report.violated().count();
            eprintln!(
                "{}: {violated} violated, worst violation {:e}, objective {}",
                if report.feasible {
                    "feasible"
                } else {
                    "infeasible"
                },
                report.worst_violation,
                report.objective
            );
            Ok(report.feasible)
        }
        Command::Solve {
            network,
            tol,
            jobs,
            output,
            verbose,
        } => {
            let net = load_network(&network, cli.strict)?;
            let opts = SolveOptions {
                reform,
                pf: PFConfig::default(),
                jobs,
            };
            let res = solve(&net, &opts, tol)?;
            if verbose {
                for entry in &res.log {
                    match &entry.rejection {
                        Some(r) => {
                            println!("candidate {} cost {}: {r}", bits(&entry.a), entry.objective)
                        }
                        None => println!(
                            "candidate {} cost {}: certified",
                            bits(&entry.a),
                            entry.objective
                        ),
                    }
                }
            }
            println!("explored: {}", res.explored);
            match (&res.status, &res.best) {
                (SolveStatus::Optimal, Some(best)) => {
                    let path = output.unwrap_or_else(|| {
                        let stem = network.file_stem().unwrap_or_default().to_string_lossy();
                        network.with_file_name(format!("{stem}.certificate.json"))
                    });
                    write(&path, &serialize_point(&best.certificate.point))?;
                    println!("status: optimal");
                    println!("a: {}", bits(&best.a));
                    println!("objective: {}", best.objective);
                    println!("certificate: {}", path.display());
                    Ok(true)
                }
                (SolveStatus::InfeasibleNoCertificate, _) => {
                    println!("status: infeasible (no candidate certified)");
                    Ok(false)
                }
                (SolveStatus::Error(msg), _) => {
                    println!("status: error: {msg}");
                    Ok(false)
                }
                (SolveStatus::Optimal, None) => unreachable!("optimal status carries a solution"),
            }
        }
        Command::Flow {
            network,
            scenario,
            a,
        } => {
            let net = load_network(&network, cli.strict)?;
            let a = parse_bits(&a)?;
            let grid = apply_upgrades(&net, &a)?;
            let Some(scen) = net.scenarios.get(scenario) else {
                return Err(upgrade_qcqp::Error::ScenarioOutOfRange {
                    index: scenario,
                    count: net.n_scen(),
                }
                .into());
            };
            for bus in 0..net.n_bus() {
                if bus != scen.slack_bus && !scen.is_pinned(bus) {
                    return Err(upgrade_qcqp::Error::UnpinnedInjection { scenario, bus }.into());
                }
            }
            let res = solve_newton(
                &grid.admittance,
                &scen.s_min,
                (scen.slack_bus, scen.slack_voltage),
                &PFConfig::default(),
            )?;
            println!(
                "converged: {} after {} iterations, mismatch {:e}",
                res.converged, res.iterations, res.mismatch_norm
            );
            if let Some(d) = &res.diagnostic {
                println!("diagnostic: {d}");
            }
            println!("bus  v_re  v_im  |v|");
            for (j, v) in res.v.iter().enumerate() {
                println!("{j}  {}  {}  {}", v.re, v.im, v.norm());
            }
            println!("line  from  to  s_from  s_to  current  limit");
            for (e, f) in line_flows(&grid.admittance, &net.lines, &res.v)
                .iter()
                .enumerate()
            {
                let current = grid.y_branch[e].norm() * (res.v[f.from] - res.v[f.to]).norm();
                println!(
                    "{e}  {}  {}  {}  {}  {}  {}",
                    f.from, f.to, f.at_from, f.at_to, current, grid.i_max[e]
                );
            }
            println!("slack injection: {}", res.slack_injection);
            Ok(res.converged)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(InputError(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! Random instance generators and independent oracles shared by the
//! integration tests and the acceptance suite.

#![allow(dead_code)]

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use upgrade_qcqp::grid::{Bus, Line, Network, Scenario, UpgradeOption};
use upgrade_qcqp::qcqp::{Point, ScenarioBlock, VariableLayout};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Inductive branch admittance.
pub fn line_admittance(rng: &mut impl Rng) -> Complex64 {
    c(rng.gen_range(0.5..3.0), -rng.gen_range(1.0..8.0))
}

/// Arbitrary complex number, either sign on both parts.
pub fn any_complex(rng: &mut impl Rng, scale: f64) -> Complex64 {
    c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

/// Spanning tree plus up to `extra` random edges, no two on the same bus pair.
pub fn topology(rng: &mut impl Rng, n_bus: usize, extra: usize) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (1..n_bus).map(|k| (rng.gen_range(0..k), k)).collect();
    let free = n_bus * n_bus.saturating_sub(1) / 2 - edges.len();
    for _ in 0..extra.min(free) {
        loop {
            let j = rng.gen_range(0..n_bus);
            let l = rng.gen_range(0..n_bus);
            let taken = edges
                .iter()
                .any(|&(a, b)| (a, b) == (j, l) || (b, a) == (j, l));
            if j != l && !taken {
                edges.push((j, l));
                break;
            }
        }
    }
    edges
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub n_bus: usize,
    pub extra_lines: usize,
    /// Total number of upgrade options, spread over random lines.
    pub n_upg: usize,
    pub n_scen: usize,
}

impl Shape {
    pub fn random(rng: &mut impl Rng) -> Self {
        Self {
            n_bus: rng.gen_range(2..=10),
            extra_lines: rng.gen_range(0..=5),
            n_upg: rng.gen_range(0..=6),
            n_scen: rng.gen_range(1..=3),
        }
    }
}

/// Random valid network with pinned injections at non-slack buses.
pub fn network(rng: &mut impl Rng, shape: Shape) -> Network {
    let buses = (0..shape.n_bus)
        .map(|id| Bus {
            id,
            v_min: rng.gen_range(0.85..0.95),
            v_max: rng.gen_range(1.05..1.15),
        })
        .collect();
    let lines: Vec<Line> = topology(rng, shape.n_bus, shape.extra_lines)
        .into_iter()
        .enumerate()
        .map(|(id, (from_bus, to_bus))| Line {
            id,
            from_bus,
            to_bus,
            y_branch: line_admittance(rng),
            i_max: rng.gen_range(0.3..2.0),
        })
        .collect();
    let n_upg = if lines.is_empty() { 0 } else { shape.n_upg };
    let mut targets: Vec<usize> = (0..n_upg).map(|_| rng.gen_range(0..lines.len())).collect();
    targets.sort_unstable();
    let upgrades = targets
        .into_iter()
        .enumerate()
        .map(|(id, line_id)| UpgradeOption {
            id,
            line_id,
            delta_y: line_admittance(rng) * rng.gen_range(0.2..1.0),
            delta_i: rng.gen_range(0.1..1.0),
            cost: (rng.gen_range(1.0..10.0_f64) * 10.0).round() / 10.0,
        })
        .collect();
    let scenarios = (0..shape.n_scen)
        .map(|id| {
            let slack = rng.gen_range(0..shape.n_bus);
            scenario(rng, id, shape.n_bus, slack, 0.3)
        })
        .collect();
    Network {
        buses,
        lines,
        upgrades,
        user_rows: Vec::new(),
        scenarios,
    }
}

pub fn random_network(rng: &mut impl Rng) -> Network {
    let shape = Shape::random(rng);
    network(rng, shape)
}

/// Loads up to `load` per unit at every non-slack bus; wide slack box.
pub fn scenario(
    rng: &mut impl Rng,
    id: usize,
    n_bus: usize,
    slack_bus: usize,
    load: f64,
) -> Scenario {
    let mut s_min = Vec::with_capacity(n_bus);
    let mut s_max = Vec::with_capacity(n_bus);
    for j in 0..n_bus {
        if j == slack_bus {
            s_min.push(c(-10.0, -10.0));
            s_max.push(c(10.0, 10.0));
        } else {
            let s = c(-rng.gen_range(0.0..load), rng.gen_range(-0.1..0.1) * load);
            s_min.push(s);
            s_max.push(s);
        }
    }
    Scenario {
        id,
        s_min,
        s_max,
        slack_bus,
        slack_voltage: rng.gen_range(1.0..1.05),
    }
}

/// Voltages with magnitudes inside each bus box and uniform phases.
pub fn voltages_in_box(rng: &mut impl Rng, net: &Network) -> Vec<Complex64> {
    net.buses
        .iter()
        .map(|b| {
            Complex64::from_polar(
                rng.gen_range(b.v_min..=b.v_max),
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            )
        })
        .collect()
}

pub fn z_from(layout: &VariableLayout, v: &[Complex64]) -> Vec<f64> {
    let mut z = vec![0.0; layout.z_len()];
    for (j, vj) in v.iter().enumerate() {
        z[layout.vr(j)] = vj.re;
        z[layout.vq(j)] = vj.im;
    }
    z
}

pub fn random_point(rng: &mut impl Rng, layout: &VariableLayout) -> Point {
    Point {
        a: (0..layout.n_upg).map(|_| rng.gen_range(0..=1)).collect(),
        blocks: (0..layout.n_scen)
            .map(|_| ScenarioBlock {
                z: (0..layout.z_len())
                    .map(|_| rng.gen_range(-1.2..1.2))
                    .collect(),
                y: (0..layout.y_len())
                    .map(|_| rng.gen_range(-3.0..3.0))
                    .collect(),
            })
            .collect(),
    }
}

/// A random assignment with at most one option per line.
pub fn one_per_line(rng: &mut impl Rng, net: &Network) -> Vec<u8> {
    let mut a = vec![0u8; net.n_upg()];
    for line in &net.lines {
        let mut opts = net.options_for_line(line.id);
        opts.push(usize::MAX);
        let pick = *opts.choose(rng).unwrap();
        if pick != usize::MAX {
            a[pick] = 1;
        }
    }
    a
}

/// Effective `(y, i_max)` of every line under `a`, computed from raw data.
pub fn effective_lines(net: &Network, a: &[u8]) -> Vec<(Complex64, f64)> {
    net.lines
        .iter()
        .map(|line| {
            let mut y = line.y_branch;
            let mut i = line.i_max;
            for u in net.upgrades.iter().filter(|u| u.line_id == line.id) {
                if a[u.id] == 1 {
                    y += u.delta_y;
                    i += u.delta_i;
                }
            }
            (y, i)
        })
        .collect()
}

/// Gauss-Seidel power flow on a hand-built admittance matrix.
pub fn gauss_seidel(net: &Network, a: &[u8], k: usize) -> Option<Vec<Complex64>> {
    let n = net.n_bus();
    let eff = effective_lines(net, a);
    let mut y = vec![vec![c(0.0, 0.0); n]; n];
    for (line, (yb, _)) in net.lines.iter().zip(&eff) {
        let (j, l) = (line.from_bus, line.to_bus);
        y[j][j] += yb;
        y[l][l] += yb;
        y[j][l] -= yb;
        y[l][j] -= yb;
    }
    let scen = &net.scenarios[k];
    let mut v = vec![c(scen.slack_voltage, 0.0); n];
    for _ in 0..20_000 {
        for j in 0..n {
            if j == scen.slack_bus {
                continue;
            }
            if y[j][j].norm() == 0.0 {
                return None;
            }
            let others: Complex64 = (0..n).filter(|&m| m != j).map(|m| y[j][m] * v[m]).sum();
            v[j] = ((scen.s_min[j] / v[j]).conj() - others) / y[j][j];
        }
        let worst = (0..n)
            .filter(|&j| j != scen.slack_bus)
            .map(|j| {
                let i: Complex64 = (0..n).map(|m| y[j][m] * v[m]).sum();
                (v[j] * i.conj() - scen.s_min[j]).norm()
            })
            .fold(0.0, f64::max);
        if !worst.is_finite() {
            return None;
        }
        if worst < 1e-12 {
            return Some(v);
        }
    }
    None
}

/// Whether a power-flow solution respects every bound of scenario `k` at `tol`.
pub fn within_limits(net: &Network, a: &[u8], k: usize, v: &[Complex64], tol: f64) -> bool {
    let eff = effective_lines(net, a);
    let scen = &net.scenarios[k];
    let volts_ok = net
        .buses
        .iter()
        .all(|b| v[b.id].norm() >= b.v_min - tol && v[b.id].norm() <= b.v_max + tol);
    let currents_ok = net
        .lines
        .iter()
        .zip(&eff)
        .all(|(line, (y, i))| y.norm() * (v[line.from_bus] - v[line.to_bus]).norm() <= i + tol);
    let sb = scen.slack_bus;
    let s: Complex64 = net
        .lines
        .iter()
        .zip(&eff)
        .filter_map(|(line, (y, _))| {
            let other = if line.from_bus == sb {
                line.to_bus
            } else if line.to_bus == sb {
                line.from_bus
            } else {
                return None;
            };
            Some(v[sb] * (y * (v[sb] - v[other])).conj())
        })
        .sum();
    let (lo, hi) = (scen.s_min[sb], scen.s_max[sb]);
    let slack_ok =
        s.re >= lo.re - tol && s.re <= hi.re + tol && s.im >= lo.im - tol && s.im <= hi.im + tol;
    volts_ok && currents_ok && slack_ok
}

/// All assignments satisfying at-most-one-per-line and the user rows.
pub fn admissible_assignments(net: &Network) -> Vec<Vec<u8>> {
    let n = net.n_upg();
    (0u64..1 << n)
        .map(|bits| (0..n).map(|i| ((bits >> i) & 1) as u8).collect::<Vec<u8>>())
        .filter(|a| {
            let per_line_ok = net.lines.iter().all(|l| {
                net.options_for_line(l.id)
                    .iter()
                    .map(|&i| a[i] as u32)
                    .sum::<u32>()
                    <= 1
            });
            let user_ok = net.user_rows.iter().all(|(coeffs, rhs)| {
                coeffs
                    .iter()
                    .zip(a)
                    .map(|(c, &ai)| c * ai as f64)
                    .sum::<f64>()
                    <= rhs + 1e-9
            });
            per_line_ok && user_ok
        })
        .collect()
}

/// The worked 2-bus instance: base current 0.536 exceeds its 0.3 limit, one
/// upgrade doubling the admittance fixes it.
pub fn two_bus_upgrade() -> Network {
    let text = include_str!("../../../../data/two_bus_upgrade.json");
    upgrade_qcqp::io::parse_network(text, true).expect("bundled instance parses")
}

//! Builds the standard-form rows of the upgrade-planning problem from a
//! [`Network`].
//!
//! Four families are generated per scenario, in this order:
//!
//! 1. voltage magnitude boxes, one two-sided row per bus;
//! 2. current limits, one one-sided row per line, with the upgrade-dependent
//!    right-hand side linearized in `a`;
//! 3. Big-M line-flow rows tying each directed flow variable to the quadratic
//!    flow expression of whichever configuration of its line is selected;
//! 4. power balance, one row per bus and component over the directed flows.
//!
//! Line-flow rows come in quadruples per (directed flow, configuration): real
//! lower, real upper, reactive lower, reactive upper. The lower and upper
//! side of each band are separate one-sided rows with their own `m` vectors.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{validate_network, Network, SelectionRow};
use crate::qcqp::{
    ConstraintKind, Element, Problem, Provenance, QuadConstraint, SparseSymMatrix, SparseVec,
    SymBuilder, UpgradeTag, VariableLayout,
};

/// Relative headroom added on top of the worst-case flow deviation.
pub const BIG_M_MARGIN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReformOptions {
    pub big_m_override: Option<f64>,
    /// Adds `-M <= y_i` and `y_i <= M` rows for every flow variable.
    pub include_y_box_bounds: bool,
}

impl ReformOptions {
    pub fn validate(&self) -> Result<()> {
        match self.big_m_override {
            Some(m) if !(m > 0.0 && m.is_finite()) => Err(Error::InvalidOption(format!(
                "big-M override must be positive and finite, got {m}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Layout implied by the network's dimensions.
pub fn layout_for(net: &Network) -> VariableLayout {
    VariableLayout {
        n_bus: net.n_bus(),
        n_line: net.n_line(),
        n_scen: net.n_scen(),
        n_upg: net.n_upg(),
    }
}

fn row(
    layout: &VariableLayout,
    scenario: usize,
    kind: ConstraintKind,
    provenance: Provenance,
) -> QuadConstraint {
    QuadConstraint {
        scenario: Some(scenario),
        quad: SparseSymMatrix::empty(layout.z_len()),
        lin_y: SparseVec::empty(layout.y_len()),
        lin_a: SparseVec::empty(layout.n_upg),
        alpha: f64::NEG_INFINITY,
        beta: f64::INFINITY,
        kind,
        provenance,
    }
}

/// `v_min^2 <= v_r,j^2 + v_q,j^2 <= v_max^2` for every bus.
pub fn build_voltage_constraints(
    net: &Network,
    layout: &VariableLayout,
    k: usize,
) -> Vec<QuadConstraint> {
    net.buses
        .iter()
        .map(|bus| {
            let j = bus.id;
            let mut q = SymBuilder::new(layout.z_len());
            q.add(layout.vr(j), layout.vr(j), 1.0)
                .add(layout.vq(j), layout.vq(j), 1.0);
            QuadConstraint {
                quad: q.build(),
                alpha: bus.v_min * bus.v_min,
                beta: bus.v_max * bus.v_max,
                ..row(
                    layout,
                    k,
                    ConstraintKind::Voltage,
                    Provenance::base(Element::Bus(j)),
                )
            }
        })
        .collect()
}

/// `|v_j - v_l|^2` as a symmetric form over `z`.
pub fn voltage_difference_form(layout: &VariableLayout, j: usize, l: usize) -> SparseSymMatrix {
    let mut q = SymBuilder::new(layout.z_len());
    for (pj, pl) in [(layout.vr(j), layout.vr(l)), (layout.vq(j), layout.vq(l))] {
        q.add(pj, pj, 1.0).add(pl, pl, 1.0).add(pj, pl, -1.0);
    }
    q.build()
}

/// Squared admissible voltage-difference magnitude `(I / |y|)^2`.
pub fn squared_ratio(i_max: f64, y: Complex64) -> f64 {
    let r = i_max / y.norm();
    r * r
}

/// `|v_j - v_l|^2 + m' a <= u` per line.
///
/// `u = (I_max / |y|)^2` is the base cap. For each option `i` on the line,
/// `m_i = -[((I_max + dI_i) / |y + dy_i|)^2 - u]`, so with at most one option
/// selected `u - m'a` is exactly the squared cap of the selected configuration.
pub fn build_current_constraints(
    net: &Network,
    layout: &VariableLayout,
    k: usize,
) -> Result<Vec<QuadConstraint>> {
    net.lines
        .iter()
        .map(|line| {
            let u = squared_ratio(line.i_max, line.y_branch);
            let mut m = Vec::new();
            for i in net.options_for_line(line.id) {
                let opt = &net.upgrades[i];
                let y_up = line.y_branch + opt.delta_y;
                if y_up.norm() == 0.0 {
                    return Err(Error::SingularUpgrade {
                        line: line.id,
                        option: i,
                    });
                }
                m.push((i, -(squared_ratio(line.i_max + opt.delta_i, y_up) - u)));
            }
            Ok(QuadConstraint {
                quad: voltage_difference_form(layout, line.from_bus, line.to_bus),
                lin_a: SparseVec::accumulate(layout.n_upg, m),
                beta: u,
                ..row(
                    layout,
                    k,
                    ConstraintKind::Current,
                    Provenance::base(Element::Line(line.id)),
                )
            })
        })
        .collect()
}

/// Real and reactive parts of `v_j * conj(Y_jl * (v_l - v_j))` as symmetric
/// forms over `z`, where `y_off` is the off-diagonal admittance entry `Y_jl`
/// (the negated branch admittance).
pub fn flow_expansion(
    layout: &VariableLayout,
    j: usize,
    l: usize,
    y_off: Complex64,
) -> (SparseSymMatrix, SparseSymMatrix) {
    let (g, b) = (y_off.re, y_off.im);
    let (rj, qj, rl, ql) = (layout.vr(j), layout.vq(j), layout.vr(l), layout.vq(l));

    let mut re = SymBuilder::new(layout.z_len());
    re.add_monomial(rj, rj, -g)
        .add_monomial(rj, rl, g)
        .add_monomial(rj, ql, -b)
        .add_monomial(qj, ql, g)
        .add_monomial(qj, qj, -g)
        .add_monomial(qj, rl, b);

    let mut im = SymBuilder::new(layout.z_len());
    im.add_monomial(qj, rl, g)
        .add_monomial(qj, ql, -b)
        .add_monomial(qj, qj, b)
        .add_monomial(rj, ql, -g)
        .add_monomial(rj, rl, -b)
        .add_monomial(rj, rj, b);

    (re.build(), im.build())
}

fn negated(q: &SparseSymMatrix) -> SparseSymMatrix {
    let trips = q.triplets().iter().map(|&(r, c, v)| (r, c, -v)).collect();
    SparseSymMatrix::from_triplets(q.dim(), trips).expect("negation keeps structure")
}

/// Big-M rows for every directed flow and every configuration of its line.
///
/// Ordering: by line, then from-end before to-end, then options by ascending
/// id followed by the no-upgrade case, then (real lower, real upper, reactive
/// lower, reactive upper).
pub fn build_line_power_constraints(
    net: &Network,
    layout: &VariableLayout,
    k: usize,
    big_m: f64,
) -> Vec<QuadConstraint> {
    let mut rows = Vec::new();
    for line in &net.lines {
        let opts = net.options_for_line(line.id);
        let mut configs: Vec<(UpgradeTag, Complex64)> = opts
            .iter()
            .map(|&i| {
                (
                    UpgradeTag::Option(i),
                    -(line.y_branch + net.upgrades[i].delta_y),
                )
            })
            .collect();
        configs.push((UpgradeTag::Base, -line.y_branch));

        for (to_end, at, other) in [
            (false, line.from_bus, line.to_bus),
            (true, line.to_bus, line.from_bus),
        ] {
            let dir = layout.directed(line.id, to_end);
            let element = Element::Flow {
                line: line.id,
                at_bus: at,
            };
            for &(tag, y_off) in &configs {
                let (re, im) = flow_expansion(layout, at, other, y_off);
                // Lower and upper `m` vectors of the band.
                let (m_lo, m_hi, lo, hi) = match tag {
                    UpgradeTag::Option(i) => (
                        SparseVec::accumulate(layout.n_upg, [(i, -big_m)]),
                        SparseVec::accumulate(layout.n_upg, [(i, big_m)]),
                        -big_m,
                        big_m,
                    ),
                    UpgradeTag::Base => (
                        SparseVec::accumulate(layout.n_upg, opts.iter().map(|&i| (i, big_m))),
                        SparseVec::accumulate(layout.n_upg, opts.iter().map(|&i| (i, -big_m))),
                        0.0,
                        0.0,
                    ),
                };
                let provenance = Provenance {
                    element,
                    upgrade: tag,
                };
                for (form, y_idx, kind) in [
                    (&re, layout.lr(dir), ConstraintKind::LinePowerReal),
                    (&im, layout.lq(dir), ConstraintKind::LinePowerReactive),
                ] {
                    let base = QuadConstraint {
                        quad: negated(form),
                        lin_y: SparseVec::unit(layout.y_len(), y_idx),
                        ..row(layout, k, kind, provenance)
                    };
                    rows.push(QuadConstraint {
                        lin_a: m_lo.clone(),
                        alpha: lo,
                        ..base.clone()
                    });
                    rows.push(QuadConstraint {
                        lin_a: m_hi.clone(),
                        beta: hi,
                        ..base
                    });
                }
            }
        }
    }
    rows
}

/// Per bus, the sum of directed flows at that bus lies in the injection box:
/// one row over `l_r` (active) then one over `l_q` (reactive).
pub fn build_power_balance_constraints(
    net: &Network,
    layout: &VariableLayout,
    k: usize,
) -> Vec<QuadConstraint> {
    let scen = &net.scenarios[k];
    let mut rows = Vec::with_capacity(2 * net.n_bus());
    for bus in &net.buses {
        let j = bus.id;
        let dirs: Vec<usize> = net
            .incident_lines(j)
            .map(|line| layout.directed(line.id, line.to_bus == j))
            .collect();
        let element = Element::Bus(j);
        rows.push(QuadConstraint {
            lin_y: SparseVec::accumulate(layout.y_len(), dirs.iter().map(|&d| (layout.lr(d), 1.0))),
            alpha: scen.s_min[j].re,
            beta: scen.s_max[j].re,
            ..row(
                layout,
                k,
                ConstraintKind::BalanceReal,
                Provenance::base(element),
            )
        });
        rows.push(QuadConstraint {
            lin_y: SparseVec::accumulate(layout.y_len(), dirs.iter().map(|&d| (layout.lq(d), 1.0))),
            alpha: scen.s_min[j].im,
            beta: scen.s_max[j].im,
            ..row(
                layout,
                k,
                ConstraintKind::BalanceReactive,
                Provenance::base(element),
            )
        });
    }
    rows
}

fn build_flow_box_constraints(
    layout: &VariableLayout,
    k: usize,
    big_m: f64,
) -> Vec<QuadConstraint> {
    (0..layout.y_len())
        .flat_map(|i| {
            let base = QuadConstraint {
                lin_y: SparseVec::unit(layout.y_len(), i),
                ..row(
                    layout,
                    k,
                    ConstraintKind::FlowBox,
                    Provenance::base(Element::FlowVar(i)),
                )
            };
            [
                QuadConstraint {
                    alpha: -big_m,
                    ..base.clone()
                },
                QuadConstraint {
                    beta: big_m,
                    ..base
                },
            ]
        })
        .collect()
}

/// The complete `A a <= b` system: user rows then per-line exclusivity rows.
pub fn build_selection_constraints(net: &Network) -> Vec<SelectionRow> {
    net.selection_rows()
}

/// Big-M constant for the line-flow bands.
///
/// For a fixed line end, two configurations with off-diagonal entries `Y_a`
/// and `Y_b` produce flows differing by `v_j * conj((Y_a - Y_b)(v_l - v_j))`,
/// which is bounded by `2 v_max^2 |Y_a - Y_b|`. Flow values themselves are
/// bounded by `2 v_max^2 |Y_a|`. `M` is the larger of these bounds over all
/// lines and configuration pairs, times `1 + BIG_M_MARGIN`.
pub fn compute_big_m(net: &Network) -> f64 {
    let v_max = net.buses.iter().map(|b| b.v_max).fold(0.0, f64::max);
    let mut spread: f64 = 0.0;
    for line in &net.lines {
        let mut configs = vec![line.y_branch];
        configs.extend(
            net.options_for_line(line.id)
                .into_iter()
                .map(|i| line.y_branch + net.upgrades[i].delta_y),
        );
        for (ia, ya) in configs.iter().enumerate() {
            spread = spread.max(ya.norm());
            for yb in &configs[ia + 1..] {
                spread = spread.max((ya - yb).norm());
            }
        }
    }
    if spread == 0.0 {
        // No lines, so no line-flow rows to size.
        return 1.0;
    }
    2.0 * v_max * v_max * spread * (1.0 + BIG_M_MARGIN)
}

/// Assembles the full problem for every scenario of `net`.
pub fn build_problem(net: &Network, options: &ReformOptions) -> Result<Problem> {
    options.validate()?;
    validate_network(net).into_result()?;
    let layout = layout_for(net);
    let big_m = options.big_m_override.unwrap_or_else(|| compute_big_m(net));

    let per_scenario: Vec<Vec<QuadConstraint>> = (0..layout.n_scen)
        .into_par_iter()
        .map(|k| {
            let mut rows = build_voltage_constraints(net, &layout, k);
            rows.extend(build_current_constraints(net, &layout, k)?);
            rows.extend(build_line_power_constraints(net, &layout, k, big_m));
            rows.extend(build_power_balance_constraints(net, &layout, k));
            if options.include_y_box_bounds {
                rows.extend(build_flow_box_constraints(&layout, k, big_m));
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    Ok(Problem {
        layout,
        constraints: per_scenario.into_iter().flatten().collect(),
        selection: build_selection_constraints(net),
        objective: net.costs(),
        big_m,
    })
}

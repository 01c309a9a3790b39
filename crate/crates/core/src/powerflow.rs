//! Rectangular-coordinate Newton-Raphson power flow.
//!
//! Solves `diag(v) conj(Y v) = s` at every non-slack bus for fixed complex
//! injections `s`, with the slack bus held at a real voltage. The unknowns are
//! the real and imaginary voltage parts of the non-slack buses, matching the
//! `z = [v_r; v_q]` coordinates of the QCQP.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{AdmittanceMatrix, Line};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PFConfig {
    /// Max-norm threshold on the non-slack mismatch.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PFConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PFResult {
    pub v: Vec<Complex64>,
    pub iterations: usize,
    pub mismatch_norm: f64,
    pub converged: bool,
    pub slack_injection: Complex64,
    /// Why the solve stopped early, when it did.
    pub diagnostic: Option<String>,
}

fn mismatch(y: &AdmittanceMatrix, v: &[Complex64], s: &[Complex64], buses: &[usize]) -> Vec<f64> {
    let inj = y.injections(v);
    buses
        .iter()
        .flat_map(|&k| {
            let d = inj[k] - s[k];
            [d.re, d.im]
        })
        .collect()
}

fn max_norm(x: &[f64]) -> f64 {
    x.iter().fold(
        0.0,
        |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) },
    )
}

/// Real Jacobian of the stacked (Re, Im) mismatch with respect to the
/// stacked (v_r, v_q) of each unknown bus.
fn jacobian(y: &AdmittanceMatrix, v: &[Complex64], buses: &[usize]) -> DMatrix<f64> {
    let current = y.mul_vec(v);
    let i = Complex64::new(0.0, 1.0);
    let n = buses.len();
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for (row, &k) in buses.iter().enumerate() {
        for (col, &m) in buses.iter().enumerate() {
            let ykm = y.get(k, m).conj();
            let mut d_vr = v[k] * ykm;
            let mut d_vq = -i * v[k] * ykm;
            if k == m {
                d_vr += current[k].conj();
                d_vq += i * current[k].conj();
            }
            jac[(2 * row, 2 * col)] = d_vr.re;
            jac[(2 * row, 2 * col + 1)] = d_vq.re;
            jac[(2 * row + 1, 2 * col)] = d_vr.im;
            jac[(2 * row + 1, 2 * col + 1)] = d_vq.im;
        }
    }
    jac
}

/// Runs Newton-Raphson from a flat start.
///
/// `injections` has one entry per bus; the slack entry is ignored. A singular
/// Jacobian, a non-finite iterate, or hitting `max_iter` all return a result
/// with `converged = false`.
pub fn solve_newton(
    y: &AdmittanceMatrix,
    injections: &[Complex64],
    slack: (usize, f64),
    cfg: &PFConfig,
) -> Result<PFResult> {
    let n = y.n();
    let (slack_bus, slack_v) = slack;
    if injections.len() != n {
        return Err(Error::InvalidOption(format!(
            "{} injections for {n} buses",
            injections.len()
        )));
    }
    if slack_bus >= n || slack_v.is_nan() || slack_v <= 0.0 {
        return Err(Error::InvalidOption(format!(
            "invalid slack ({slack_bus}, {slack_v})"
        )));
    }
    if cfg.tol.is_nan() || cfg.tol <= 0.0 || cfg.max_iter == 0 {
        return Err(Error::InvalidOption(
            "PFConfig needs tol > 0 and max_iter >= 1".into(),
        ));
    }

    let buses: Vec<usize> = (0..n).filter(|&k| k != slack_bus).collect();
    let mut v = vec![Complex64::new(slack_v, 0.0); n];
    let mut f = mismatch(y, &v, injections, &buses);
    let mut norm = max_norm(&f);
    let mut iterations = 0;
    let mut diagnostic = None;

    while norm.is_nan() || norm > cfg.tol {
        if norm.is_nan() {
            diagnostic = Some("non-finite iterate".to_string());
            break;
        }
        if iterations == cfg.max_iter {
            diagnostic = Some(format!("iteration cap {} reached", cfg.max_iter));
            break;
        }
        let jac = jacobian(y, &v, &buses);
        let rhs = DVector::from_iterator(f.len(), f.iter().map(|x| -x));
        let Some(dx) = jac.lu().solve(&rhs) else {
            diagnostic = Some(format!("singular Jacobian at iteration {iterations}"));
            break;
        };
        for (t, &k) in buses.iter().enumerate() {
            v[k] += Complex64::new(dx[2 * t], dx[2 * t + 1]);
        }
        iterations += 1;
        f = mismatch(y, &v, injections, &buses);
        norm = max_norm(&f);
    }

    let converged = norm <= cfg.tol;
    let slack_injection = y.injections(&v)[slack_bus];
    Ok(PFResult {
        v,
        iterations,
        mismatch_norm: norm,
        converged,
        slack_injection,
        diagnostic: if converged { None } else { diagnostic },
    })
}

/// Complex power `v_j conj(Y_jl (v_l - v_j))` leaving bus `j` into the branch
/// towards `l`.
pub fn directed_flow(y: &AdmittanceMatrix, j: usize, l: usize, v: &[Complex64]) -> Complex64 {
    v[j] * (y.get(j, l) * (v[l] - v[j])).conj()
}

/// Both directed flows of one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFlow {
    pub from: usize,
    pub to: usize,
    /// Flow measured at `from`.
    pub at_from: Complex64,
    /// Flow measured at `to`.
    pub at_to: Complex64,
}

impl BranchFlow {
    /// Series loss of the branch.
    pub fn loss(&self) -> Complex64 {
        self.at_from + self.at_to
    }
}

/// Directed flows for every bus pair joined by a nonzero off-diagonal entry,
/// ordered by `(from, to)` with `from < to`.
pub fn branch_flows(y: &AdmittanceMatrix, v: &[Complex64]) -> Vec<BranchFlow> {
    let n = y.n();
    let mut out = Vec::new();
    for j in 0..n {
        for l in j + 1..n {
            if y.get(j, l) != Complex64::new(0.0, 0.0) {
                out.push(BranchFlow {
                    from: j,
                    to: l,
                    at_from: directed_flow(y, j, l, v),
                    at_to: directed_flow(y, l, j, v),
                });
            }
        }
    }
    out
}

/// Directed flows in line order, oriented by each line's own endpoints.
pub fn line_flows(y: &AdmittanceMatrix, lines: &[Line], v: &[Complex64]) -> Vec<BranchFlow> {
    lines
        .iter()
        .map(|line| BranchFlow {
            from: line.from_bus,
            to: line.to_bus,
            at_from: directed_flow(y, line.from_bus, line.to_bus, v),
            at_to: directed_flow(y, line.to_bus, line.from_bus, v),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_bus(y: Complex64) -> AdmittanceMatrix {
        let mut m = AdmittanceMatrix::zeros(2);
        m.stamp_branch(0, 1, y);
        m
    }

    #[test]
    fn zero_injections_converge_immediately() {
        let y = two_bus(c(1.0, -3.0));
        let r = solve_newton(&y, &[c(0.0, 0.0); 2], (0, 1.0), &PFConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.slack_injection, c(0.0, 0.0));
        assert_eq!(r.v, vec![c(1.0, 0.0); 2]);
    }

    #[test]
    fn two_bus_load() {
        let y = two_bus(c(1.0, -3.0));
        let s = [c(0.0, 0.0), c(-0.1, 0.0)];
        let r = solve_newton(&y, &s, (0, 1.0), &PFConfig::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.mismatch_norm <= 1e-10);
        assert!(r.v[1].norm() < 1.0);
        assert!(r.slack_injection.re > 0.1);
        // Independent fixed point computed offline.
        assert!(
            (r.v[1] - c(0.9889785271359061, -0.03)).norm() < 1e-10,
            "{:?}",
            r
        );
    }

    #[test]
    fn overload_does_not_converge() {
        let y = two_bus(c(1.0, -3.0));
        let s = [c(0.0, 0.0), c(-100.0, 0.0)];
        let r = solve_newton(&y, &s, (0, 1.0), &PFConfig::default()).unwrap();
        assert!(!r.converged);
        assert!(r.diagnostic.is_some());
    }

    #[test]
    fn isolated_bus_has_singular_jacobian() {
        let mut y = AdmittanceMatrix::zeros(3);
        y.stamp_branch(0, 1, c(1.0, -3.0));
        let s = [c(0.0, 0.0), c(-0.1, 0.0), c(-0.1, 0.0)];
        let r = solve_newton(&y, &s, (0, 1.0), &PFConfig::default()).unwrap();
        assert!(!r.converged);
        assert!(r.diagnostic.unwrap().contains("singular"));
    }

    #[test]
    fn bad_inputs_are_errors() {
        let y = two_bus(c(1.0, -3.0));
        let cfg = PFConfig::default();
        assert!(solve_newton(&y, &[c(0.0, 0.0)], (0, 1.0), &cfg).is_err());
        assert!(solve_newton(&y, &[c(0.0, 0.0); 2], (2, 1.0), &cfg).is_err());
        assert!(solve_newton(&y, &[c(0.0, 0.0); 2], (0, 0.0), &cfg).is_err());
    }

    #[test]
    fn flat_profile_has_no_flow() {
        let y = two_bus(c(1.0, -3.0));
        let f = branch_flows(&y, &[c(1.03, 0.2); 2]);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].at_from, c(0.0, 0.0));
        assert_eq!(f[0].at_to, c(0.0, 0.0));
    }

    #[test]
    fn two_bus_flows_and_loss() {
        let y = two_bus(c(1.0, -3.0));
        let v = [c(1.0, 0.0), c(0.95, 0.0)];
        let f = branch_flows(&y, &v)[0];
        assert!((f.at_from - c(0.05, 0.15)).norm() < 1e-15);
        assert!((f.at_to - c(-0.0475, -0.1425)).norm() < 1e-15);
        // |dv|^2 Re(y)
        assert!((f.loss().re - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn phase_only_difference_decomposes() {
        let y = two_bus(c(1.0, -3.0));
        let v = [c(1.0, 0.0), Complex64::from_polar(1.0, -0.1)];
        let f = branch_flows(&y, &v)[0];
        let inj = y.injections(&v);
        assert!((f.at_from - inj[0]).norm() < 1e-9);
        assert!((f.at_to - inj[1]).norm() < 1e-9);
        assert!(f.at_from.re > 0.0 && f.at_to.re < 0.0);
    }
}

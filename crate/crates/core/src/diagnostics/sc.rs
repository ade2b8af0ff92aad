//! Single-crossing profile of the payoff's generator.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::problem::StoppingProblem;

use super::environment::Witness;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SCLayer {
    pub t: f64,
    pub x_c: f64,
    pub sc: bool,
    pub ssc: bool,
    /// Sign change of `h` left of `x^c` (lower edge when `h > 0` there
    /// throughout, `x^c` when `h < 0` throughout).
    pub x_minus: Option<f64>,
    pub x_plus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SCProfile {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    /// `h(t, x)` row-major in t; NaN at the excluded kink node.
    pub h: Vec<f64>,
    pub layers: Vec<SCLayer>,
    pub verdict_sc: bool,
    pub verdict_ssc: bool,
    pub witnesses: Vec<Witness>,
}

const MAX_LAYERS: usize = 41;

/// `h = f + g_t + σ²/2 g_xx + μ g_x - r g` on the active payoff branch.
fn h_at(problem: &StoppingProblem, t: f64, x: f64) -> f64 {
    let c = &problem.coefficients;
    let branch = match problem.payoff.active(t, x) {
        crate::problem::Branch::A => &problem.payoff.branch_a,
        crate::problem::Branch::B => &problem.payoff.branch_b,
    };
    let p = branch.partials(t, x);
    let s = c.sigma.eval(t, x);
    c.flow.eval(t, x) + p.dt + 0.5 * s * s * p.dxx + c.mu.eval(t, x) * p.dx - c.discount.eval(t, x) * branch.eval(t, x)
}

/// Root of `h(t, ·)` in `[a, b]`, where `h` changes sign.
fn bisect(problem: &StoppingProblem, t: f64, mut a: f64, mut b: f64) -> f64 {
    let fa = h_at(problem, t, a);
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if (h_at(problem, t, m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Shape of one side, ordered from the grid edge toward `x^c`: `h` must be
/// nondecreasing (SC) with signs `-, ..., -, +, ..., +` (SSC). Returns
/// (sc, ssc, crossing, first offending index).
fn side(
    problem: &StoppingProblem,
    t: f64,
    xs: &[f64],
    hs: &[f64],
    tol: f64,
    edge: f64,
    x_c: f64,
) -> (bool, bool, Option<f64>, Option<usize>) {
    let mut bad = None;
    for k in 1..hs.len() {
        if hs[k] - hs[k - 1] < -tol {
            bad = Some(k);
            break;
        }
    }
    let sc = bad.is_none();
    let sign = |v: f64| {
        if v > tol {
            1
        } else if v < -tol {
            -1
        } else {
            0
        }
    };
    let signs: Vec<i32> = hs.iter().map(|&v| sign(v)).collect();
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    let zeros = signs.windows(2).filter(|w| w[0] == 0 && w[1] == 0).count();
    let ordered = signs.windows(2).all(|w| w[0] <= w[1]);
    let ssc = sc && ordered && zeros == 0 && changes <= 2;
    let crossing = if !ssc || xs.is_empty() {
        None
    } else if let Some(k) = (1..hs.len()).find(|&k| signs[k - 1] < 0 && signs[k] >= 0) {
        Some(if signs[k] == 0 { xs[k] } else { bisect(problem, t, xs[k - 1], xs[k]) })
    } else if signs.iter().all(|&v| v >= 0) {
        Some(edge)
    } else {
        Some(x_c)
    };
    (sc, ssc, crossing, bad)
}

/// Samples `h` at the grid nodes of up to 41 layers and tests the
/// up-then-down shape around `x^c` (SC) and unique sign changes (SSC).
pub fn check_single_crossing(problem: &StoppingProblem, grid: &Grid) -> Result<SCProfile> {
    let nt = grid.t.len();
    let stride = nt.div_ceil(MAX_LAYERS).max(1);
    let mut ts: Vec<f64> = grid.t.iter().copied().step_by(stride).collect();
    if ts.last() != grid.t.last() {
        ts.push(grid.t[nt - 1]);
    }
    let x = &grid.x;
    let nx = x.len();
    let (lo, hi) = (x[0], x[nx - 1]);
    let mut out = SCProfile {
        t: ts.clone(),
        x: x.clone(),
        h: Vec::with_capacity(ts.len() * nx),
        layers: Vec::new(),
        verdict_sc: true,
        verdict_ssc: true,
        witnesses: Vec::new(),
    };
    for &t in &ts {
        let x_c = problem.payoff.crossing_at(t, lo, hi).unwrap_or(hi);
        let mut row = Vec::with_capacity(nx);
        for i in 0..nx {
            let cell = grid.cell_at(x[i]);
            if (x[i] - x_c).abs() < 0.5 * cell {
                row.push(f64::NAN);
            } else {
                let v = h_at(problem, t, x[i]);
                if !v.is_finite() {
                    return Err(Error::NonFinite { expr: "h = f + g_t + (L - r) g".into(), value: v, t, x: x[i] });
                }
                row.push(v);
            }
        }
        let scale = row.iter().filter(|v| v.is_finite()).fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-9 * scale;
        let left: Vec<usize> = (0..nx).filter(|&i| x[i] < x_c && row[i].is_finite()).collect();
        let right: Vec<usize> = (0..nx).filter(|&i| x[i] > x_c && row[i].is_finite()).collect();
        let pick = |ix: &[usize]| -> (Vec<f64>, Vec<f64>) { (ix.iter().map(|&i| x[i]).collect(), ix.iter().map(|&i| row[i]).collect()) };
        let (xl, hl) = pick(&left);
        let (mut xr, mut hr) = pick(&right);
        let (sc_l, ssc_l, x_minus, bad_l) = side(problem, t, &xl, &hl, tol, lo, x_c);
        // Read the right side from the upper edge inward.
        xr.reverse();
        hr.reverse();
        let (sc_r, ssc_r, x_plus, bad_r) = side(problem, t, &xr, &hr, tol, hi, x_c);
        for (bad, xs, hs, label) in [(bad_l, &xl, &hl, "h decreasing left of x_c"), (bad_r, &xr, &hr, "h increasing right of x_c")] {
            if let Some(k) = bad {
                if out.witnesses.len() < 16 {
                    out.witnesses.push(Witness { t, x: xs[k], value: hs[k] - hs[k - 1], condition: label.into() });
                }
            }
        }
        let sc = sc_l && sc_r;
        let ssc = sc && ssc_l && ssc_r;
        out.verdict_sc &= sc;
        out.verdict_ssc &= ssc;
        out.layers.push(SCLayer {
            t,
            x_c,
            sc,
            ssc,
            x_minus: if ssc { x_minus } else { None },
            x_plus: if ssc { x_plus } else { None },
        });
        out.h.extend(row);
    }
    Ok(out)
}

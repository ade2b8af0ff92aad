//! Monotone-environment classification and boundary-monotonicity checks.

use serde::{Deserialize, Serialize};

use crate::field::CoefficientField;
use crate::problem::{Branch, Coefficients, StoppingProblem};
use crate::solver::{FreeBoundary, Region, ValueSurface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonotoneClass {
    IncreasingStrict,
    Increasing,
    Flat,
    Decreasing,
    DecreasingStrict,
    Mixed,
}

impl MonotoneClass {
    pub fn is_strict(self) -> bool {
        matches!(self, MonotoneClass::IncreasingStrict | MonotoneClass::DecreasingStrict)
    }

    /// `+1` for increasing, `-1` for decreasing, `0` otherwise.
    pub fn direction(self) -> i32 {
        match self {
            MonotoneClass::IncreasingStrict | MonotoneClass::Increasing => 1,
            MonotoneClass::DecreasingStrict | MonotoneClass::Decreasing => -1,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    pub x: f64,
    pub value: f64,
    pub condition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneVerdict {
    pub classification: MonotoneClass,
    pub vt_min: f64,
    pub vt_max: f64,
    /// Extremes of `σσ_t V_xx + μ_t V_x - r_t V + f_t` over checked nodes
    /// and coefficient sets.
    pub iov_min: f64,
    pub dov_max: f64,
    pub nodes_checked: usize,
    pub kink_skipped: usize,
    /// Layers with one or two continuation nodes, too thin to difference.
    pub thin_layers: usize,
    /// True when the payoff depends on t and `V - g` was classified.
    pub reduced: bool,
    pub tol: f64,
    pub witnesses: Vec<Witness>,
    pub explanation: Option<String>,
}

const MAX_WITNESSES: usize = 16;

/// Time derivative of the extra flow that appears when the payoff depends
/// on t: `g_tt + μ g_xt + σ²/2 g_xxt - r g_t` on the active branch.
fn payoff_term(c: &Coefficients, g: &CoefficientField, t: f64, x: f64) -> f64 {
    if g.is_time_invariant() {
        return 0.0;
    }
    let h = 1e-5 * (1.0 + t.abs());
    let p = g.partials(t, x);
    let (pp, pm) = (g.partials(t + h, x), g.partials((t - h).max(0.0), x));
    let span = t + h - (t - h).max(0.0);
    let g_tt = (pp.dt - pm.dt) / span;
    let g_xt = (pp.dx - pm.dx) / span;
    let g_xxt = (pp.dxx - pm.dxx) / span;
    let mu = c.mu.eval(t, x);
    let s = c.sigma.eval(t, x);
    let r = c.discount.eval(t, x);
    g_tt + mu * g_xt + 0.5 * s * s * g_xxt - r * p.dt
}

/// Classifies the solved surface as a monotone environment.
///
/// `V_t` uses one-sided differences (forward, backward on the last layer),
/// `V_x`, `V_xx` central differences at continuation nodes whose neighbours
/// also continue. When the payoff depends on t the test applies to `V - g`,
/// whose flow picks up the payoff's own time variation.
pub fn classify_environment(problem: &StoppingProblem, surface: &ValueSurface) -> MonotoneVerdict {
    let sets: Vec<&Coefficients> = if problem.is_controlled() {
        problem.actions.iter().map(|a| &a.coefficients).collect()
    } else {
        vec![&problem.coefficients]
    };
    let grid = &surface.grid;
    let (nt, nx) = (surface.nt(), surface.nx());
    let x = &grid.x;
    let tol = 1e-9 * surface.scale;
    let reduced = !problem.payoff.is_time_invariant();
    let mut v = MonotoneVerdict {
        classification: MonotoneClass::Mixed,
        vt_min: f64::INFINITY,
        vt_max: f64::NEG_INFINITY,
        iov_min: f64::INFINITY,
        dov_max: f64::NEG_INFINITY,
        nodes_checked: 0,
        kink_skipped: 0,
        thin_layers: 0,
        reduced,
        tol,
        witnesses: Vec::new(),
        explanation: None,
    };
    let mut vt_nonpos = 0usize;
    let mut vt_nonneg = 0usize;
    let mut first_nonpos: Option<Witness> = None;
    let mut first_nonneg: Option<Witness> = None;
    let mut first_neg_int: Option<Witness> = None;
    let mut first_pos_int: Option<Witness> = None;
    for n in 0..nt {
        let t = grid.t[n];
        let reg = surface.region_layer(n);
        let cont = reg.iter().filter(|&&r| r == Region::Continue).count();
        if cont == 0 {
            continue;
        }
        if cont < 3 {
            v.thin_layers += 1;
            continue;
        }
        let row = surface.layer(n);
        let x_c = problem.payoff.crossing_at(t, x[0], x[nx - 1]);
        for i in 1..nx - 1 {
            if reg[i - 1] != Region::Continue || reg[i] != Region::Continue || reg[i + 1] != Region::Continue {
                continue;
            }
            let (hm, hp) = (x[i] - x[i - 1], x[i + 1] - x[i]);
            if let Some(c) = x_c {
                if (x[i] - c).abs() < 0.5 * hm.min(hp) {
                    v.kink_skipped += 1;
                    continue;
                }
            }
            let vt = if nt == 1 {
                0.0
            } else {
                let (a, b) = if n + 1 < nt { (n, n + 1) } else { (n - 1, n) };
                let dt = grid.t[b] - grid.t[a];
                let w = |k: usize| surface.layer(k)[i] - if reduced { surface.obstacle_layer(k)[i] } else { 0.0 };
                (w(b) - w(a)) / dt
            };
            let vx = (row[i + 1] - row[i - 1]) / (hm + hp);
            let vxx = 2.0 * ((row[i + 1] - row[i]) / hp - (row[i] - row[i - 1]) / hm) / (hm + hp);
            let branch = match problem.payoff.active(t, x[i]) {
                Branch::A => &problem.payoff.branch_a,
                Branch::B => &problem.payoff.branch_b,
            };
            for c in &sets {
                let s = c.sigma.eval(t, x[i]);
                let integrand = s * c.sigma.partials(t, x[i]).dt * vxx + c.mu.partials(t, x[i]).dt * vx
                    - c.discount.partials(t, x[i]).dt * row[i]
                    + c.flow.partials(t, x[i]).dt
                    + if reduced { payoff_term(c, branch, t, x[i]) } else { 0.0 };
                v.iov_min = v.iov_min.min(integrand);
                v.dov_max = v.dov_max.max(integrand);
                if integrand < -tol && first_neg_int.is_none() {
                    first_neg_int = Some(Witness { t, x: x[i], value: integrand, condition: "integrand < 0".into() });
                }
                if integrand > tol && first_pos_int.is_none() {
                    first_pos_int = Some(Witness { t, x: x[i], value: integrand, condition: "integrand > 0".into() });
                }
            }
            v.vt_min = v.vt_min.min(vt);
            v.vt_max = v.vt_max.max(vt);
            v.nodes_checked += 1;
            if vt <= 0.0 {
                vt_nonpos += 1;
                first_nonpos.get_or_insert(Witness { t, x: x[i], value: vt, condition: "V_t <= 0".into() });
            }
            if vt >= 0.0 {
                vt_nonneg += 1;
                first_nonneg.get_or_insert(Witness { t, x: x[i], value: vt, condition: "V_t >= 0".into() });
            }
        }
    }
    if v.nodes_checked == 0 {
        v.explanation = Some("fewer than 3 continuation nodes in every layer; refine the grid".into());
        return v;
    }
    let checked = v.nodes_checked;
    let flat = v.vt_min >= -tol && v.vt_max <= tol && v.iov_min >= -tol && v.dov_max <= tol;
    let inc = v.vt_min >= -tol;
    let dec = v.vt_max <= tol;
    v.classification = if flat {
        MonotoneClass::Flat
    } else if inc && !dec {
        if vt_nonpos == 0 && v.iov_min >= -tol {
            MonotoneClass::IncreasingStrict
        } else {
            MonotoneClass::Increasing
        }
    } else if dec && !inc {
        if vt_nonneg == 0 && v.dov_max <= tol {
            MonotoneClass::DecreasingStrict
        } else {
            MonotoneClass::Decreasing
        }
    } else {
        MonotoneClass::Mixed
    };
    let mut push = |w: Option<Witness>| {
        if let Some(w) = w {
            if v.witnesses.len() < MAX_WITNESSES {
                v.witnesses.push(w);
            }
        }
    };
    match v.classification {
        MonotoneClass::Increasing => {
            push(first_nonpos);
            push(first_neg_int);
        }
        MonotoneClass::Decreasing => {
            push(first_nonneg);
            push(first_pos_int);
        }
        MonotoneClass::Mixed => {
            push(first_nonpos);
            push(first_nonneg);
            v.explanation = Some(format!("V_t changes sign over {checked} checked nodes"));
        }
        _ => {}
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityOptions {
    /// Window, in time steps, over which strict movement is required.
    pub window: usize,
    /// Allowed movement against the direction, in grid cells.
    pub slack_cells: f64,
    /// Required cumulative strict movement, in grid cells.
    pub strict_cells: f64,
    /// Boundaries closer than this many cells to a grid edge are not
    /// interior.
    pub edge_cells: f64,
}

impl Default for MonotonicityOptions {
    fn default() -> Self {
        Self {
            window: 20,
            slack_cells: 1.0,
            strict_cells: 2.0,
            edge_cells: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryViolation {
    pub t: f64,
    pub side: &'static str,
    pub kind: &'static str,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryCheck {
    pub classification: MonotoneClass,
    pub pass: bool,
    /// Net movement of each boundary between its first and last interior
    /// layers, signed in the x direction.
    pub lower_movement: Option<f64>,
    pub upper_movement: Option<f64>,
    pub windows_checked: usize,
    pub census: Vec<BoundaryViolation>,
}

/// Checks that the boundaries move as the classification predicts.
pub fn verify_boundary_monotonicity(
    boundary: &FreeBoundary,
    verdict: &MonotoneVerdict,
    opts: &MonotonicityOptions,
) -> BoundaryCheck {
    let class = verdict.classification;
    let mut out = BoundaryCheck {
        classification: class,
        pass: true,
        lower_movement: None,
        upper_movement: None,
        windows_checked: 0,
        census: Vec::new(),
    };
    if class == MonotoneClass::Mixed {
        out.pass = false;
        out.census.push(BoundaryViolation { t: f64::NAN, side: "both", kind: "mixed classification", amount: 0.0 });
        return out;
    }
    if !boundary.valid {
        out.pass = false;
        out.census.push(BoundaryViolation { t: f64::NAN, side: "both", kind: "boundary invalid", amount: 0.0 });
    }
    let nodes = &boundary.x_nodes;
    let (x_lo, x_hi) = (nodes[0], nodes[nodes.len() - 1]);
    let interior = |n: usize, b: Option<f64>| -> Option<f64> {
        let b = b?;
        if boundary.empty[n] {
            return None;
        }
        let c = boundary.cell_at(b);
        (b - x_lo > opts.edge_cells * c && x_hi - b > opts.edge_cells * c).then_some(b)
    };
    // Expected sign of movement of each series: +1 rises, -1 falls.
    let dir = class.direction();
    for (side, series, sign) in [("lower", &boundary.lower, -dir), ("upper", &boundary.upper, dir)] {
        let vals: Vec<Option<f64>> = (0..boundary.len()).map(|n| interior(n, series[n])).collect();
        let present: Vec<(usize, f64)> = vals.iter().enumerate().filter_map(|(n, v)| v.map(|v| (n, v))).collect();
        let Some(&(n0, first)) = present.first() else { continue };
        let &(_, last) = present.last().expect("non-empty");
        let movement = last - first;
        if side == "lower" {
            out.lower_movement = Some(movement);
        } else {
            out.upper_movement = Some(movement);
        }
        if dir == 0 {
            // Flat: the whole series within one cell.
            let (mn, mx) = present.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, v)| (a.min(v), b.max(v)));
            let cell = boundary.cell_at(0.5 * (mn + mx));
            if mx - mn > opts.slack_cells * cell {
                out.census.push(BoundaryViolation { t: boundary.t[n0], side, kind: "not flat", amount: mx - mn });
            }
            continue;
        }
        let s = sign as f64;
        // Never move against the direction by more than the slack.
        let mut best = f64::NEG_INFINITY;
        for &(n, v) in &present {
            let cell = boundary.cell_at(v);
            if s * v < best - opts.slack_cells * cell {
                out.census.push(BoundaryViolation {
                    t: boundary.t[n],
                    side,
                    kind: "moves against the classified direction",
                    amount: best - s * v,
                });
            }
            best = best.max(s * v);
        }
        if class.is_strict() {
            let cell = boundary.cell_at(first);
            if s * movement < opts.strict_cells * cell {
                out.census.push(BoundaryViolation {
                    t: boundary.t[n0],
                    side,
                    kind: "cumulative movement below the strict threshold",
                    amount: movement,
                });
            }
            let w = opts.window;
            for n in 0..vals.len().saturating_sub(w) {
                if let (Some(a), Some(b)) = (vals[n], vals[n + w]) {
                    out.windows_checked += 1;
                    if !(s * (b - a) > 0.0) {
                        out.census.push(BoundaryViolation {
                            t: boundary.t[n],
                            side,
                            kind: "no strict movement over window",
                            amount: b - a,
                        });
                    }
                }
            }
        }
    }
    out.pass = out.census.is_empty();
    out
}

impl MonotoneVerdict {
    /// A verdict carrying only a classification, for checking boundaries
    /// against a predicted direction.
    pub fn predicted(classification: MonotoneClass) -> Self {
        Self {
            classification,
            vt_min: f64::NAN,
            vt_max: f64::NAN,
            iov_min: f64::NAN,
            dov_max: f64::NAN,
            nodes_checked: 0,
            kink_skipped: 0,
            thin_layers: 0,
            reduced: false,
            tol: 0.0,
            witnesses: Vec::new(),
            explanation: None,
        }
    }
}

/// Classification of a controlled solve: the integrand must carry the same
/// sign under every action in the menu.
pub fn controlled_monotonicity_check(surface: &crate::solver::ControlledSurface, problem: &StoppingProblem) -> MonotoneVerdict {
    classify_environment(problem, &surface.surface)
}

//! Sign tables predicting boundary directions from coefficient trends.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::grid::Grid;
use crate::problem::{Branch, StoppingProblem};
use crate::solver::{extract_boundaries, solve, SolverSettings};

use super::environment::{verify_boundary_monotonicity, BoundaryCheck, MonotoneClass, MonotoneVerdict, MonotonicityOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignEntry {
    pub name: &'static str,
    pub min: f64,
    pub max: f64,
    /// Nonzero with this sign at every probe.
    pub strict: bool,
}

impl SignEntry {
    fn nonneg(&self, tol: f64) -> bool {
        self.min >= -tol
    }

    fn nonpos(&self, tol: f64) -> bool {
        self.max <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignTable {
    pub version: u32,
    pub problem: String,
    pub entries: Vec<SignEntry>,
    /// `None` when the signs are mixed: no prediction is made.
    pub prediction: Option<MonotoneClass>,
    pub verification: Option<BoundaryCheck>,
    pub agreement: Option<bool>,
}

const PROBE_T: usize = 17;
const PROBE_X: usize = 65;
const TOL: f64 = 1e-12;

/// `field(t, x) / x^k` is the same for all probe x, with `k` 0 or 1.
fn time_only(f: &CoefficientField, ts: &[f64], xs: &[f64]) -> bool {
    let flat = |k: i32| {
        ts.iter().all(|&t| {
            let r0 = f.eval(t, xs[0]) / xs[0].powi(k);
            xs.iter().all(|&x| (f.eval(t, x) / x.powi(k) - r0).abs() <= 1e-10 * (1.0 + r0.abs()))
        })
    };
    flat(0) || xs[0] > 0.0 && flat(1)
}

/// Convex and monotone in x at every probe: returns (convex, nondecreasing,
/// nonincreasing).
fn shape(f: impl Fn(f64, f64) -> f64, ts: &[f64], xs: &[f64]) -> (bool, bool, bool) {
    let (mut convex, mut up, mut down) = (true, true, true);
    for &t in ts {
        let v: Vec<f64> = xs.iter().map(|&x| f(t, x)).collect();
        let tol = 1e-10 * v.iter().fold(1.0f64, |m, a| m.max(a.abs()));
        for i in 1..v.len() {
            let d = v[i] - v[i - 1];
            up &= d >= -tol;
            down &= d <= tol;
            if i + 1 < v.len() {
                let s = (v[i + 1] - v[i]) / (xs[i + 1] - xs[i]) - d / (xs[i] - xs[i - 1]);
                convex &= s * (xs[i + 1] - xs[i - 1]) >= -tol;
            }
        }
    }
    (convex, up, down)
}

fn entry(name: &'static str, vals: &[f64]) -> SignEntry {
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let strict = vals.iter().all(|&v| v > TOL) || vals.iter().all(|&v| v < -TOL);
    SignEntry { name, min, max, strict }
}

/// Evaluates the signs of `f_t`, `-r_t`, `μ_t g_x` and `σ_t` (plus the
/// payoff's own time variation when it depends on t), predicts whether the
/// continuation band widens or narrows, then solves and checks.
pub fn trend_sign_table(problem: &StoppingProblem, settings: &SolverSettings) -> Result<SignTable> {
    if problem.is_controlled() {
        return Err(Error::Precondition("sign tables apply to uncontrolled problems".into()));
    }
    let grid = Grid::build(problem, &problem.grid)?;
    let end = problem.horizon.end();
    let ts: Vec<f64> = (0..PROBE_T).map(|k| end * k as f64 / (PROBE_T - 1) as f64).collect();
    let (lo, hi) = (grid.x[0], grid.x[grid.nx() - 1]);
    let xs: Vec<f64> = (0..PROBE_X).map(|j| lo + (hi - lo) * j as f64 / (PROBE_X - 1) as f64).collect();
    let c = &problem.coefficients;
    if !c.discount.is_state_invariant() || !time_only(&c.mu, &ts, &xs) || !time_only(&c.sigma, &ts, &xs) {
        return Err(Error::Precondition(
            "sign tables need arithmetic or geometric Brownian coefficients (r, μ/x^k, σ/x^k depending on t only)".into(),
        ));
    }
    let (f_convex, f_up, f_down) = shape(|t, x| c.flow.eval(t, x), &ts, &xs);
    let (g_convex, g_up, g_down) = shape(|t, x| problem.payoff.value(t, x), &ts, &xs);
    if !(f_convex && g_convex && (f_up && g_up || f_down && g_down)) {
        return Err(Error::Hypothesis("flow and payoff must be convex and co-monotone in x".into()));
    }
    let x_c: Vec<Option<f64>> = ts.iter().map(|&t| problem.payoff.crossing_at(t, lo, hi)).collect();
    let near_kink = |k: usize, x: f64| x_c[k].is_some_and(|c| (x - c).abs() < 1e-9 * (1.0 + c.abs()));
    let (mut ft, mut rt, mut mg, mut st, mut gt) = (vec![], vec![], vec![], vec![], vec![]);
    for (k, &t) in ts.iter().enumerate() {
        for &x in &xs {
            ft.push(c.flow.partials(t, x).dt);
            rt.push(-c.discount.partials(t, x).dt);
            st.push(c.sigma.partials(t, x).dt);
            if near_kink(k, x) {
                continue;
            }
            let g = match problem.payoff.active(t, x) {
                Branch::A => &problem.payoff.branch_a,
                Branch::B => &problem.payoff.branch_b,
            };
            mg.push(c.mu.partials(t, x).dt * g.partials(t, x).dx);
            if !problem.payoff.is_time_invariant() {
                let h = 1e-5 * (1.0 + t);
                let (a, b) = ((t - h).max(0.0), t + h);
                let (pa, pb) = (g.partials(a, x), g.partials(b, x));
                let p = g.partials(t, x);
                let s = c.sigma.eval(t, x);
                gt.push(
                    (pb.dt - pa.dt) / (b - a) + c.mu.eval(t, x) * (pb.dx - pa.dx) / (b - a)
                        + 0.5 * s * s * (pb.dxx - pa.dxx) / (b - a)
                        - c.discount.eval(t, x) * p.dt,
                );
            }
        }
    }
    let mut entries = vec![entry("f_t", &ft), entry("-r_t", &rt), entry("mu_t*g_x", &mg), entry("sigma_t", &st)];
    if !gt.is_empty() {
        entries.push(entry("payoff_t", &gt));
    }
    let zero = entries.iter().all(|e| e.nonneg(TOL) && e.nonpos(TOL));
    let strict = entries.iter().any(|e| e.strict);
    let prediction = if zero {
        Some(MonotoneClass::Flat)
    } else if entries.iter().all(|e| e.nonneg(TOL)) {
        Some(if strict { MonotoneClass::IncreasingStrict } else { MonotoneClass::Increasing })
    } else if entries.iter().all(|e| e.nonpos(TOL)) {
        Some(if strict { MonotoneClass::DecreasingStrict } else { MonotoneClass::Decreasing })
    } else {
        None
    };
    let mut table = SignTable {
        version: super::compare::REPORT_VERSION,
        problem: problem.name.clone(),
        entries,
        prediction,
        verification: None,
        agreement: None,
    };
    if let Some(class) = prediction {
        let g = if class == MonotoneClass::Flat && problem.horizon.is_perpetual() && problem.is_time_invariant() {
            Grid::stationary(problem, &problem.grid)?
        } else {
            grid
        };
        let surface = solve(problem, &g, settings)?;
        let boundary = extract_boundaries(&surface, |t| problem.payoff.crossing_at(t, lo, hi).unwrap_or(hi));
        let check = verify_boundary_monotonicity(&boundary, &MonotoneVerdict::predicted(class), &MonotonicityOptions::default());
        table.agreement = Some(check.pass);
        table.verification = Some(check);
    }
    Ok(table)
}

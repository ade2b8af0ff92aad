//! Comparative statics between two solved problems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, Expr, Var};
use crate::field::CoefficientField;
use crate::grid::{Grid, GridSpec};
use crate::problem::{Closure, Coefficients, StoppingPayoff, StoppingProblem};
use crate::solver::{extract_boundaries, solve, Region, SolverSettings, ValueSurface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareMode {
    FlowDiscount,
    Volatility,
    Drift,
    StoppingPayoff,
}

impl std::str::FromStr for CompareMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "flow_discount" | "flow" | "discount" => CompareMode::FlowDiscount,
            "volatility" | "sigma" => CompareMode::Volatility,
            "drift" | "mu" => CompareMode::Drift,
            "stopping_payoff" | "payoff" => CompareMode::StoppingPayoff,
            _ => return Err(Error::Config(format!("unknown comparison mode `{s}`"))),
        })
    }
}

/// Outcome of the hypothesis check on the solved value functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    NotRequired,
    Convex,
    Concave,
    Nondecreasing,
    Nonincreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub version: u32,
    pub mode: CompareMode,
    pub lo: String,
    pub hi: String,
    pub hypothesis_check: Hypothesis,
    /// Which solve satisfied the hypothesis (`lo` or `hi`).
    pub hypothesis_source: Option<&'static str>,
    /// True when the ordering runs `V_lo >= V_hi`, `C_hi ⊆ C_lo`.
    pub reversed: bool,
    /// Fraction of nodes where the predicted value ordering holds.
    pub value_dominance: f64,
    pub worst_violation: f64,
    pub nodes: usize,
    /// Nodes continuing in the smaller region but stopping in the larger
    /// one, with no continuation neighbour there.
    pub region_inclusion: usize,
    /// Boundaries at t = 0, `[lower, upper]`, of each problem.
    pub lo_boundary: [Option<f64>; 2],
    pub hi_boundary: [Option<f64>; 2],
    pub tol_compare: f64,
    pub pass: bool,
}

pub const REPORT_VERSION: u32 = 1;

const PROBE_T: usize = 9;
const PROBE_X: usize = 33;

fn probes(p: &StoppingProblem) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = p.numeric_bounds(&p.grid)?;
    let end = p.horizon.end();
    let mut out = Vec::with_capacity(PROBE_T * PROBE_X);
    for k in 0..PROBE_T {
        let t = end * k as f64 / (PROBE_T - 1) as f64;
        for j in 0..PROBE_X {
            out.push((t, lo + (hi - lo) * j as f64 / (PROBE_X - 1) as f64));
        }
    }
    Ok(out)
}

fn same(a: &CoefficientField, b: &CoefficientField, pts: &[(f64, f64)]) -> bool {
    a == b
        || pts.iter().all(|&(t, x)| {
            let (u, v) = (a.eval(t, x), b.eval(t, x));
            (u - v).abs() <= 1e-12 * (1.0 + u.abs())
        })
}

/// `b >= a` at every probe, to round-off.
fn below(a: &CoefficientField, b: &CoefficientField, pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    pts.iter().copied().find(|&(t, x)| {
        let (u, v) = (a.eval(t, x), b.eval(t, x));
        v < u - 1e-12 * (1.0 + u.abs())
    })
}

fn check_sets(mode: CompareMode, lo: &Coefficients, hi: &Coefficients, pts: &[(f64, f64)], label: &str) -> Result<()> {
    let differs = |name: &str| Error::Precondition(format!("{label}: `{name}` differs, which mode {mode:?} does not permit"));
    let order = |name: &str, (t, x): (f64, f64)| {
        Error::Precondition(format!("{label}: `{name}` ordering violated at t={t}, x={x}"))
    };
    let fd = mode == CompareMode::FlowDiscount;
    if !fd && !same(&lo.flow, &hi.flow, pts) {
        return Err(differs("flow"));
    }
    if !fd && !same(&lo.discount, &hi.discount, pts) {
        return Err(differs("discount"));
    }
    if mode != CompareMode::Volatility && !same(&lo.sigma, &hi.sigma, pts) {
        return Err(differs("sigma"));
    }
    if mode != CompareMode::Drift && !same(&lo.mu, &hi.mu, pts) {
        return Err(differs("mu"));
    }
    match mode {
        CompareMode::FlowDiscount => {
            if let Some(p) = below(&lo.flow, &hi.flow, pts) {
                return Err(order("flow (hi >= lo)", p));
            }
            if let Some(p) = below(&hi.discount, &lo.discount, pts) {
                return Err(order("discount (hi <= lo)", p));
            }
        }
        CompareMode::Volatility => {
            if let Some(p) = below(&lo.sigma, &hi.sigma, pts) {
                return Err(order("sigma (hi >= lo)", p));
            }
        }
        CompareMode::Drift => {
            if let Some(p) = below(&lo.mu, &hi.mu, pts) {
                return Err(order("mu (hi >= lo)", p));
            }
        }
        CompareMode::StoppingPayoff => {}
    }
    Ok(())
}

fn check_pair(lo: &StoppingProblem, hi: &StoppingProblem, mode: CompareMode) -> Result<()> {
    if lo.domain != hi.domain || lo.horizon != hi.horizon {
        return Err(Error::Precondition("problems must share domain and horizon".into()));
    }
    if lo.actions.len() != hi.actions.len() {
        return Err(Error::Precondition("problems must have the same action menu".into()));
    }
    let pts = probes(lo)?;
    if mode != CompareMode::StoppingPayoff {
        let pay = |p: &StoppingPayoff, q: &StoppingPayoff| {
            same(&p.branch_a, &q.branch_a, &pts) && same(&p.branch_b, &q.branch_b, &pts)
        };
        if !pay(&lo.payoff, &hi.payoff) {
            return Err(Error::Precondition("stopping payoffs differ; use the payoff comparison".into()));
        }
        // Edge closures stand in for the value far out; they must respect
        // the predicted ordering.
        for (a, b) in [(&lo.closure.lower, &hi.closure.lower), (&lo.closure.upper, &hi.closure.upper)] {
            match (a, b) {
                (None, None) => {}
                (Some(a), Some(b)) if mode == CompareMode::FlowDiscount && below(a, b, &pts).is_none() => {}
                (Some(a), Some(b)) if same(a, b, &pts) => {}
                _ => return Err(Error::Precondition("edge closures differ or are not ordered".into())),
            }
        }
    }
    check_sets(mode, &lo.coefficients, &hi.coefficients, &pts, "coefficients")?;
    for (a, b) in lo.actions.iter().zip(&hi.actions) {
        check_sets(mode, &a.coefficients, &b.coefficients, &pts, &format!("action `{}`", a.name))?;
    }
    Ok(())
}

/// Convexity / monotonicity of V in x at every node, to a slope tolerance.
fn shape(s: &ValueSurface, mode: CompareMode) -> Option<Hypothesis> {
    let tol = 1e-7 * s.scale;
    let x = &s.grid.x;
    let (mut convex, mut concave, mut up, mut down) = (true, true, true, true);
    for n in 0..s.nt() {
        let v = s.layer(n);
        for i in 1..v.len() {
            let d = v[i] - v[i - 1];
            up &= d >= -tol;
            down &= d <= tol;
            if i + 1 < v.len() {
                let (sl, sr) = (d / (x[i] - x[i - 1]), (v[i + 1] - v[i]) / (x[i + 1] - x[i]));
                let w = 0.5 * (x[i + 1] - x[i - 1]);
                convex &= (sr - sl) * w >= -tol;
                concave &= (sr - sl) * w <= tol;
            }
        }
    }
    match mode {
        CompareMode::Volatility if convex => Some(Hypothesis::Convex),
        CompareMode::Volatility if concave => Some(Hypothesis::Concave),
        CompareMode::Drift if up => Some(Hypothesis::Nondecreasing),
        CompareMode::Drift if down => Some(Hypothesis::Nonincreasing),
        _ => None,
    }
}

fn solve_pair(lo: &StoppingProblem, hi: &StoppingProblem, grid: &Grid, settings: &SolverSettings) -> Result<(ValueSurface, ValueSurface)> {
    let (a, b) = rayon::join(|| solve(lo, grid, settings), || solve(hi, grid, settings));
    Ok((a?, b?))
}

fn edge_at_zero(p: &StoppingProblem, s: &ValueSurface) -> [Option<f64>; 2] {
    let lo = s.grid.x[0];
    let hi = s.grid.x[s.nx() - 1];
    let b = extract_boundaries(s, |t| p.payoff.crossing_at(t, lo, hi).unwrap_or(hi));
    [b.lower[0], b.upper[0]]
}

/// Solves both problems on one grid (built from `lo`) and checks the value
/// ordering and continuation-region inclusion the mode predicts.
///
/// Volatility and drift verdicts are only emitted after the convexity or
/// x-monotonicity of one solved value function is confirmed.
pub fn compare_problems(
    lo: &StoppingProblem,
    hi: &StoppingProblem,
    mode: CompareMode,
    grid: Option<&GridSpec>,
    settings: &SolverSettings,
) -> Result<ComparisonReport> {
    if mode == CompareMode::StoppingPayoff {
        let g = smooth_payoff(hi)?;
        return shifted_payoff_compare(lo, &g, grid, settings);
    }
    check_pair(lo, hi, mode)?;
    let spec = grid.unwrap_or(&lo.grid);
    let g = if lo.is_time_invariant() && hi.is_time_invariant() && lo.horizon.is_perpetual() {
        Grid::stationary(lo, spec)?
    } else {
        Grid::build(lo, spec)?
    };
    let (s_lo, s_hi) = solve_pair(lo, hi, &g, settings)?;
    let (hypothesis, source) = match mode {
        CompareMode::FlowDiscount => (Hypothesis::NotRequired, None),
        _ => match (shape(&s_lo, mode), shape(&s_hi, mode)) {
            (Some(h), _) => (h, Some("lo")),
            (None, Some(h)) => (h, Some("hi")),
            (None, None) => {
                let what = if mode == CompareMode::Volatility {
                    "neither value function is convex or concave in x; the volatility comparison does not apply"
                } else {
                    "neither value function is monotone in x; the drift comparison does not apply"
                };
                return Err(Error::Hypothesis(what.into()));
            }
        },
    };
    let reversed = matches!(hypothesis, Hypothesis::Concave | Hypothesis::Nonincreasing);
    Ok(assemble(lo, hi, mode, hypothesis, source, reversed, &s_lo, &s_hi))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    lo: &StoppingProblem,
    hi: &StoppingProblem,
    mode: CompareMode,
    hypothesis: Hypothesis,
    source: Option<&'static str>,
    reversed: bool,
    s_lo: &ValueSurface,
    s_hi: &ValueSurface,
) -> ComparisonReport {
    let (big, small) = if reversed { (s_lo, s_hi) } else { (s_hi, s_lo) };
    let scale = s_lo.scale.max(s_hi.scale);
    let tol = 1e-6 * scale;
    let (nt, nx) = (big.nt(), big.nx());
    let mut ok = 0usize;
    let mut worst = 0.0f64;
    let mut inclusion = 0usize;
    for n in 0..nt {
        let (vb, vs) = (big.layer(n), small.layer(n));
        let (rb, rs) = (big.region_layer(n), small.region_layer(n));
        for i in 0..nx {
            let d = vs[i] - vb[i];
            if d <= tol {
                ok += 1;
            }
            worst = worst.max(d);
            if rs[i] == Region::Continue && rb[i] == Region::Stop {
                let near = (i > 0 && rb[i - 1] == Region::Continue) || (i + 1 < nx && rb[i + 1] == Region::Continue);
                if !near {
                    inclusion += 1;
                }
            }
        }
    }
    let nodes = nt * nx;
    ComparisonReport {
        version: REPORT_VERSION,
        mode,
        lo: lo.name.clone(),
        hi: hi.name.clone(),
        hypothesis_check: hypothesis,
        hypothesis_source: source,
        reversed,
        value_dominance: ok as f64 / nodes as f64,
        worst_violation: worst,
        nodes,
        region_inclusion: inclusion,
        lo_boundary: edge_at_zero(lo, s_lo),
        hi_boundary: edge_at_zero(hi, s_hi),
        tol_compare: tol,
        pass: worst <= tol && inclusion == 0,
    }
}

/// The payoff as one smooth field; fails when the two branches differ.
pub fn smooth_payoff(p: &StoppingProblem) -> Result<CoefficientField> {
    let pay = &p.payoff;
    if pay.branch_a == pay.branch_b {
        return Ok(pay.branch_a.clone());
    }
    // Equal as functions even if written differently.
    let pts = probes(p)?;
    if same(&pay.branch_a, &pay.branch_b, &pts) {
        return Ok(pay.branch_a.clone());
    }
    Err(Error::Precondition(format!(
        "payoff of `{}` has a kink; the payoff reduction needs a smooth payoff",
        p.name
    )))
}

fn derivative(e: &Expr, v: Var) -> Result<Expr> {
    e.derivative(v)
        .ok_or_else(|| Error::Precondition(format!("payoff `{e}` is not differentiable; the payoff reduction needs g_x, g_xx, g_t")))
}

/// The zero-payoff problem solved by `V - g`: flow `f + g_t + μ g_x +
/// σ²/2 g_xx - r g`, edge closures shifted by `-g`.
pub fn reduce_payoff(p: &StoppingProblem, g: &CoefficientField) -> Result<StoppingProblem> {
    let ge = g
        .to_expr()
        .ok_or_else(|| Error::Precondition("payoff reduction needs an expression payoff".into()))?;
    let gx = derivative(&ge, Var::X)?;
    let gxx = derivative(&gx, Var::X)?;
    let gt = derivative(&ge, Var::T)?;
    let need = |f: &CoefficientField, name: &str| {
        f.to_expr().ok_or_else(|| Error::Precondition(format!("payoff reduction needs `{name}` as an expression")))
    };
    let transform = |c: &Coefficients| -> Result<Coefficients> {
        let (mu, sigma, flow, r) = (need(&c.mu, "mu")?, need(&c.sigma, "sigma")?, need(&c.flow, "flow")?, need(&c.discount, "discount")?);
        let gen = expr::add(
            expr::add(expr::mul(mu, gx.clone()), expr::mul(expr::mul(Expr::num(0.5), expr::mul(sigma.clone(), sigma)), gxx.clone())),
            expr::sub(gt.clone(), expr::mul(r, ge.clone())),
        );
        Ok(Coefficients { flow: CoefficientField::from_expr(expr::add(flow, gen)), ..c.clone() })
    };
    let mut w = p.clone();
    w.coefficients = transform(&p.coefficients)?;
    for a in &mut w.actions {
        a.coefficients = transform(&a.coefficients)?;
    }
    let (lo, hi) = p.numeric_bounds(&p.grid)?;
    let x_c = p.payoff.crossing_at(0.0, lo, hi).unwrap_or(hi);
    w.payoff = StoppingPayoff::new(0.0.into(), 0.0.into()).with_crossing(x_c);
    let shift = |c: &Option<CoefficientField>| -> Result<Option<CoefficientField>> {
        match c {
            None => Ok(None),
            Some(f) => f
                .to_expr()
                .map(|e| Some(CoefficientField::from_expr(expr::sub(e, ge.clone()))))
                .ok_or_else(|| Error::Precondition("closure must be an expression".into())),
        }
    };
    w.closure = Closure { lower: shift(&p.closure.lower)?, upper: shift(&p.closure.upper)? };
    w.name = format!("{}-g", p.name);
    Ok(w)
}

/// Compares `problem` with the same problem under payoff `g_alternate`,
/// through their zero-payoff reductions. The problem whose reduced flow is
/// larger is `hi`; the report's `hi` names it.
pub fn shifted_payoff_compare(
    problem: &StoppingProblem,
    g_alternate: &CoefficientField,
    grid: Option<&GridSpec>,
    settings: &SolverSettings,
) -> Result<ComparisonReport> {
    let g0 = smooth_payoff(problem)?;
    let mut alt = problem.clone();
    alt.payoff = StoppingPayoff { branch_a: g_alternate.clone(), branch_b: g_alternate.clone(), crossing: problem.payoff.crossing.clone() };
    alt.name = format!("{}[g={}]", problem.name, g_alternate.describe());
    let w0 = reduce_payoff(problem, &g0)?;
    let w1 = reduce_payoff(&alt, g_alternate)?;
    let pts = probes(problem)?;
    let (lo, hi) = if below(&w0.coefficients.flow, &w1.coefficients.flow, &pts).is_none() {
        (w0, w1)
    } else if below(&w1.coefficients.flow, &w0.coefficients.flow, &pts).is_none() {
        (w1, w0)
    } else {
        return Err(Error::Precondition(
            "reduced flows are not ordered; the payoff comparison does not apply".into(),
        ));
    };
    let mut rep = compare_problems(&lo, &hi, CompareMode::FlowDiscount, grid, settings)?;
    rep.mode = CompareMode::StoppingPayoff;
    Ok(rep)
}

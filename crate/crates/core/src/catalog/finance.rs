//! Geometric Brownian motion models: American put, irreversible investment
//! and endogenous default.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{self, Expr, Var};
use crate::field::CoefficientField;
use crate::grid::GridSpec;
use crate::problem::{Closure, Coefficients, Domain, Horizon, StoppingPayoff, StoppingProblem};

/// Closed-form perpetual benchmarks for constant coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Oracle {
    Put { strike: f64, rate: f64, vol: f64 },
    Investment { mu: f64, sigma: f64, rate: f64, cost: f64 },
    Leland { delta: f64, coupon: f64, mu: f64, sigma: f64, rate: f64, penalty: f64 },
}

/// Roots of `σ²/2 β(β-1) + μ β - r = 0` as `(β+, β-)`.
fn char_roots(mu: f64, sigma: f64, r: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let m = mu - 0.5 * s2;
    let d = (m * m + 2.0 * r * s2).sqrt();
    ((-m + d) / s2, (-m - d) / s2)
}

impl Oracle {
    /// Decay exponent of the homogeneous solution that governs the boundary.
    pub fn exponent(&self) -> f64 {
        match *self {
            Oracle::Put { rate, vol, .. } => 2.0 * rate / (vol * vol),
            Oracle::Investment { mu, sigma, rate, .. } => char_roots(mu, sigma, rate).0,
            Oracle::Leland { mu, sigma, rate, .. } => -char_roots(mu, sigma, rate).1,
        }
    }

    pub fn threshold(&self) -> f64 {
        let k = self.exponent();
        match *self {
            Oracle::Put { strike, .. } => strike * k / (1.0 + k),
            Oracle::Investment { cost, .. } => cost / (1.0 - 1.0 / k),
            Oracle::Leland { delta, coupon, mu, rate, penalty, .. } => {
                k / (k + 1.0) * (1.0 - mu / rate) * (coupon + rate * penalty) / delta
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let k = self.exponent();
        let b = self.threshold();
        match *self {
            Oracle::Put { strike, .. } => {
                if x <= b {
                    strike - x
                } else {
                    (strike - b) * (x / b).powf(-k)
                }
            }
            Oracle::Investment { cost, .. } => {
                if x >= b {
                    x - cost
                } else {
                    (b - cost) * (x / b).powf(k)
                }
            }
            Oracle::Leland { delta, coupon, mu, rate, penalty, .. } => {
                if x <= b {
                    penalty
                } else {
                    let going = |y: f64| delta * y / (rate - mu) - coupon / rate;
                    going(x) + (penalty - going(b)) * (x / b).powf(-k)
                }
            }
        }
    }
}

/// The default-threshold exponent exactly as printed in the source text of
/// the Leland example; its square-root argument omits the square, which
/// makes it undefined for the reference parameters. Kept for reporting.
pub fn leland_kappa_as_printed(mu: f64, sigma: f64, r: f64) -> f64 {
    let s2 = sigma * sigma;
    let m = mu - 0.5 * s2;
    (m + (m + 2.0 * r * s2).sqrt()) / s2
}

fn time_expr(f: &CoefficientField, name: &str) -> Result<Expr> {
    if !f.is_state_invariant() {
        return Err(Error::Model(format!("{name} may depend on t only")));
    }
    f.to_expr()
        .ok_or_else(|| Error::Model(format!("{name} must be a constant or an expression")))
}

fn times_x(e: Expr) -> CoefficientField {
    CoefficientField::from_expr(expr::mul(e, Expr::var(Var::X)))
}

fn probe_times(h: &Horizon) -> Vec<f64> {
    let end = h.end();
    (0..=64).map(|k| end * k as f64 / 64.0).collect()
}

#[derive(Debug, Clone)]
pub struct PutParams {
    pub strike: f64,
    pub rate: CoefficientField,
    pub vol: CoefficientField,
    pub horizon: Horizon,
    pub grid: GridSpec,
}

impl Default for PutParams {
    fn default() -> Self {
        Self {
            strike: 1.0,
            rate: 0.05.into(),
            vol: 0.3.into(),
            horizon: Horizon::Perpetual { window: 1.0 },
            grid: GridSpec::log(0, 1600, 0.01, 100.0),
        }
    }
}

/// Risk-neutral put: drift `r(t) x`, volatility `σ(t) x`, payoff `(K - x)⁺`.
pub fn make_put(p: &PutParams) -> Result<(StoppingProblem, Option<Oracle>)> {
    if !(p.strike > 0.0) {
        return Err(Error::Model(format!("strike must be positive, got {}", p.strike)));
    }
    let r = time_expr(&p.rate, "rate")?;
    let s = time_expr(&p.vol, "vol")?;
    for t in probe_times(&p.horizon) {
        let rv = p.rate.eval(t, 0.0);
        if !(rv > 0.0) {
            return Err(Error::Model(format!("rate must be positive, got {rv} at t={t}")));
        }
    }
    let x = Expr::var(Var::X);
    let problem = StoppingProblem {
        name: "put".into(),
        domain: Domain::new(0.0, f64::INFINITY),
        horizon: p.horizon,
        coefficients: Coefficients {
            mu: times_x(r.clone()),
            sigma: times_x(s),
            flow: 0.0.into(),
            discount: CoefficientField::from_expr(r),
        },
        payoff: StoppingPayoff::new(
            CoefficientField::from_expr(expr::sub(Expr::num(p.strike), x)),
            0.0.into(),
        )
        .with_crossing(p.strike),
        actions: Vec::new(),
        grid: p.grid.clone(),
        x0: Some(p.strike),
        closure: Closure::default(),
    };
    problem.validate()?;
    let oracle = match (p.rate.as_constant(), p.vol.as_constant()) {
        (Some(rate), Some(vol)) => Some(Oracle::Put { strike: p.strike, rate, vol }),
        _ => None,
    };
    Ok((problem, oracle))
}

#[derive(Debug, Clone)]
pub struct InvestmentParams {
    pub mu: CoefficientField,
    pub sigma: CoefficientField,
    pub rate: CoefficientField,
    pub cost: CoefficientField,
    pub horizon: Horizon,
    pub grid: GridSpec,
}

impl Default for InvestmentParams {
    fn default() -> Self {
        Self {
            mu: 0.03.into(),
            sigma: 0.2.into(),
            rate: 0.06.into(),
            cost: 1.0.into(),
            horizon: Horizon::Perpetual { window: 1.0 },
            grid: GridSpec::log(0, 1600, 0.01, 100.0),
        }
    }
}

/// Payoff `(x - I(t))⁺`, no running flow, drift `μ(t) x`, volatility `σ(t) x`.
pub fn make_investment(p: &InvestmentParams) -> Result<(StoppingProblem, Option<Oracle>)> {
    let mu = time_expr(&p.mu, "mu")?;
    let s = time_expr(&p.sigma, "sigma")?;
    let cost = time_expr(&p.cost, "cost")?;
    time_expr(&p.rate, "rate")?;
    let gap = probe_times(&p.horizon)
        .into_iter()
        .map(|t| p.rate.eval(t, 0.0) - p.mu.eval(t, 0.0))
        .fold(f64::INFINITY, f64::min);
    if !(gap > 0.0) {
        return Err(Error::Model(format!(
            "needs drift below the discount rate by a positive margin; min r - mu = {gap}"
        )));
    }
    let problem = StoppingProblem {
        name: "investment".into(),
        domain: Domain::new(0.0, f64::INFINITY),
        horizon: p.horizon,
        coefficients: Coefficients {
            mu: times_x(mu),
            sigma: times_x(s),
            flow: 0.0.into(),
            discount: p.rate.clone(),
        },
        payoff: StoppingPayoff {
            branch_a: CoefficientField::from_expr(expr::sub(Expr::var(Var::X), cost.clone())),
            branch_b: 0.0.into(),
            crossing: Some(CoefficientField::from_expr(cost)),
        },
        actions: Vec::new(),
        grid: p.grid.clone(),
        x0: Some(1.0),
        closure: Closure::default(),
    };
    problem.validate()?;
    let oracle = match (p.mu.as_constant(), p.sigma.as_constant(), p.rate.as_constant(), p.cost.as_constant()) {
        (Some(mu), Some(sigma), Some(rate), Some(cost)) => Some(Oracle::Investment { mu, sigma, rate, cost }),
        _ => None,
    };
    Ok((problem, oracle))
}

/// Equity under endogenous default: cash flow `δ x - c`, default payoff
/// `G <= 0`.
#[derive(Debug, Clone)]
pub struct LelandParams {
    pub delta: f64,
    pub coupon: f64,
    pub mu: f64,
    pub sigma: f64,
    pub rate: f64,
    pub penalty: f64,
    pub grid: GridSpec,
}

impl Default for LelandParams {
    fn default() -> Self {
        Self {
            delta: 0.06,
            coupon: 0.03,
            mu: 0.01,
            sigma: 0.25,
            rate: 0.05,
            penalty: 0.0,
            grid: GridSpec::log(0, 2000, 1e-3, 1e4),
        }
    }
}

fn leland_problem(p: &LelandParams, shifted: bool) -> Result<StoppingProblem> {
    if !(p.delta >= 0.0) {
        return Err(Error::Model("cash flow net of coupon must be nondecreasing in x (delta >= 0)".into()));
    }
    if !(p.penalty <= 0.0) {
        return Err(Error::Model(format!("default payoff must be <= 0, got {}", p.penalty)));
    }
    if !(p.mu < p.rate && p.rate > 0.0 && p.sigma > 0.0) {
        return Err(Error::Model("needs 0 < sigma and mu < r".into()));
    }
    let g = if shifted { 0.0 } else { p.penalty };
    let shift = p.penalty - g;
    let flow = format!("{}*x - {}", p.delta, p.coupon + p.rate * shift);
    // Far above default the equity is worth the perpetual cash flow; that
    // closes the truncated grid instead of the payoff.
    let going = format!(
        "{}*x - {}",
        p.delta / (p.rate - p.mu),
        p.coupon / p.rate + shift
    );
    let problem = StoppingProblem {
        name: "leland".into(),
        domain: Domain::new(0.0, f64::INFINITY),
        horizon: Horizon::Perpetual { window: 1.0 },
        coefficients: Coefficients {
            mu: CoefficientField::parse(&format!("{}*x", p.mu))?,
            sigma: CoefficientField::parse(&format!("{}*x", p.sigma))?,
            flow: CoefficientField::parse(&flow)?,
            discount: p.rate.into(),
        },
        payoff: StoppingPayoff::new(g.into(), g.into())
            .with_crossing(p.grid.x_max.unwrap_or(f64::MAX)),
        actions: Vec::new(),
        grid: p.grid.clone(),
        x0: Some(1.0),
        closure: Closure {
            lower: None,
            upper: Some(CoefficientField::parse(&going)?),
        },
    };
    problem.validate()?;
    Ok(problem)
}

/// Problem for `V - G`, whose default payoff is zero. Returns the problem,
/// the shift `G` to add back, and the closed form.
pub fn make_leland(p: &LelandParams) -> Result<(StoppingProblem, f64, Oracle)> {
    let problem = leland_problem(p, true)?;
    Ok((problem, p.penalty, leland_oracle(p)))
}

/// The same model without the shift (default payoff `G`).
pub fn make_leland_direct(p: &LelandParams) -> Result<StoppingProblem> {
    leland_problem(p, false)
}

fn leland_oracle(p: &LelandParams) -> Oracle {
    Oracle::Leland {
        delta: p.delta,
        coupon: p.coupon,
        mu: p.mu,
        sigma: p.sigma,
        rate: p.rate,
        penalty: p.penalty,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_thresholds() {
        let put = Oracle::Put { strike: 1.0, rate: 0.05, vol: 0.3 };
        assert!((put.threshold() - 1.0 / 1.9).abs() < 1e-12);
        let inv = Oracle::Investment { mu: 0.03, sigma: 0.2, rate: 0.06, cost: 1.0 };
        assert!((inv.threshold() - 3.0).abs() < 1e-12);
        let golden = Oracle::Investment { mu: 0.0, sigma: 0.2, rate: 0.02, cost: 1.0 };
        let phi = 0.5 * (1.0 + 5f64.sqrt());
        assert!((golden.threshold() - phi * phi).abs() < 1e-12);
    }

    #[test]
    fn leland_value_pastes_smoothly() {
        let o = leland_oracle(&LelandParams { penalty: -0.1, ..Default::default() });
        let b = o.threshold();
        assert!((o.value(b) + 0.1).abs() < 1e-12);
        let h = 1e-6;
        let slope = (o.value(b + h) - o.value(b)) / h;
        assert!(slope.abs() < 1e-5, "{slope}");
    }

    #[test]
    fn printed_leland_exponent_is_undefined_for_reference_instance() {
        assert!(leland_kappa_as_printed(0.01, 0.25, 0.05).is_nan());
    }

    #[test]
    fn refusals() {
        assert!(make_put(&PutParams { strike: 0.0, ..Default::default() }).is_err());
        assert!(make_investment(&InvestmentParams { mu: 0.07.into(), ..Default::default() }).is_err());
        assert!(make_leland(&LelandParams { penalty: 0.2, ..Default::default() }).is_err());
    }
}

//! Poisson deadlines folded into the discount rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::problem::{Coefficients, StoppingProblem};
use crate::solver::ValueSurface;

/// Whether the deadline payoff beats continuing (`γ >= V`, good news) or
/// not (`γ <= V`, bad news).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum News {
    Good,
    Bad,
    Unknown,
}

/// A deadline arriving at rate `α(t, x)` that pays `γ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeadlineSpec {
    pub alpha: CoefficientField,
    pub gamma: CoefficientField,
    pub news: News,
}

/// Direction in which the continuation band moves over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandTrend {
    Narrowing,
    Widening,
}

/// Discount `r + α`, flow `f + α γ`. The base discount must be a constant.
pub fn apply_deadline(base: &StoppingProblem, spec: &DeadlineSpec) -> Result<StoppingProblem> {
    if base.coefficients.discount.as_constant().is_none() {
        return Err(Error::Model("deadline transform needs a constant base discount rate".into()));
    }
    check_rate(base, &spec.alpha)?;
    let transform = |c: &Coefficients| -> Result<Coefficients> {
        let discount = c.discount.plus(&spec.alpha);
        let flow = spec.alpha.times(&spec.gamma).and_then(|ag| c.flow.plus(&ag));
        match (discount, flow) {
            (Some(discount), Some(flow)) => Ok(Coefficients {
                mu: c.mu.clone(),
                sigma: c.sigma.clone(),
                flow,
                discount,
            }),
            _ => Err(Error::Model("deadline fields must be constants or expressions".into())),
        }
    };
    let mut p = base.clone();
    p.coefficients = transform(&base.coefficients)?;
    for (a, b) in p.actions.iter_mut().zip(&base.actions) {
        a.coefficients = transform(&b.coefficients)?;
    }
    p.name = format!("{}+deadline", base.name);
    p.validate()?;
    Ok(p)
}

fn check_rate(base: &StoppingProblem, alpha: &CoefficientField) -> Result<()> {
    let (lo, hi) = base.numeric_bounds(&base.grid)?;
    let end = base.horizon.end();
    for k in 0..=16 {
        let t = end * k as f64 / 16.0;
        for j in 0..=32 {
            let x = lo + (hi - lo) * j as f64 / 32.0;
            let a = alpha.eval_checked(t, x)?;
            if a < 0.0 {
                return Err(Error::Invariant {
                    field: "deadline.alpha".into(),
                    reason: format!("rate must be nonnegative, got {a}"),
                    t,
                    x,
                });
            }
        }
    }
    Ok(())
}

/// Post-hoc comparison of `γ` against the solved `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewsCheck {
    pub declared: News,
    pub observed: News,
    /// Extremes of `γ - V` over the surface.
    pub min_excess: f64,
    pub max_excess: f64,
    pub consistent: bool,
}

pub fn check_news(spec: &DeadlineSpec, surface: &ValueSurface, tol: f64) -> NewsCheck {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let nx = surface.nx();
    for n in 0..surface.nt() {
        let t = surface.grid.t[n];
        for (i, &v) in surface.layer(n).iter().enumerate().take(nx) {
            let e = spec.gamma.eval(t, surface.grid.x[i]) - v;
            lo = lo.min(e);
            hi = hi.max(e);
        }
    }
    let observed = if lo >= -tol {
        News::Good
    } else if hi <= tol {
        News::Bad
    } else {
        News::Unknown
    };
    NewsCheck {
        declared: spec.news,
        observed,
        min_excess: lo,
        max_excess: hi,
        consistent: spec.news == News::Unknown || spec.news == observed,
    }
}

/// Band direction implied by the sign of `α_t (γ - V)`: the deadline acts
/// like a flow `α (γ - V)` relative to the base problem. `None` when `α`
/// is not monotone in t or the news are unknown.
pub fn predicted_trend(spec: &DeadlineSpec, news: News, x: &[f64], t_end: f64) -> Option<BandTrend> {
    let (mut up, mut down) = (false, false);
    for k in 0..=32 {
        let t = t_end * k as f64 / 32.0;
        for &xi in x {
            let d = spec.alpha.partials(t, xi).dt;
            up |= d > 0.0;
            down |= d < 0.0;
        }
    }
    let sign = match (up, down) {
        (true, false) => 1.0,
        (false, true) => -1.0,
        _ => return None,
    };
    let news = match news {
        News::Good => 1.0,
        News::Bad => -1.0,
        News::Unknown => return None,
    };
    Some(if sign * news < 0.0 { BandTrend::Narrowing } else { BandTrend::Widening })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::learning::{make_wald, WaldParams};

    #[test]
    fn constant_rate_without_payoff_is_a_discount_shift() {
        let (base, _) = make_wald(&WaldParams::default()).unwrap();
        let spec = DeadlineSpec { alpha: 0.3.into(), gamma: 0.0.into(), news: News::Unknown };
        let p = apply_deadline(&base, &spec).unwrap();
        let mut direct = base.clone();
        direct.coefficients.discount = (0.1 + 0.3).into();
        assert_eq!(p.coefficients, direct.coefficients);
    }

    #[test]
    fn zero_rate_is_identity() {
        let (base, _) = make_wald(&WaldParams::default()).unwrap();
        let spec = DeadlineSpec { alpha: 0.0.into(), gamma: CoefficientField::parse("x").unwrap(), news: News::Unknown };
        let p = apply_deadline(&base, &spec).unwrap();
        assert_eq!(p.coefficients, base.coefficients);
    }

    #[test]
    fn variable_discount_is_refused() {
        let (mut base, _) = make_wald(&WaldParams::default()).unwrap();
        base.coefficients.discount = CoefficientField::parse("0.1 + 0.01*t").unwrap();
        let spec = DeadlineSpec { alpha: 0.3.into(), gamma: 0.0.into(), news: News::Unknown };
        assert!(matches!(apply_deadline(&base, &spec), Err(Error::Model(_))));
    }

    #[test]
    fn negative_rate_is_refused() {
        let (base, _) = make_wald(&WaldParams::default()).unwrap();
        let spec = DeadlineSpec {
            alpha: CoefficientField::parse("0.1 - t").unwrap(),
            gamma: 0.0.into(),
            news: News::Unknown,
        };
        assert!(apply_deadline(&base, &spec).is_err());
    }
}

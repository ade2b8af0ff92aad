//! Problem description: domain, horizon, coefficient fields and payoffs.

use crate::error::{Error, Result};
use crate::field::{CoefficientField, Partials};
use crate::grid::{GridSpec, Spacing};

/// Open state interval; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lower: f64,
    pub upper: f64,
}

impl Domain {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn contains_closure(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    /// Stopping must happen by `T`.
    Finite(f64),
    /// No deadline. Coefficients are honoured on `[0, window]` and held at
    /// their `window` values afterwards.
    Perpetual { window: f64 },
}

impl Horizon {
    pub fn end(&self) -> f64 {
        match *self {
            Horizon::Finite(t) => t,
            Horizon::Perpetual { window } => window,
        }
    }

    pub fn is_perpetual(&self) -> bool {
        matches!(self, Horizon::Perpetual { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub mu: CoefficientField,
    pub sigma: CoefficientField,
    pub flow: CoefficientField,
    pub discount: CoefficientField,
}

impl Coefficients {
    pub fn is_time_invariant(&self) -> bool {
        [&self.mu, &self.sigma, &self.flow, &self.discount]
            .iter()
            .all(|f| f.is_time_invariant())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingPayoff {
    pub branch_a: CoefficientField,
    pub branch_b: CoefficientField,
    /// Crossing point `x^c`, possibly as a curve in `t`.
    pub crossing: Option<CoefficientField>,
}

impl StoppingPayoff {
    pub fn new(branch_a: CoefficientField, branch_b: CoefficientField) -> Self {
        Self {
            branch_a,
            branch_b,
            crossing: None,
        }
    }

    pub fn with_crossing(mut self, x_c: f64) -> Self {
        self.crossing = Some(CoefficientField::constant(x_c));
        self
    }

    #[inline]
    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.branch_a.eval(t, x).max(self.branch_b.eval(t, x))
    }

    pub fn active(&self, t: f64, x: f64) -> Branch {
        if self.branch_a.eval(t, x) >= self.branch_b.eval(t, x) {
            Branch::A
        } else {
            Branch::B
        }
    }

    pub fn is_time_invariant(&self) -> bool {
        self.branch_a.is_time_invariant() && self.branch_b.is_time_invariant()
    }

    /// Locates `x^c` at time `t`: the declared hint, or bisection on
    /// `branch_a - branch_b` over `[lo, hi]` to `1e-10 * (hi - lo)`.
    pub fn crossing_at(&self, t: f64, lo: f64, hi: f64) -> Option<f64> {
        if let Some(c) = &self.crossing {
            return Some(c.eval(t, 0.0));
        }
        let d = |x: f64| self.branch_a.eval(t, x) - self.branch_b.eval(t, x);
        // Coarse scan for the first sign change, then bisect.
        let n = 512;
        let mut prev_x = lo;
        let mut prev = d(lo);
        for k in 1..=n {
            let x = lo + (hi - lo) * k as f64 / n as f64;
            let v = d(x);
            if prev == 0.0 {
                return Some(prev_x);
            }
            if prev.signum() != v.signum() {
                let (mut a, mut b) = (prev_x, x);
                let tol = 1e-10 * (hi - lo);
                while b - a > tol {
                    let m = 0.5 * (a + b);
                    if d(m).signum() == prev.signum() {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                return Some(0.5 * (a + b));
            }
            prev_x = x;
            prev = v;
        }
        None
    }

    /// Partials of the active branch. Fails at the kink, where the payoff
    /// is not differentiable.
    pub fn partials(&self, t: f64, x: f64, x_c: Option<f64>, tol: f64) -> Result<Partials> {
        if let Some(c) = x_c {
            if (x - c).abs() <= tol {
                return Err(Error::Kink { t, x });
            }
        }
        Ok(match self.active(t, x) {
            Branch::A => self.branch_a.partials(t, x),
            Branch::B => self.branch_b.partials(t, x),
        })
    }
}

/// Values imposed at the outermost grid nodes. `None` keeps the default
/// closure `v = g`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Closure {
    pub lower: Option<CoefficientField>,
    pub upper: Option<CoefficientField>,
}

impl Closure {
    pub fn is_default(&self) -> bool {
        self.lower.is_none() && self.upper.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub name: String,
    pub coefficients: Coefficients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingProblem {
    pub name: String,
    pub domain: Domain,
    pub horizon: Horizon,
    pub coefficients: Coefficients,
    pub payoff: StoppingPayoff,
    pub actions: Vec<Action>,
    /// Default discretisation.
    pub grid: GridSpec,
    /// Reference initial state, used for quantile truncation of unbounded
    /// domains and as the default simulation start.
    pub x0: Option<f64>,
    pub closure: Closure,
}

impl StoppingProblem {
    pub fn is_time_invariant(&self) -> bool {
        self.coefficients.is_time_invariant()
            && self.payoff.is_time_invariant()
            && self.actions.iter().all(|a| a.coefficients.is_time_invariant())
    }

    pub fn is_controlled(&self) -> bool {
        !self.actions.is_empty()
    }

    /// Numeric state range actually gridded: explicit truncation, a margin
    /// inside a bounded domain, or quantile truncation around `x0`.
    pub fn numeric_bounds(&self, spec: &GridSpec) -> Result<(f64, f64)> {
        let d = self.domain;
        let lo = match spec.x_min {
            Some(v) => v,
            None if d.lower.is_finite() && d.upper.is_finite() => {
                d.lower + spec.margin.unwrap_or(1e-4 * (d.upper - d.lower))
            }
            None => self.quantile_bounds()?.0.max(d.lower),
        };
        let hi = match spec.x_max {
            Some(v) => v,
            None if d.lower.is_finite() && d.upper.is_finite() => {
                d.upper - spec.margin.unwrap_or(1e-4 * (d.upper - d.lower))
            }
            None => self.quantile_bounds()?.1.min(d.upper),
        };
        if !(lo < hi) || lo < d.lower || hi > d.upper {
            return Err(Error::Config(format!(
                "numeric range [{lo}, {hi}] is not inside the domain ({}, {})",
                d.lower, d.upper
            )));
        }
        Ok((lo, hi))
    }

    /// Six standard deviations of the state (of its logarithm when the
    /// domain is the positive half-line) around `x0` over the horizon.
    pub fn quantile_bounds(&self) -> Result<(f64, f64)> {
        let x0 = self.x0.ok_or_else(|| {
            Error::Config("unbounded domain needs grid x_min/x_max or an initial state x0".into())
        })?;
        let horizon = self.horizon.end().max(1.0);
        let ts: Vec<f64> = (0..=16).map(|k| horizon * k as f64 / 16.0).collect();
        let sig = ts
            .iter()
            .map(|&t| self.coefficients.sigma.eval(t, x0).abs())
            .fold(0.0, f64::max);
        if self.domain.lower == 0.0 {
            let s = 6.0 * sig / x0 * horizon.sqrt();
            Ok((x0 * (-s).exp(), x0 * s.exp()))
        } else {
            let s = 6.0 * sig * horizon.sqrt();
            Ok((x0 - s, x0 + s))
        }
    }

    /// Crossing of the payoff branches at time `t` within the numeric range.
    pub fn crossing_at(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.numeric_bounds(&self.grid)?;
        self.payoff.crossing_at(t, lo, hi).ok_or_else(|| {
            Error::Config("payoff branches never cross; supply payoff.x_c".into())
        })
    }

    pub fn check_point(&self, t: f64, x: f64) -> Result<()> {
        if !self.domain.contains_closure(x) || t < 0.0 {
            return Err(Error::Domain {
                t,
                x,
                lower: self.domain.lower,
                upper: self.domain.upper,
            });
        }
        Ok(())
    }

    /// Evaluates a named coefficient with domain and finiteness checks.
    pub fn eval_field(&self, field: &CoefficientField, t: f64, x: f64) -> Result<f64> {
        self.check_point(t, x)?;
        field.eval_checked(t, x)
    }

    /// Eager validation by sampling all fields on a coarse probe grid.
    pub fn validate(&self) -> Result<()> {
        let d = self.domain;
        if !(d.lower < d.upper) {
            return Err(Error::Invariant {
                field: "domain".into(),
                reason: format!("lower {} must be below upper {}", d.lower, d.upper),
                t: 0.0,
                x: d.lower,
            });
        }
        let end = self.horizon.end();
        if !(end > 0.0 && end.is_finite()) {
            return Err(Error::Invariant {
                field: "horizon".into(),
                reason: format!("horizon must be positive and finite, got {end}"),
                t: end,
                x: f64::NAN,
            });
        }
        if self.grid.nx < 3 || (self.grid.nt < 1 && !self.horizon.is_perpetual()) {
            return Err(Error::Invariant {
                field: "grid".into(),
                reason: "need at least 3 x-nodes and 2 t-nodes".into(),
                t: 0.0,
                x: 0.0,
            });
        }
        if let Spacing::Custom(nodes) = &self.grid.spacing {
            if nodes.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Config("custom grid nodes must increase strictly".into()));
            }
        }
        let (lo, hi) = self.numeric_bounds(&self.grid)?;
        let ts: Vec<f64> = (0..9).map(|k| end * k as f64 / 8.0).collect();
        let xs: Vec<f64> = (0..33).map(|k| lo + (hi - lo) * k as f64 / 32.0).collect();

        let mut sets: Vec<(&str, &Coefficients)> = vec![("", &self.coefficients)];
        for a in &self.actions {
            sets.push((a.name.as_str(), &a.coefficients));
        }
        for (label, c) in &sets {
            let name = |f: &str| {
                if label.is_empty() {
                    f.to_string()
                } else {
                    format!("actions.{label}.{f}")
                }
            };
            for &t in &ts {
                for &x in &xs {
                    for (fname, field) in [
                        ("mu", &c.mu),
                        ("sigma", &c.sigma),
                        ("flow", &c.flow),
                        ("discount", &c.discount),
                    ] {
                        let v = field.eval_checked(t, x).map_err(|e| Error::Invariant {
                            field: name(fname),
                            reason: e.to_string(),
                            t,
                            x,
                        })?;
                        if fname == "sigma" && !(v > 0.0) {
                            return Err(Error::Invariant {
                                field: name("sigma"),
                                reason: format!("volatility must be strictly positive, got {v}"),
                                t,
                                x,
                            });
                        }
                        if fname == "discount" && v < 0.0 {
                            return Err(Error::Invariant {
                                field: name("discount"),
                                reason: format!("discount rate must be nonnegative, got {v}"),
                                t,
                                x,
                            });
                        }
                    }
                }
            }
            if self.horizon.is_perpetual() {
                // Either discounting bounded away from zero, or flow eventually
                // bounded below zero.
                let r_min = ts
                    .iter()
                    .flat_map(|&t| xs.iter().map(move |&x| (t, x)))
                    .map(|(t, x)| c.discount.eval(t, x))
                    .fold(f64::INFINITY, f64::min);
                let flow_tail = xs
                    .iter()
                    .map(|&x| c.flow.eval(end, x))
                    .fold(f64::NEG_INFINITY, f64::max);
                if !(r_min > 0.0) && !(flow_tail < 0.0) {
                    return Err(Error::Invariant {
                        field: name("discount"),
                        reason: "perpetual problem needs inf r > 0 or flow eventually below zero".into(),
                        t: end,
                        x: xs[0],
                    });
                }
            }
        }
        for &t in &ts {
            for &x in &xs {
                for (fname, field) in [("payoff.branch_a", &self.payoff.branch_a), ("payoff.branch_b", &self.payoff.branch_b)] {
                    field.eval_checked(t, x).map_err(|e| Error::Invariant {
                        field: fname.into(),
                        reason: e.to_string(),
                        t,
                        x,
                    })?;
                }
            }
        }
        if self.payoff.is_time_invariant() {
            let diffs: Vec<f64> = (0..=256)
                .map(|k| {
                    let x = lo + (hi - lo) * k as f64 / 256.0;
                    self.payoff.branch_a.eval(0.0, x) - self.payoff.branch_b.eval(0.0, x)
                })
                .filter(|v| *v != 0.0)
                .collect();
            let changes = diffs.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
            if changes > 1 {
                return Err(Error::Invariant {
                    field: "payoff".into(),
                    reason: format!("branch_a - branch_b changes sign {changes} times"),
                    t: 0.0,
                    x: lo,
                });
            }
        }
        if let Some(c) = &self.payoff.crossing {
            for &t in &ts {
                let v = c.eval(t, 0.0);
                if !(v >= lo && v <= hi) {
                    return Err(Error::Invariant {
                        field: "payoff.x_c".into(),
                        reason: format!("crossing {v} outside numeric range [{lo}, {hi}]"),
                        t,
                        x: v,
                    });
                }
            }
        }
        if let Some(x0) = self.x0 {
            if !(x0 > d.lower && x0 < d.upper) {
                return Err(Error::Invariant {
                    field: "domain.x0".into(),
                    reason: "initial state outside the open domain".into(),
                    t: 0.0,
                    x: x0,
                });
            }
        }
        let _ = self.crossing_at(0.0)?;
        Ok(())
    }

    /// Copy with every coefficient set replaced by `f(set)`.
    pub fn map_coefficients(&self, f: impl Fn(&Coefficients) -> Coefficients) -> StoppingProblem {
        let mut p = self.clone();
        p.coefficients = f(&self.coefficients);
        for a in &mut p.actions {
            a.coefficients = f(&a.coefficients);
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::CoefficientField as F;

    fn wald_like() -> StoppingProblem {
        StoppingProblem {
            name: "test".into(),
            domain: Domain::new(0.0, 1.0),
            horizon: Horizon::Finite(1.0),
            coefficients: Coefficients {
                mu: F::constant(0.0),
                sigma: F::parse("2*x*(1-x)").unwrap(),
                flow: F::constant(-0.02),
                discount: F::constant(0.1),
            },
            payoff: StoppingPayoff::new(F::parse("x").unwrap(), F::parse("1-x").unwrap()),
            actions: vec![],
            grid: GridSpec::uniform(10, 21),
            x0: None,
            closure: Closure::default(),
        }
    }

    #[test]
    fn crossing_by_bisection() {
        let p = wald_like();
        let xc = p.crossing_at(0.0).unwrap();
        assert!((xc - 0.5).abs() < 1e-9);
        let mut q = p.clone();
        q.payoff.branch_a = F::parse("2*x").unwrap();
        assert!((q.crossing_at(0.0).unwrap() - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn zero_volatility_rejected() {
        let mut p = wald_like();
        p.coefficients.sigma = F::parse("0").unwrap();
        match p.validate() {
            Err(Error::Invariant { field, .. }) => assert_eq!(field, "sigma"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn perpetual_admissibility() {
        let mut p = wald_like();
        p.horizon = Horizon::Perpetual { window: 1.0 };
        p.coefficients.discount = F::constant(0.0);
        p.coefficients.flow = F::constant(0.0);
        assert!(p.validate().is_err());
        p.coefficients.flow = F::constant(-0.01);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn payoff_kink_partials_refused() {
        let p = wald_like();
        assert!(matches!(
            p.payoff.partials(0.0, 0.5, Some(0.5), 1e-12),
            Err(Error::Kink { .. })
        ));
        let d = p.payoff.partials(0.0, 0.7, Some(0.5), 1e-12).unwrap();
        assert_eq!(d.dx, 1.0);
    }

    #[test]
    fn domain_violation_reported() {
        let p = wald_like();
        assert!(matches!(
            p.eval_field(&p.coefficients.sigma, 0.0, 1.5),
            Err(Error::Domain { .. })
        ));
    }
}

//! Coefficient fields over `(t, x)`: constants, expressions, or tables.

use crate::error::{Error, Result};
use crate::expr::{self, Expr, Var};

/// First and second partial derivatives of a field at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Partials {
    pub dt: f64,
    pub dx: f64,
    pub dxx: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprField {
    expr: Expr,
    dt: Option<Expr>,
    dx: Option<Expr>,
    dxx: Option<Expr>,
}

impl ExprField {
    pub fn new(expr: Expr) -> Self {
        let dt = expr.derivative(Var::T);
        let dx = expr.derivative(Var::X);
        let dxx = dx.as_ref().and_then(|d| d.derivative(Var::X));
        Self { expr, dt, dx, dxx }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

/// Samples on a rectangular `(t, x)` lattice with bilinear interpolation.
///
/// Either axis may have a single node, in which case the table is constant
/// along it. Queries outside the lattice are clamped to its edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    t: Vec<f64>,
    x: Vec<f64>,
    values: Vec<f64>,
    d_t: Vec<f64>,
    d_x: Vec<f64>,
    d_xx: Vec<f64>,
}

impl Table {
    /// `values` is row-major: `values[i_t * x.len() + i_x]`.
    pub fn new(t: Vec<f64>, x: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if t.is_empty() || x.is_empty() {
            return Err(Error::Config("table axes must be non-empty".into()));
        }
        if values.len() != t.len() * x.len() {
            return Err(Error::Config(format!(
                "table has {} samples, expected {}x{}",
                values.len(),
                t.len(),
                x.len()
            )));
        }
        for axis in [&t, &x] {
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Config("table axes must be strictly increasing".into()));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("table contains non-finite sample {v}")));
        }
        let (nt, nx) = (t.len(), x.len());
        let at = |i: usize, j: usize| values[i * nx + j];
        let mut d_t = vec![0.0; values.len()];
        let mut d_x = vec![0.0; values.len()];
        let mut d_xx = vec![0.0; values.len()];
        for i in 0..nt {
            for j in 0..nx {
                d_t[i * nx + j] = axis_derivative(&t, i, |k| at(k, j));
                d_x[i * nx + j] = axis_derivative(&x, j, |k| at(i, k));
                d_xx[i * nx + j] = axis_second_derivative(&x, j, |k| at(i, k));
            }
        }
        Ok(Self {
            t,
            x,
            values,
            d_t,
            d_x,
            d_xx,
        })
    }

    pub fn t_nodes(&self) -> &[f64] {
        &self.t
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn interpolate(&self, data: &[f64], t: f64, x: f64) -> f64 {
        let (it, wt) = bracket(&self.t, t);
        let (ix, wx) = bracket(&self.x, x);
        let nx = self.x.len();
        let it1 = (it + 1).min(self.t.len() - 1);
        let ix1 = (ix + 1).min(nx - 1);
        let v00 = data[it * nx + ix];
        let v01 = data[it * nx + ix1];
        let v10 = data[it1 * nx + ix];
        let v11 = data[it1 * nx + ix1];
        // Exact node hits return the stored sample.
        let lo = if wx == 0.0 { v00 } else { v00 + wx * (v01 - v00) };
        let hi = if wx == 0.0 { v10 } else { v10 + wx * (v11 - v10) };
        if wt == 0.0 {
            lo
        } else {
            lo + wt * (hi - lo)
        }
    }

    fn is_time_invariant(&self) -> bool {
        let nx = self.x.len();
        (1..self.t.len()).all(|i| self.values[i * nx..(i + 1) * nx] == self.values[..nx])
    }
}

/// Index of the lower bracketing node and the weight of the upper one.
fn bracket(nodes: &[f64], q: f64) -> (usize, f64) {
    let n = nodes.len();
    if n == 1 || q <= nodes[0] {
        return (0, 0.0);
    }
    if q >= nodes[n - 1] {
        return (n - 1, 0.0);
    }
    let i = nodes.partition_point(|&v| v <= q) - 1;
    let w = (q - nodes[i]) / (nodes[i + 1] - nodes[i]);
    (i, w)
}

/// Second-order finite difference of sampled data along one axis.
fn axis_derivative(nodes: &[f64], i: usize, f: impl Fn(usize) -> f64) -> f64 {
    let n = nodes.len();
    match n {
        1 => 0.0,
        2 => (f(1) - f(0)) / (nodes[1] - nodes[0]),
        _ => {
            // Three-point Lagrange derivative on the stencil containing i.
            let c = i.clamp(1, n - 2);
            let (x0, x1, x2) = (nodes[c - 1], nodes[c], nodes[c + 1]);
            let (f0, f1, f2) = (f(c - 1), f(c), f(c + 1));
            let x = nodes[i];
            f0 * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
                + f1 * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
                + f2 * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
        }
    }
}

fn axis_second_derivative(nodes: &[f64], i: usize, f: impl Fn(usize) -> f64) -> f64 {
    let n = nodes.len();
    if n < 3 {
        return 0.0;
    }
    let c = i.clamp(1, n - 2);
    let (x0, x1, x2) = (nodes[c - 1], nodes[c], nodes[c + 1]);
    let (f0, f1, f2) = (f(c - 1), f(c), f(c + 1));
    2.0 * (f0 / ((x0 - x1) * (x0 - x2)) + f1 / ((x1 - x0) * (x1 - x2)) + f2 / ((x2 - x0) * (x2 - x1)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientField {
    Constant(f64),
    Expression(ExprField),
    Tabulated(Table),
}

impl From<f64> for CoefficientField {
    fn from(v: f64) -> Self {
        CoefficientField::Constant(v)
    }
}

impl CoefficientField {
    pub fn constant(v: f64) -> Self {
        CoefficientField::Constant(v)
    }

    /// Parses an expression; bare numeric literals become constants.
    pub fn parse(src: &str) -> Result<Self> {
        Ok(Self::from_expr(Expr::parse(src)?))
    }

    pub fn from_expr(expr: Expr) -> Self {
        match expr {
            Expr::Num(v) => CoefficientField::Constant(v),
            e => CoefficientField::Expression(ExprField::new(e)),
        }
    }

    pub fn table(table: Table) -> Self {
        CoefficientField::Tabulated(table)
    }

    /// Expression form, when the field is not tabulated.
    pub fn to_expr(&self) -> Option<Expr> {
        match self {
            CoefficientField::Constant(v) => Some(Expr::Num(*v)),
            CoefficientField::Expression(e) => Some(e.expr.clone()),
            CoefficientField::Tabulated(_) => None,
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            CoefficientField::Constant(v) => Some(*v),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            CoefficientField::Constant(v) => *v,
            CoefficientField::Expression(e) => e.expr.eval(t, x),
            CoefficientField::Tabulated(tab) => tab.interpolate(&tab.values, t, x),
        }
    }

    pub fn eval_checked(&self, t: f64, x: f64) -> Result<f64> {
        match self {
            CoefficientField::Expression(e) => e.expr.eval_checked(t, x),
            _ => {
                let v = self.eval(t, x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite {
                        expr: self.describe(),
                        value: v,
                        t,
                        x,
                    })
                }
            }
        }
    }

    pub fn is_time_invariant(&self) -> bool {
        match self {
            CoefficientField::Constant(_) => true,
            CoefficientField::Expression(e) => !e.expr.depends_on(Var::T),
            CoefficientField::Tabulated(t) => t.is_time_invariant(),
        }
    }

    pub fn is_state_invariant(&self) -> bool {
        match self {
            CoefficientField::Constant(_) => true,
            CoefficientField::Expression(e) => !e.expr.depends_on(Var::X),
            CoefficientField::Tabulated(t) => t.x.len() == 1,
        }
    }

    /// Partial derivatives: symbolic for smooth expressions, sample-spacing
    /// differences for tables, central differences otherwise.
    pub fn partials(&self, t: f64, x: f64) -> Partials {
        match self {
            CoefficientField::Constant(_) => Partials::default(),
            CoefficientField::Expression(e) => {
                let dt = match &e.dt {
                    Some(d) => d.eval(t, x),
                    None => central(|s| e.expr.eval(s, x), t, 1e-6),
                };
                let dx = match &e.dx {
                    Some(d) => d.eval(t, x),
                    None => central(|s| e.expr.eval(t, s), x, 1e-6),
                };
                let dxx = match &e.dxx {
                    Some(d) => d.eval(t, x),
                    None => second_central(|s| e.expr.eval(t, s), x, 1e-4),
                };
                Partials { dt, dx, dxx }
            }
            CoefficientField::Tabulated(tab) => Partials {
                dt: tab.interpolate(&tab.d_t, t, x),
                dx: tab.interpolate(&tab.d_x, t, x),
                dxx: tab.interpolate(&tab.d_xx, t, x),
            },
        }
    }

    pub fn describe(&self) -> String {
        match self {
            CoefficientField::Constant(v) => format!("{v:?}"),
            CoefficientField::Expression(e) => e.expr.to_string(),
            CoefficientField::Tabulated(t) => format!("table[{}x{}]", t.t.len(), t.x.len()),
        }
    }

    /// Field with time frozen at `t_freeze` for all later times.
    pub fn frozen_after(&self, t_freeze: f64) -> FrozenField<'_> {
        FrozenField {
            field: self,
            t_freeze,
        }
    }

    /// Pointwise sum, available for constant and expression fields.
    pub fn plus(&self, other: &CoefficientField) -> Option<CoefficientField> {
        Some(Self::from_expr(expr::add(self.to_expr()?, other.to_expr()?)))
    }

    /// Pointwise product, available for constant and expression fields.
    pub fn times(&self, other: &CoefficientField) -> Option<CoefficientField> {
        Some(Self::from_expr(expr::mul(self.to_expr()?, other.to_expr()?)))
    }
}

pub struct FrozenField<'a> {
    field: &'a CoefficientField,
    t_freeze: f64,
}

impl FrozenField<'_> {
    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.field.eval(t.min(self.t_freeze), x)
    }
}

fn step(c: f64, base: f64) -> f64 {
    base.max(base * c.abs())
}

fn central(f: impl Fn(f64) -> f64, c: f64, base: f64) -> f64 {
    let h = step(c, base);
    (f(c + h) - f(c - h)) / (2.0 * h)
}

fn second_central(f: impl Fn(f64) -> f64, c: f64, base: f64) -> f64 {
    let h = step(c, base);
    (f(c + h) - 2.0 * f(c) + f(c - h)) / (h * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_partials_vanish() {
        assert_eq!(CoefficientField::constant(3.0).partials(1.0, 2.0), Partials::default());
    }

    #[test]
    fn polynomial_partials() {
        let f = CoefficientField::parse("x^2").unwrap();
        let p = f.partials(0.0, 3.0);
        assert_eq!((p.dt, p.dx, p.dxx), (0.0, 6.0, 2.0));
    }

    #[test]
    fn table_reproduces_nodes() {
        let t = vec![0.0, 1.0, 2.0];
        let x = vec![0.0, 0.5, 1.0, 3.0];
        let values: Vec<f64> = (0..12).map(|k| (k as f64).sin()).collect();
        let f = CoefficientField::table(Table::new(t.clone(), x.clone(), values.clone()).unwrap());
        for (i, &ti) in t.iter().enumerate() {
            for (j, &xj) in x.iter().enumerate() {
                assert_eq!(f.eval(ti, xj), values[i * 4 + j]);
            }
        }
    }

    #[test]
    fn table_time_derivative_at_left_edge() {
        // e^{-t} sampled every 1e-3; the analytic derivative at t = 0 is -1.
        let t: Vec<f64> = (0..=1000).map(|k| k as f64 * 1e-3).collect();
        let values: Vec<f64> = t.iter().map(|s| (-s).exp()).collect();
        let f = CoefficientField::table(Table::new(t, vec![0.0], values).unwrap());
        assert!((f.partials(0.0, 0.0).dt + 1.0).abs() < 1e-5);
        assert!((f.partials(0.5, 0.0).dt + (-0.5f64).exp()).abs() < 1e-5);
    }

    #[test]
    fn nonsmooth_expression_falls_back_to_differences() {
        let f = CoefficientField::parse("max(x^2, 0) * exp(t)").unwrap();
        let p = f.partials(0.0, 1.5);
        assert!((p.dx - 3.0).abs() < 1e-6);
        assert!((p.dt - 2.25).abs() < 1e-6);
        assert!((p.dxx - 2.0).abs() < 1e-4);
    }

    #[test]
    fn time_invariance() {
        assert!(CoefficientField::parse("2*x*(1-x)").unwrap().is_time_invariant());
        assert!(!CoefficientField::parse("0.01 + 0.02*t").unwrap().is_time_invariant());
    }

    proptest! {
        #[test]
        fn symbolic_and_difference_partials_agree(
            t in 0.0f64..2.0, x in 0.1f64..3.0,
            a in -2.0f64..2.0, b in 0.1f64..2.0,
        ) {
            let src = format!("exp({a}*t) * x^2 / ({b} + x) + sqrt(x + t) * log(1 + x)");
            let f = CoefficientField::parse(&src).unwrap();
            let p = f.partials(t, x);
            let g = |s: f64, y: f64| f.eval(s, y);
            let h = 1e-5;
            let dt = (g(t + h, x) - g(t - h, x)) / (2.0 * h);
            let dx = (g(t, x + h) - g(t, x - h)) / (2.0 * h);
            let h2 = 1e-3;
            let dxx = (g(t, x + h2) - 2.0 * g(t, x) + g(t, x - h2)) / (h2 * h2);
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
            prop_assert!(rel(p.dt, dt) < 1e-4);
            prop_assert!(rel(p.dx, dx) < 1e-4);
            prop_assert!(rel(p.dxx, dxx) < 1e-4);
        }

        #[test]
        fn evaluation_is_deterministic(t in 0.0f64..5.0, x in 0.01f64..0.99) {
            let f = CoefficientField::parse("0.3*x*exp(-t)/(1+x^2) - min(t, x)").unwrap();
            prop_assert_eq!(f.eval(t, x).to_bits(), f.eval(t, x).to_bits());
        }
    }
}

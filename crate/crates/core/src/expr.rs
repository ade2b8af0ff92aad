//! A small arithmetic expression language over the symbols `t` and `x`.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 't' | 'x' | func '(' args ')' | '(' expr ')'
//! func    := exp | log | sqrt | min | max
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)`. Numbers accept the usual decimal and exponent forms.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Min,
    Max,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser::new(src);
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    /// Evaluates without locating failures; non-finite values propagate.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X) => x,
            Expr::Neg(a) => -a.eval(t, x),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(t, x), b.eval(t, x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(t, x);
                match f {
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Sqrt => a.sqrt(),
                    Func::Min => a.min(args[1].eval(t, x)),
                    Func::Max => a.max(args[1].eval(t, x)),
                }
            }
        }
    }

    /// Evaluates and, on a non-finite result, names the innermost
    /// sub-expression that first produced it.
    pub fn eval_checked(&self, t: f64, x: f64) -> Result<f64> {
        let v = self.eval(t, x);
        if v.is_finite() {
            return Ok(v);
        }
        let culprit = self.first_non_finite(t, x).unwrap_or(self);
        Err(Error::NonFinite {
            expr: culprit.to_string(),
            value: culprit.eval(t, x),
            t,
            x,
        })
    }

    fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Num(_) | Expr::Var(_) => vec![],
            Expr::Neg(a) => vec![a],
            Expr::Bin(_, a, b) => vec![a, b],
            Expr::Call(_, args) => args.iter().collect(),
        }
    }

    fn first_non_finite(&self, t: f64, x: f64) -> Option<&Expr> {
        for c in self.children() {
            if let Some(e) = c.first_non_finite(t, x) {
                return Some(e);
            }
        }
        if self.eval(t, x).is_finite() {
            None
        } else {
            Some(self)
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Var(w) => *w == v,
            _ => self.children().iter().any(|c| c.depends_on(v)),
        }
    }

    /// True when the expression contains `min` or `max`, which have no
    /// symbolic derivative here.
    pub fn has_nonsmooth(&self) -> bool {
        match self {
            Expr::Call(Func::Min | Func::Max, _) => true,
            _ => self.children().iter().any(|c| c.has_nonsmooth()),
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    /// Symbolic derivative; `None` when a non-smooth function is present.
    pub fn derivative(&self, v: Var) -> Option<Expr> {
        Some(match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(w) => Expr::Num(if *w == v { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(v)?),
            Expr::Bin(op, a, b) => {
                let (da, db) = (a.derivative(v)?, b.derivative(v)?);
                let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, b), mul(a, db)),
                    BinOp::Div => div(sub(mul(da, b.clone()), mul(a, db)), pow_e(b, Expr::Num(2.0))),
                    BinOp::Pow => {
                        if let Some(c) = b.as_const() {
                            mul(mul(Expr::Num(c), pow_e(a, Expr::Num(c - 1.0))), da)
                        } else {
                            // d(a^b) = a^b * (b' ln a + b a'/a)
                            let whole = pow_e(a.clone(), b.clone());
                            let term = add(
                                mul(db, call(Func::Log, vec![a.clone()])),
                                div(mul(b, da), a),
                            );
                            mul(whole, term)
                        }
                    }
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].clone();
                let da = a.derivative(v)?;
                match f {
                    Func::Exp => mul(call(Func::Exp, vec![a]), da),
                    Func::Log => div(da, a),
                    Func::Sqrt => div(da, mul(Expr::Num(2.0), call(Func::Sqrt, vec![a]))),
                    Func::Min | Func::Max => return None,
                }
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, _, _) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, _, _) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, _, _) => 4,
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => 3,
            _ => 5,
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b == 2.0 {
        a * a
    } else if b.fract() == 0.0 && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

// Simplifying constructors used by differentiation and by model builders.

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::Num(x + y),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::Num(x - y),
        (_, Some(0.0)) => a,
        (Some(0.0), _) => neg(b),
        _ => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::Num(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Num(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        _ => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) if y != 0.0 => Expr::Num(x / y),
        (Some(0.0), _) => Expr::Num(0.0),
        (_, Some(1.0)) => a,
        _ => Expr::Bin(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

pub fn pow_e(a: Expr, b: Expr) -> Expr {
    match b.as_const() {
        Some(0.0) => Expr::Num(1.0),
        Some(1.0) => a,
        _ => match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Num(pow(x, y)),
            _ => Expr::Bin(BinOp::Pow, Box::new(a), Box::new(b)),
        },
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn call(f: Func, args: Vec<Expr>) -> Expr {
    if args.iter().all(|a| a.as_const().is_some()) {
        let e = Expr::Call(f, args);
        let v = e.eval(0.0, 0.0);
        if v.is_finite() {
            return Expr::Num(v);
        }
        return e;
    }
    Expr::Call(f, args)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8| -> fmt::Result {
            if e.precedence() < min_prec {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                wrap(f, a, 4)
            }
            Expr::Bin(op, a, b) => {
                let (sym, lp, rp) = match op {
                    BinOp::Add => ("+", 1, 2),
                    BinOp::Sub => ("-", 1, 2),
                    BinOp::Mul => ("*", 2, 3),
                    BinOp::Div => ("/", 2, 3),
                    BinOp::Pow => ("^", 5, 4),
                };
                wrap(f, a, lp)?;
                write!(f, " {sym} ")?;
                wrap(f, b, rp)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn new(src: &str) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    fn error(&self, message: &str) -> Error {
        let mut line = 1;
        let mut column = 1;
        for c in self.chars.iter().take(self.pos) {
            if *c == '\n' {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
        }
        Error::Syntax {
            line,
            column,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some('+') => BinOp::Add,
                Some('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some('*') => BinOp::Mul,
                Some('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().collect();
                match name.as_str() {
                    "t" => Ok(Expr::Var(Var::T)),
                    "x" => Ok(Expr::Var(Var::X)),
                    _ => {
                        let func = Func::from_name(&name).ok_or_else(|| {
                            self.pos = start;
                            self.error(&format!("unknown identifier `{name}`"))
                        })?;
                        if !self.eat('(') {
                            return Err(self.error("expected '(' after function name"));
                        }
                        let mut args = vec![self.expr()?];
                        while self.eat(',') {
                            args.push(self.expr()?);
                        }
                        if !self.eat(')') {
                            return Err(self.error("expected ')'"));
                        }
                        if args.len() != func.arity() {
                            return Err(self.error(&format!(
                                "{} takes {} argument(s), got {}",
                                func.name(),
                                func.arity(),
                                args.len()
                            )));
                        }
                        Ok(Expr::Call(func, args))
                    }
                }
            }
            Some(c) => Err(self.error(&format!("unexpected character '{c}'"))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let n = self.chars.len();
        while self.pos < n && (self.chars[self.pos].is_ascii_digit() || self.chars[self.pos] == '.') {
            self.pos += 1;
        }
        if self.pos < n && (self.chars[self.pos] == 'e' || self.chars[self.pos] == 'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < n && (self.chars[self.pos] == '+' || self.chars[self.pos] == '-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < n && self.chars[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>().map(Expr::Num).map_err(|_| {
            self.pos = start;
            self.error(&format!("malformed number `{text}`"))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let e = Expr::parse("x*(1-x)*2").unwrap();
        assert_eq!(e.eval(0.5, 0.5), 0.5);
        let e = Expr::parse("-x^2 + 3").unwrap();
        assert_eq!(e.eval(0.0, 2.0), -1.0);
        let e = Expr::parse("2^3^2").unwrap();
        assert_eq!(e.eval(0.0, 0.0), 512.0);
        let e = Expr::parse("max(x, 1 - x) + min(t, 1e-3)").unwrap();
        assert!((e.eval(5.0, 0.3) - 0.701).abs() < 1e-15);
    }

    #[test]
    fn exp_minus_t_times_x() {
        // 2 e^{-1} to ten digits, from an independent high-precision evaluation.
        let e = Expr::parse("exp(-t)*x").unwrap();
        assert!((e.eval(1.0, 2.0) - 0.7357588823).abs() < 1e-10);
    }

    #[test]
    fn syntax_errors_carry_position() {
        match Expr::parse("x + * 2") {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (1, 5)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Expr::parse("foo(x)").is_err());
        assert!(Expr::parse("max(x)").is_err());
        assert!(Expr::parse("(x").is_err());
        assert!(Expr::parse("x y").is_err());
    }

    #[test]
    fn non_finite_names_sub_expression() {
        let e = Expr::parse("x + log(t - 1)").unwrap();
        match e.eval_checked(0.5, 1.0) {
            Err(Error::NonFinite { expr, .. }) => assert_eq!(expr, "log(t - 1.0)"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn polynomial_derivatives() {
        let e = Expr::parse("x^2").unwrap();
        let d = e.derivative(Var::X).unwrap();
        let dd = d.derivative(Var::X).unwrap();
        assert_eq!(d.eval(0.0, 3.0), 6.0);
        assert_eq!(dd.eval(0.0, 3.0), 2.0);
        assert!(Expr::parse("max(x, 0)").unwrap().derivative(Var::X).is_none());
    }

    #[test]
    fn display_round_trips() {
        for src in [
            "x - (1 - x)",
            "-x^2",
            "(-x)^2",
            "x^-3",
            "2 - -3",
            "x / (t * 2)",
            "exp(-t) * x",
            "0.1 + 0.2 * t",
            "1e-9",
            "max(x * 0.5, 1 - x)",
            "x^(2^t)",
            "(x^2)^t",
        ] {
            let e = Expr::parse(src).unwrap();
            let printed = e.to_string();
            let back = Expr::parse(&printed).unwrap();
            assert_eq!(back.to_string(), printed, "{src}");
            for (t, x) in [(0.3, 0.7), (1.5, 2.0)] {
                assert_eq!(e.eval(t, x).to_bits(), back.eval(t, x).to_bits(), "{src}");
            }
        }
    }
}

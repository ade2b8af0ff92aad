//! Sequential-learning models: binary Wald and finite-support priors with
//! exact filtering.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{self, Expr, Var};
use crate::field::{CoefficientField, Table};
use crate::grid::{Grid, GridSpec};
use crate::problem::{Coefficients, Domain, Horizon, StoppingPayoff, StoppingProblem};

/// Prior over the unknown drift `θ` with finitely many support points.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSupportPrior {
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
    /// Noise scale of the signal.
    pub zeta: f64,
}

impl FiniteSupportPrior {
    pub fn new(support: Vec<f64>, weights: Vec<f64>, zeta: f64) -> Result<Self> {
        if support.len() != weights.len() || support.len() < 2 {
            return Err(Error::Model("prior needs at least two support points with one weight each".into()));
        }
        if support.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Model("prior support must be strictly increasing".into()));
        }
        if weights.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Model("prior weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Model(format!("prior weights sum to {total}, not 1")));
        }
        if !(support[0] < 0.0 && support[support.len() - 1] >= 0.0) {
            return Err(Error::Model(
                "support must contain a negative and a nonnegative point, otherwise the decision is trivial".into(),
            ));
        }
        if !(zeta > 0.0) {
            return Err(Error::Model(format!("noise scale must be positive, got {zeta}")));
        }
        Ok(Self { support, weights, zeta })
    }

    /// `θ ∈ {-1, 1}` with `P(θ = 1) = x0`.
    pub fn binary(x0: f64, zeta: f64) -> Result<Self> {
        Self::new(vec![-1.0, 1.0], vec![1.0 - x0, x0], zeta)
    }

    /// Prior probability of `θ >= 0`.
    pub fn belief(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.weights)
            .filter(|(th, _)| **th >= 0.0)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Signal `dZ = i(t) θ dt + ζ(t) dB` about `θ` drawn from a finite prior.
///
/// Posterior weights depend on the path only through
/// `s = ∫ i/ζ² dZ` and `q = ∫ i²/ζ² dt`:
/// `w_k ∝ p_k exp(θ_k s - θ_k² q / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningModel {
    pub prior: FiniteSupportPrior,
    pub intensity: CoefficientField,
    pub noise: CoefficientField,
}

impl LearningModel {
    pub fn new(prior: FiniteSupportPrior, intensity: CoefficientField, noise: CoefficientField) -> Result<Self> {
        for (name, f) in [("intensity", &intensity), ("noise", &noise)] {
            if !f.is_state_invariant() {
                return Err(Error::Model(format!("{name} may depend on t only")));
            }
        }
        Ok(Self { prior, intensity, noise })
    }

    /// Signal-to-noise ratio `i/ζ` at `t`.
    pub fn snr(&self, t: f64) -> f64 {
        self.intensity.eval(t, 0.0) / self.noise.eval(t, 0.0)
    }

    /// Accumulated precision `q(t) = ∫_0^t (i/ζ)² ds`.
    pub fn precision(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if self.intensity.is_time_invariant() && self.noise.is_time_invariant() {
            return self.snr(0.0).powi(2) * t;
        }
        // Composite Simpson; the integrand is smooth in t.
        let n = 256;
        let h = t / n as f64;
        let f = |s: f64| self.snr(s).powi(2);
        let mut acc = f(0.0) + f(t);
        for k in 1..n {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
        }
        acc * h / 3.0
    }

    /// Posterior weights given the sufficient statistics.
    pub fn posterior(&self, s: f64, q: f64) -> Vec<f64> {
        let logs: Vec<f64> = self
            .prior
            .support
            .iter()
            .zip(&self.prior.weights)
            .map(|(&th, &p)| p.ln() + th * s - 0.5 * th * th * q)
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }

    /// `P(θ >= 0)` given the sufficient statistics.
    pub fn belief(&self, s: f64, q: f64) -> f64 {
        self.posterior(s, q)
            .iter()
            .zip(&self.prior.support)
            .filter(|(_, th)| **th >= 0.0)
            .map(|(w, _)| w)
            .sum()
    }

    /// Inverts `s ↦ belief(s, q)`, which is strictly increasing.
    pub fn statistic_for(&self, x: f64, q: f64) -> Result<f64> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain { t: f64::NAN, x, lower: 0.0, upper: 1.0 });
        }
        let (mut lo, mut hi) = (-1.0, 1.0);
        let mut grow = 0;
        while self.belief(lo, q) > x || self.belief(hi, q) < x {
            lo *= 2.0;
            hi *= 2.0;
            grow += 1;
            if grow > 60 {
                return Err(Error::Model(format!(
                    "belief inversion failed for x={x} (bracket [{lo}, {hi}])"
                )));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.belief(mid, q) < x {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * (1.0 + mid.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Exact belief volatility `(i/ζ) Cov_w(θ, 1{θ >= 0})` at belief `x`.
    pub fn sigma(&self, t: f64, x: f64) -> Result<f64> {
        if x <= 0.0 || x >= 1.0 {
            return Ok(0.0);
        }
        let q = self.precision(t);
        let s = self.statistic_for(x, q)?;
        let w = self.posterior(s, q);
        let th = &self.prior.support;
        let mean: f64 = w.iter().zip(th).map(|(w, t)| w * t).sum();
        let upper: f64 = w.iter().zip(th).filter(|(_, t)| **t >= 0.0).map(|(w, t)| w * t).sum();
        let belief: f64 = w.iter().zip(th).filter(|(_, t)| **t >= 0.0).map(|(w, _)| w).sum();
        Ok(self.snr(t) * (upper - belief * mean))
    }

    /// Samples of the exact volatility on a lattice.
    pub fn tabulate_sigma(&self, t: &[f64], x: &[f64]) -> Result<Table> {
        let rows: Vec<Vec<f64>> = t
            .par_iter()
            .map(|&tt| x.iter().map(|&xx| self.sigma(tt, xx)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        Table::new(t.to_vec(), x.to_vec(), rows.concat())
    }

    pub fn is_binary(&self) -> bool {
        self.prior.support.len() == 2
    }

    pub fn draw_theta<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (th, p) in self.prior.support.iter().zip(&self.prior.weights) {
            acc += p;
            if u < acc {
                return *th;
            }
        }
        *self.prior.support.last().expect("non-empty support")
    }
}

/// Parameters of the binary Wald problem with payoff `a x ∨ b (1 - x)`.
#[derive(Debug, Clone)]
pub struct WaldParams {
    pub a: f64,
    pub b: f64,
    pub rate: f64,
    pub intensity: CoefficientField,
    pub noise: CoefficientField,
    pub cost: CoefficientField,
    pub horizon: Horizon,
    pub grid: GridSpec,
    pub x0: f64,
}

impl Default for WaldParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            rate: 0.1,
            intensity: 1.0.into(),
            noise: 1.0.into(),
            cost: 0.02.into(),
            horizon: Horizon::Perpetual { window: 5.0 },
            grid: GridSpec::uniform(200, 401),
            x0: 0.5,
        }
    }
}

fn field_expr(f: &CoefficientField, name: &str) -> Result<Expr> {
    f.to_expr()
        .ok_or_else(|| Error::Model(format!("{name} must be a constant or an expression")))
}

fn payoff(a: f64, b: f64) -> Result<StoppingPayoff> {
    if !(a >= 0.0 && b >= 0.0 && a + b > 0.0) {
        return Err(Error::Model(format!("payoff weights must be nonnegative, got a={a}, b={b}")));
    }
    let x = Expr::var(Var::X);
    let pa = CoefficientField::from_expr(expr::mul(Expr::num(a), x.clone()));
    let pb = CoefficientField::from_expr(expr::mul(Expr::num(b), expr::sub(Expr::num(1.0), x)));
    Ok(StoppingPayoff::new(pa, pb).with_crossing(b / (a + b)))
}

/// Belief dynamics on (0,1) with `μ = 0`, `σ = 2 i/ζ x(1-x)`, flow `-c(t)`.
pub fn make_wald(p: &WaldParams) -> Result<(StoppingProblem, LearningModel)> {
    let i = field_expr(&p.intensity, "intensity")?;
    let z = field_expr(&p.noise, "noise")?;
    let x = Expr::var(Var::X);
    let sigma = expr::mul(
        expr::div(expr::mul(Expr::num(2.0), i), z),
        expr::mul(x.clone(), expr::sub(Expr::num(1.0), x)),
    );
    let flow = expr::neg(field_expr(&p.cost, "cost")?);
    let problem = StoppingProblem {
        name: "wald".into(),
        domain: Domain::new(0.0, 1.0),
        horizon: p.horizon,
        coefficients: Coefficients {
            mu: 0.0.into(),
            sigma: CoefficientField::from_expr(sigma),
            flow: CoefficientField::from_expr(flow),
            discount: p.rate.into(),
        },
        payoff: payoff(p.a, p.b)?,
        actions: Vec::new(),
        grid: p.grid.clone(),
        x0: Some(p.x0),
        closure: Default::default(),
    };
    check_admissible(&problem)?;
    problem.validate()?;
    let learning = LearningModel::new(FiniteSupportPrior::binary(p.x0, 1.0)?, p.intensity.clone(), p.noise.clone())?;
    Ok((problem, learning))
}

fn check_admissible(problem: &StoppingProblem) -> Result<()> {
    let r = problem.coefficients.discount.eval(0.0, 0.5);
    if r < 0.0 {
        return Err(Error::Model(format!("discount rate must be nonnegative, got {r}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct NonbinaryParams {
    pub prior: FiniteSupportPrior,
    pub a: f64,
    pub b: f64,
    pub rate: f64,
    pub cost: f64,
    pub window: f64,
    pub grid: GridSpec,
}

/// Belief `X = P(θ >= 0)` under a finite-support prior with unit intensity.
/// `σ(t, x)` is tabulated on the nodes of `params.grid`, where it matches
/// the exact evaluator to round-off.
pub fn make_nonbinary(p: &NonbinaryParams) -> Result<(StoppingProblem, LearningModel)> {
    if !(p.cost > 0.0 && p.rate >= 0.0) {
        return Err(Error::Model("needs cost c > 0 and rate r >= 0".into()));
    }
    let learning = LearningModel::new(p.prior.clone(), 1.0.into(), p.prior.zeta.into())?;
    let x0 = p.prior.belief();
    let mut problem = StoppingProblem {
        name: "nonbinary".into(),
        domain: Domain::new(0.0, 1.0),
        horizon: Horizon::Perpetual { window: p.window },
        coefficients: Coefficients {
            mu: 0.0.into(),
            // Placeholder until the grid is known.
            sigma: CoefficientField::parse("x*(1-x)")?,
            flow: (-p.cost).into(),
            discount: p.rate.into(),
        },
        payoff: payoff(p.a, p.b)?,
        actions: Vec::new(),
        grid: p.grid.clone(),
        x0: Some(x0),
        closure: Default::default(),
    };
    let grid = Grid::build(&problem, &p.grid)?;
    let table = learning.tabulate_sigma(&grid.t, &grid.x)?;
    problem.coefficients.sigma = CoefficientField::table(table);
    problem.validate()?;
    Ok((problem, learning))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_prior_gives_wald_volatility() {
        let m = LearningModel::new(FiniteSupportPrior::binary(0.5, 1.0).unwrap(), 1.0.into(), 1.0.into()).unwrap();
        for &t in &[0.0, 0.7, 3.0] {
            for &x in &[0.05, 0.3, 0.5, 0.81] {
                let s = m.sigma(t, x).unwrap();
                assert!((s - 2.0 * x * (1.0 - x)).abs() < 1e-10, "t={t} x={x}: {s}");
            }
        }
    }

    #[test]
    fn three_point_volatility_decreases_in_time() {
        let prior = FiniteSupportPrior::new(vec![-1.0, 0.1, 1.0], vec![0.4, 0.2, 0.4], 1.0).unwrap();
        let m = LearningModel::new(prior, 1.0.into(), 1.0.into()).unwrap();
        let s: Vec<f64> = [0.0, 0.5, 1.0, 2.0].iter().map(|&t| m.sigma(t, 0.5).unwrap()).collect();
        for w in s.windows(2) {
            assert!(w[1] < w[0], "{s:?}");
        }
    }

    #[test]
    fn wald_crossing_points() {
        let (p, _) = make_wald(&WaldParams::default()).unwrap();
        assert_eq!(p.crossing_at(0.0).unwrap(), 0.5);
        let (p, _) = make_wald(&WaldParams { a: 2.0, ..Default::default() }).unwrap();
        assert!((p.crossing_at(0.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn prior_validation() {
        assert!(FiniteSupportPrior::new(vec![0.1, 1.0], vec![0.5, 0.5], 1.0).is_err());
        assert!(FiniteSupportPrior::new(vec![-1.0, 1.0], vec![0.5, 0.6], 1.0).is_err());
        assert!(FiniteSupportPrior::new(vec![1.0, -1.0], vec![0.5, 0.5], 1.0).is_err());
    }

    #[test]
    fn belief_inversion_round_trips() {
        let prior = FiniteSupportPrior::new(vec![-1.0, 0.1, 1.0], vec![0.4, 0.2, 0.4], 1.0).unwrap();
        let m = LearningModel::new(prior, 1.0.into(), 1.0.into()).unwrap();
        for &x in &[1e-6, 0.2, 0.6, 0.999] {
            let s = m.statistic_for(x, 1.5).unwrap();
            assert!((m.belief(s, 1.5) - x).abs() < 1e-12);
        }
    }
}

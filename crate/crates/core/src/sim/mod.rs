//! Monte Carlo: Euler–Maruyama paths stopped by extracted boundaries,
//! coupled rankings, value estimates and decision-accuracy profiles.
//!
//! Every path draws from its own ChaCha stream keyed by `(seed, path_id)`,
//! so ensembles are identical whatever the thread count.

pub mod accuracy;
pub mod stats;

pub use accuracy::{accuracy_profile, AccuracyBin, AccuracyProfile};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{CatalogModel, DeadlineSpec, LearningModel};
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::problem::{Branch, StoppingProblem};
use crate::solver::{BoundaryMode, FreeBoundary};

/// Environment variable capping the worker threads of Monte Carlo runs.
pub const THREADS_ENV: &str = "STOPFLOW_THREADS";

/// Sizes the global pool from `STOPFLOW_THREADS`. Call once, before any
/// parallel work; later calls are ignored.
pub fn init_global_pool() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs `f` on a pool sized by `STOPFLOW_THREADS`, or on the global pool.
pub fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

/// When a path stops.
#[derive(Debug, Clone, Copy)]
pub enum StopRule<'a> {
    /// First exit from the band between the boundaries.
    Boundary { boundary: &'a FreeBoundary, mode: BoundaryMode },
    /// Never stop before the horizon (or the time cap).
    Horizon,
    /// Stop at t = 0.
    Immediate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimParams {
    pub n_paths: usize,
    pub seed: u64,
    pub dt_sim: f64,
    /// Initial state; defaults to the problem's `x0` (the prior belief for
    /// learning models).
    pub x0: Option<f64>,
    /// Time cap for perpetual problems.
    pub t_max: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            seed: 0,
            dt_sim: 1e-3,
            x0: None,
            t_max: 100.0,
        }
    }
}

/// What is simulated: a diffusion, optionally a belief generated by
/// filtering a signal about a drawn parameter, optionally a Poisson
/// deadline on top.
#[derive(Debug, Clone, Copy)]
pub struct Scenario<'a> {
    pub problem: &'a StoppingProblem,
    pub learning: Option<&'a LearningModel>,
    pub deadline: Option<&'a DeadlineSpec>,
}

impl<'a> Scenario<'a> {
    pub fn plain(problem: &'a StoppingProblem) -> Self {
        Self { problem, learning: None, deadline: None }
    }

    /// Catalog model as simulated: deadline models run the untransformed
    /// problem with an explicit deadline clock.
    pub fn from_catalog(model: &'a CatalogModel) -> Self {
        match &model.deadline {
            Some(d) => Self { problem: &d.base, learning: model.learning.as_ref(), deadline: Some(&d.spec) },
            None => Self { problem: &model.problem, learning: model.learning.as_ref(), deadline: None },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub path_id: u64,
    pub tau: f64,
    pub x_tau: f64,
    /// Realised discounted flow plus discounted stopping (or deadline)
    /// payoff.
    pub payoff: f64,
    #[serde(skip)]
    pub alternative: Option<Branch>,
    pub deadline_hit: bool,
    /// Left the numeric domain before stopping; stopped at the edge.
    pub censored: bool,
    /// Reached the horizon or the time cap.
    pub capped: bool,
    /// Drawn parameter of a learning model.
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEnsemble {
    pub seed: u64,
    pub n_paths: usize,
    pub dt_sim: f64,
    pub scheme: &'static str,
    pub x0: f64,
    pub censored: usize,
    pub capped: usize,
    pub paths: Vec<PathRecord>,
}

impl PathEnsemble {
    /// Mean realised payoff and its standard error.
    pub fn value(&self) -> (f64, f64) {
        let v: Vec<f64> = self.paths.iter().map(|p| p.payoff).collect();
        stats::mean_se(&v)
    }
}

struct Engine<'a> {
    sc: Scenario<'a>,
    rule: StopRule<'a>,
    p: SimParams,
    x0: f64,
    t_end: f64,
    /// Coefficients are frozen after this time (perpetual windows).
    t_freeze: f64,
    edges: (f64, f64),
}

enum Event {
    Boundary,
    Edge,
    Deadline,
}

impl Engine<'_> {
    fn te(&self, t: f64) -> f64 {
        t.min(self.t_freeze)
    }

    fn eval(&self, f: &CoefficientField, t: f64, x: f64) -> f64 {
        f.eval(self.te(t), x)
    }

    fn band(&self, t: f64) -> (f64, f64) {
        match self.rule {
            StopRule::Boundary { boundary, mode } => {
                let (lo, up) = boundary.at(t, mode);
                (lo.unwrap_or(f64::NEG_INFINITY), up.unwrap_or(f64::INFINITY))
            }
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn stop_payoff(&self, t: f64, x: f64, deadline: bool) -> f64 {
        match (deadline, self.sc.deadline) {
            (true, Some(d)) => self.eval(&d.gamma, t, x),
            _ => self.sc.problem.payoff.value(self.te(t), x),
        }
    }

    fn path(&self, path_id: u64) -> PathRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(self.p.seed);
        rng.set_stream(path_id);
        let c = &self.sc.problem.coefficients;
        let theta = self.sc.learning.map(|m| m.draw_theta(&mut rng));
        let clock: f64 = if self.sc.deadline.is_some() { rng.sample(Exp1) } else { f64::INFINITY };
        let (mut t, mut x) = (0.0, self.x0);
        let (mut s, mut q) = (0.0, 0.0);
        let (mut disc, mut acc, mut hazard) = (1.0, 0.0, 0.0);
        let rec = |tau: f64, x_tau: f64, payoff: f64, deadline_hit: bool, censored: bool, capped: bool| PathRecord {
            path_id,
            tau,
            x_tau,
            payoff,
            alternative: (!deadline_hit).then(|| self.sc.problem.payoff.active(self.te(tau), x_tau)),
            deadline_hit,
            censored,
            capped,
            theta,
        };
        let (lo0, up0) = self.band(0.0);
        if matches!(self.rule, StopRule::Immediate) || x <= lo0 || x >= up0 {
            return rec(0.0, x, self.stop_payoff(0.0, x, false), false, false, false);
        }
        let alpha = |t: f64, x: f64| self.sc.deadline.map_or(0.0, |d| self.eval(&d.alpha, t, x));
        loop {
            if t >= self.t_end - 1e-12 {
                return rec(t, x, acc + disc * self.stop_payoff(t, x, false), false, false, true);
            }
            let h = self.p.dt_sim.min(self.t_end - t);
            let z: f64 = rng.sample(StandardNormal);
            let t1 = t + h;
            let x1 = match (self.sc.learning, theta) {
                (Some(m), Some(th)) => {
                    let snr = m.snr(self.te(t));
                    s += snr * snr * th * h + snr * h.sqrt() * z;
                    q += snr * snr * h;
                    m.belief(s, q)
                }
                _ => x + self.eval(&c.mu, t, x) * h + self.eval(&c.sigma, t, x) * h.sqrt() * z,
            };
            let (r0, f0) = (self.eval(&c.discount, t, x), self.eval(&c.flow, t, x));
            let (r1, f1) = (self.eval(&c.discount, t1, x1), self.eval(&c.flow, t1, x1));
            let disc1 = disc * (-0.5 * (r0 + r1) * h).exp();
            // Earliest event within the step, as a fraction of it.
            let mut first: Option<(f64, Event)> = None;
            let mut consider = |frac: f64, e: Event| {
                if first.as_ref().is_none_or(|(f, _)| frac < *f) {
                    first = Some((frac.clamp(0.0, 1.0), e));
                }
            };
            let (lo0, up0) = self.band(t);
            let (lo1, up1) = self.band(t1);
            let (d0, d1) = (x - lo0, x1 - lo1);
            if d1 <= 0.0 {
                consider(if d0.is_finite() { d0 / (d0 - d1) } else { 1.0 }, Event::Boundary);
            }
            let (d0, d1) = (up0 - x, up1 - x1);
            if d1 <= 0.0 {
                consider(if d0.is_finite() { d0 / (d0 - d1) } else { 1.0 }, Event::Boundary);
            }
            let (e_lo, e_hi) = self.edges;
            if x1 <= e_lo {
                consider((x - e_lo) / (x - x1), Event::Edge);
            } else if x1 >= e_hi {
                consider((e_hi - x) / (x1 - x), Event::Edge);
            }
            let hz1 = hazard + 0.5 * (alpha(t, x) + alpha(t1, x1)) * h;
            if hz1 >= clock {
                consider((clock - hazard) / (hz1 - hazard), Event::Deadline);
            }
            if let Some((frac, e)) = first {
                let tau = t + frac * h;
                let x_tau = x + frac * (x1 - x);
                let (r_tau, f_tau) = (self.eval(&c.discount, tau, x_tau), self.eval(&c.flow, tau, x_tau));
                let d_tau = disc * (-0.5 * (r0 + r_tau) * frac * h).exp();
                acc += 0.5 * (disc * f0 + d_tau * f_tau) * frac * h;
                let deadline = matches!(e, Event::Deadline);
                let payoff = acc + d_tau * self.stop_payoff(tau, x_tau, deadline);
                return rec(tau, x_tau, payoff, deadline, matches!(e, Event::Edge), false);
            }
            acc += 0.5 * (disc * f0 + disc1 * f1) * h;
            t = t1;
            x = x1;
            disc = disc1;
            hazard = hz1;
        }
    }
}

/// Simulates `n_paths` stopped paths. Beliefs of learning scenarios come
/// from exact filtering of a signal about a parameter drawn from the prior.
pub fn simulate_stopped(scenario: Scenario<'_>, rule: StopRule<'_>, params: &SimParams) -> Result<PathEnsemble> {
    let problem = scenario.problem;
    if !(params.dt_sim > 0.0) || params.n_paths == 0 {
        return Err(Error::Config("dt_sim must be positive and n_paths non-zero".into()));
    }
    if let StopRule::Boundary { boundary, .. } = rule {
        if !boundary.valid {
            return Err(Error::Precondition("stopping rule needs a valid boundary".into()));
        }
    }
    let x0 = match (scenario.learning, params.x0, problem.x0) {
        (Some(m), _, _) => m.belief(0.0, 0.0),
        (None, Some(x), _) | (None, None, Some(x)) => x,
        (None, None, None) => return Err(Error::Config("no initial state: set x0".into())),
    };
    problem.check_point(0.0, x0)?;
    let edges = match rule {
        StopRule::Boundary { boundary, .. } => (boundary.x_nodes[0], boundary.x_nodes[boundary.x_nodes.len() - 1]),
        _ => problem.numeric_bounds(&problem.grid)?,
    };
    let (t_end, t_freeze) = match problem.horizon {
        crate::problem::Horizon::Finite(t) => (t, t),
        crate::problem::Horizon::Perpetual { window } => (params.t_max.max(window), window),
    };
    let engine = Engine { sc: scenario, rule, p: *params, x0, t_end, t_freeze, edges };
    let paths: Vec<PathRecord> =
        with_pool(|| (0..params.n_paths as u64).into_par_iter().map(|id| engine.path(id)).collect());
    Ok(PathEnsemble {
        seed: params.seed,
        n_paths: params.n_paths,
        dt_sim: params.dt_sim,
        scheme: "euler_maruyama",
        x0,
        censored: paths.iter().filter(|p| p.censored).count(),
        capped: paths.iter().filter(|p| p.capped).count(),
        paths,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_paths: usize,
    pub censored: usize,
}

/// Expected payoff of a stopping rule.
pub fn estimate_value_mc(scenario: Scenario<'_>, rule: StopRule<'_>, params: &SimParams) -> Result<ValueEstimate> {
    let e = simulate_stopped(scenario, rule, params)?;
    let (mean, std_err) = e.value();
    Ok(ValueEstimate { mean, std_err, n_paths: e.n_paths, censored: e.censored })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub n_paths: usize,
    pub dt_sim: f64,
    /// Paths with `τ_hi < τ_lo - dt_sim`.
    pub violations: usize,
    /// Largest `τ_lo - τ_hi`.
    pub worst: f64,
    pub mean_tau_lo: f64,
    pub mean_tau_hi: f64,
    pub pass: bool,
    #[serde(skip)]
    pub taus: Vec<(f64, f64)>,
}

fn same_field(a: &CoefficientField, b: &CoefficientField, p: &StoppingProblem) -> Result<bool> {
    if a == b {
        return Ok(true);
    }
    let (lo, hi) = p.numeric_bounds(&p.grid)?;
    let end = p.horizon.end();
    Ok((0..=8).all(|k| {
        (0..=32).all(|j| {
            let (t, x) = (end * k as f64 / 8.0, lo + (hi - lo) * j as f64 / 32.0);
            let (u, v) = (a.eval(t, x), b.eval(t, x));
            (u - v).abs() <= 1e-12 * (1.0 + u.abs())
        })
    }))
}

/// Drives both stopping rules with the same noise and checks
/// `τ_hi >= τ_lo - dt_sim` path by path.
pub fn coupled_stopping_rank(
    lo: Scenario<'_>,
    hi: Scenario<'_>,
    b_lo: &FreeBoundary,
    b_hi: &FreeBoundary,
    mode: BoundaryMode,
    params: &SimParams,
) -> Result<CouplingReport> {
    let (cl, ch) = (&lo.problem.coefficients, &hi.problem.coefficients);
    if !same_field(&cl.mu, &ch.mu, lo.problem)? || !same_field(&cl.sigma, &ch.sigma, lo.problem)? {
        return Err(Error::Precondition("coupled ranking needs identical mu and sigma".into()));
    }
    if lo.learning != hi.learning {
        return Err(Error::Precondition("coupled ranking needs the same learning model".into()));
    }
    let e_lo = simulate_stopped(lo, StopRule::Boundary { boundary: b_lo, mode }, params)?;
    let e_hi = simulate_stopped(hi, StopRule::Boundary { boundary: b_hi, mode }, params)?;
    let taus: Vec<(f64, f64)> = e_lo.paths.iter().zip(&e_hi.paths).map(|(a, b)| (a.tau, b.tau)).collect();
    let violations = taus.iter().filter(|(a, b)| *b < *a - params.dt_sim).count();
    let worst = taus.iter().map(|(a, b)| a - b).fold(0.0, f64::max);
    let n = taus.len() as f64;
    Ok(CouplingReport {
        n_paths: taus.len(),
        dt_sim: params.dt_sim,
        violations,
        worst,
        mean_tau_lo: taus.iter().map(|t| t.0).sum::<f64>() / n,
        mean_tau_hi: taus.iter().map(|t| t.1).sum::<f64>() / n,
        pass: violations == 0,
        taus,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefConsistency {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    /// KS distance between terminal beliefs of the two simulations.
    pub ks: f64,
    pub max_gap: f64,
}

/// Terminal beliefs from exact filtering against those from an Euler
/// solve of the belief SDE `dX = σ(t, X) dŴ` with the problem's `σ`, both
/// driven by the same innovation `dŴ = dW + (i/ζ)(θ - E[θ]) dt`.
pub fn belief_consistency(
    problem: &StoppingProblem,
    model: &LearningModel,
    n_paths: usize,
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<BeliefConsistency> {
    let sigma = &problem.coefficients.sigma;
    let steps = (horizon / dt).round().max(1.0) as usize;
    let support = &model.prior.support;
    let pairs: Vec<(f64, f64)> = with_pool(|| {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|id| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(id);
                let th = model.draw_theta(&mut rng);
                let (mut s, mut q) = (0.0, 0.0);
                let mut x = model.belief(0.0, 0.0);
                for k in 0..steps {
                    let t = k as f64 * dt;
                    let z: f64 = rng.sample(StandardNormal);
                    let snr = model.snr(t);
                    let w = model.posterior(s, q);
                    let mean: f64 = w.iter().zip(support).map(|(a, b)| a * b).sum();
                    let dw_hat = z * dt.sqrt() + snr * (th - mean) * dt;
                    x = (x + sigma.eval(t, x) * dw_hat).clamp(0.0, 1.0);
                    s += snr * snr * th * dt + snr * dt.sqrt() * z;
                    q += snr * snr * dt;
                }
                (model.belief(s, q), x)
            })
            .collect()
    });
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    Ok(BeliefConsistency {
        n_paths,
        dt,
        horizon,
        ks: stats::ks_distance(&a, &b),
        max_gap: pairs.iter().map(|(u, v)| (u - v).abs()).fold(0.0, f64::max),
    })
}

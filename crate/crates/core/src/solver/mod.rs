//! Backward solver for the discrete HJB obstacle problem.

mod boundary;
mod engine;
pub mod lcp;

pub use boundary::{extract_boundaries, smooth_fit_gap, BoundaryMode, FreeBoundary, LayerIssue, SmoothFitGap};
pub use lcp::LcpMethod;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::problem::StoppingProblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// PDE residual tolerance, relative to the payoff scale.
    pub tol_pde: f64,
    /// Obstacle-contact tolerance, relative to the payoff scale.
    pub tol_obstacle: f64,
    pub psor_omega: f64,
    pub max_sweeps: usize,
    /// Implicit weight; 1 is backward Euler, 0.5 Crank–Nicolson.
    pub theta: f64,
    pub stationary_tol: f64,
    pub stationary_max_layers: usize,
    #[serde(with = "method_serde")]
    pub method: LcpMethod,
    /// PSOR sweeps before the exact finish (`PsorPolished` only).
    pub presweeps: usize,
    pub max_policy_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_pde: 1e-9,
            tol_obstacle: 1e-9,
            psor_omega: 1.5,
            max_sweeps: 100_000,
            theta: 1.0,
            stationary_tol: 1e-9,
            stationary_max_layers: 10_000,
            method: LcpMethod::PsorPolished,
            presweeps: 32,
            max_policy_iterations: 50,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.psor_omega > 0.0 && self.psor_omega < 2.0) {
            return Err(Error::Config(format!("psor_omega must lie in (0, 2), got {}", self.psor_omega)));
        }
        if !(self.theta >= 0.5 && self.theta <= 1.0) {
            return Err(Error::Config(format!("theta must lie in [0.5, 1], got {}", self.theta)));
        }
        if !(self.tol_pde > 0.0 && self.tol_obstacle > 0.0 && self.stationary_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

mod method_serde {
    use super::LcpMethod;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &LcpMethod, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match m {
            LcpMethod::Psor => "psor",
            LcpMethod::PolicyIteration => "policy_iteration",
            LcpMethod::PsorPolished => "psor_polished",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<LcpMethod, D::Error> {
        match String::deserialize(d)?.as_str() {
            "psor" => Ok(LcpMethod::Psor),
            "policy_iteration" => Ok(LcpMethod::PolicyIteration),
            "psor_polished" => Ok(LcpMethod::PsorPolished),
            other => Err(serde::de::Error::custom(format!("unknown LCP method {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Region {
    Continue = 0,
    Stop = 1,
}

/// Grid-sampled value function with regions, residuals and (optionally)
/// the chosen action. Arrays are layer-major: index `n * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub obstacle: Vec<f64>,
    pub region: Vec<Region>,
    pub residual: Vec<f64>,
    pub action: Option<Vec<u16>>,
    pub action_names: Vec<String>,
    /// `max(1, max |g|)`.
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantReport {
    pub min_gap: f64,
    pub max_continue_residual: f64,
    pub max_residual: f64,
    pub min_product: f64,
    pub terminal_exact: bool,
    pub pass: bool,
}

impl ValueSurface {
    pub fn nt(&self) -> usize {
        self.grid.t.len()
    }

    pub fn nx(&self) -> usize {
        self.grid.x.len()
    }

    #[inline]
    pub fn idx(&self, n: usize, i: usize) -> usize {
        n * self.nx() + i
    }

    pub fn layer(&self, n: usize) -> &[f64] {
        let nx = self.nx();
        &self.values[n * nx..(n + 1) * nx]
    }

    pub fn obstacle_layer(&self, n: usize) -> &[f64] {
        let nx = self.nx();
        &self.obstacle[n * nx..(n + 1) * nx]
    }

    pub fn region_layer(&self, n: usize) -> &[Region] {
        let nx = self.nx();
        &self.region[n * nx..(n + 1) * nx]
    }

    pub fn is_stop(&self, n: usize, i: usize) -> bool {
        self.region[self.idx(n, i)] == Region::Stop
    }

    /// Linear interpolation in x on layer `n`.
    pub fn value_at(&self, n: usize, x: f64) -> f64 {
        let i = self.grid.locate(x);
        let (x0, x1) = (self.grid.x[i], self.grid.x[i + 1]);
        let w = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        let row = self.layer(n);
        row[i] * (1.0 - w) + row[i + 1] * w
    }

    /// Checks obstacle, terminal and complementarity conditions.
    ///
    /// The product condition is `(V - g) * residual >= -tol_pde * scale * m`
    /// with `m = max(scale, |V|)`: the residual is in value units and its
    /// round-off grows with the local value, which can far exceed the payoff
    /// scale where an edge closure pins a large value.
    pub fn check_invariants(&self, settings: &SolverSettings, terminal_is_payoff: bool) -> InvariantReport {
        let tol_pde = settings.tol_pde * self.scale;
        let mut rep = InvariantReport {
            min_gap: f64::INFINITY,
            max_continue_residual: 0.0,
            max_residual: f64::NEG_INFINITY,
            min_product: f64::INFINITY,
            terminal_exact: true,
            pass: true,
        };
        for k in 0..self.values.len() {
            let gap = self.values[k] - self.obstacle[k];
            let res = self.residual[k];
            rep.min_gap = rep.min_gap.min(gap);
            rep.max_residual = rep.max_residual.max(res);
            let m = self.scale.max(self.values[k].abs());
            rep.min_product = rep.min_product.min(gap * res * self.scale / m);
            if self.region[k] == Region::Continue {
                rep.max_continue_residual = rep.max_continue_residual.max(res.abs());
            }
        }
        if terminal_is_payoff {
            let n = self.nt() - 1;
            rep.terminal_exact = self.layer(n) == self.obstacle_layer(n);
        }
        rep.pass = rep.min_gap >= -1e-12 * self.scale
            && rep.max_residual <= tol_pde
            && rep.max_continue_residual <= tol_pde
            && rep.min_product >= -tol_pde * self.scale
            && rep.terminal_exact;
        rep
    }
}

/// Controlled solve output: the surface (with actions) plus iteration counts.
#[derive(Debug, Clone)]
pub struct ControlledSurface {
    pub surface: ValueSurface,
    /// Outer policy iterations used at each layer.
    pub policy_iterations: Vec<usize>,
}

/// Backward solve of an uncontrolled problem on a finite horizon, or on the
/// window of a perpetual one (terminal layer from the stationary solve of the
/// coefficients frozen at the window end).
pub fn solve_hjb(problem: &StoppingProblem, grid: &Grid, settings: &SolverSettings) -> Result<ValueSurface> {
    if problem.is_controlled() {
        return Err(Error::Precondition(
            "problem declares actions; use solve_controlled".into(),
        ));
    }
    settings.validate()?;
    let sets = [&problem.coefficients];
    Ok(engine::Engine::new(problem, grid, settings, &sets).backward()?.0)
}

/// Converged stationary layer of a problem whose coefficients and payoff do
/// not depend on t. Returned as a one-layer surface.
pub fn solve_stationary(problem: &StoppingProblem, grid: &Grid, settings: &SolverSettings) -> Result<ValueSurface> {
    if !problem.is_time_invariant() {
        return Err(Error::Precondition(
            "solve_stationary needs coefficients and payoff constant in t".into(),
        ));
    }
    settings.validate()?;
    let sets: Vec<_> = if problem.is_controlled() {
        problem.actions.iter().map(|a| &a.coefficients).collect()
    } else {
        vec![&problem.coefficients]
    };
    let mut g = grid.clone();
    g.t = vec![0.0];
    engine::Engine::new(problem, &g, settings, &sets).stationary(0.0)
}

/// Mixed stopping and finite-action control by policy iteration.
pub fn solve_controlled(problem: &StoppingProblem, grid: &Grid, settings: &SolverSettings) -> Result<ControlledSurface> {
    if !problem.is_controlled() {
        return Err(Error::Precondition("problem declares no actions".into()));
    }
    settings.validate()?;
    let sets: Vec<_> = problem.actions.iter().map(|a| &a.coefficients).collect();
    let (surface, policy_iterations) = engine::Engine::new(problem, grid, settings, &sets).backward()?;
    Ok(ControlledSurface {
        surface,
        policy_iterations,
    })
}

/// Dispatches on the problem shape: controlled, stationary perpetual, or
/// backward time-stepping.
pub fn solve(problem: &StoppingProblem, grid: &Grid, settings: &SolverSettings) -> Result<ValueSurface> {
    if problem.is_controlled() {
        Ok(solve_controlled(problem, grid, settings)?.surface)
    } else if problem.horizon.is_perpetual() && problem.is_time_invariant() && grid.t.len() == 1 {
        solve_stationary(problem, grid, settings)
    } else {
        solve_hjb(problem, grid, settings)
    }
}

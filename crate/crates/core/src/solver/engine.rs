//! Operator assembly and time stepping shared by the plain and controlled
//! solvers.

use super::lcp::{self, LcpParams, LcpWorkspace, Tridiag};
use super::{Region, SolverSettings, ValueSurface};
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::grid::Grid;
use crate::problem::{Coefficients, StoppingProblem};

/// Rows of the generator `A = L - r` plus the flow, for one coefficient set.
#[derive(Debug, Clone)]
pub(crate) struct OpSet {
    pub lo: Vec<f64>,
    pub diag: Vec<f64>,
    pub up: Vec<f64>,
    pub flow: Vec<f64>,
}

impl OpSet {
    #[inline]
    pub fn apply(&self, v: &[f64], i: usize) -> f64 {
        self.lo[i] * v[i - 1] + self.diag[i] * v[i] + self.up[i] * v[i + 1] + self.flow[i]
    }
}

fn eval_node(field: &CoefficientField, t: f64, x: f64) -> Result<f64> {
    let v = field.eval(t, x);
    if v.is_finite() {
        Ok(v)
    } else {
        field.eval_checked(t, x)
    }
}

/// Central second differences, upwinded first differences.
pub(crate) fn assemble(c: &Coefficients, t: f64, x: &[f64]) -> Result<OpSet> {
    let n = x.len();
    let mut op = OpSet {
        lo: vec![0.0; n],
        diag: vec![0.0; n],
        up: vec![0.0; n],
        flow: vec![0.0; n],
    };
    for i in 1..n - 1 {
        let (hm, hp) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        let mu = eval_node(&c.mu, t, x[i])?;
        let sigma = eval_node(&c.sigma, t, x[i])?;
        let r = eval_node(&c.discount, t, x[i])?;
        let s2 = sigma * sigma;
        // Central drift differences where they keep the scheme monotone,
        // upwind elsewhere.
        let (mut lo, mut up) = (
            s2 / (hm * (hm + hp)) - mu / (hm + hp),
            s2 / (hp * (hm + hp)) + mu / (hm + hp),
        );
        if lo < 0.0 || up < 0.0 {
            lo = s2 / (hm * (hm + hp)) + (-mu).max(0.0) / hm;
            up = s2 / (hp * (hm + hp)) + mu.max(0.0) / hp;
        }
        op.lo[i] = lo;
        op.up[i] = up;
        op.diag[i] = -(lo + up) - r;
        op.flow[i] = eval_node(&c.flow, t, x[i])?;
    }
    Ok(op)
}

pub(crate) struct Engine<'a> {
    problem: &'a StoppingProblem,
    grid: &'a Grid,
    settings: &'a SolverSettings,
    sets: &'a [&'a Coefficients],
    params: LcpParams,
    scale: f64,
}

/// Solution state of one layer.
struct Layer {
    v: Vec<f64>,
    stop: Vec<bool>,
    policy: Vec<u16>,
    residual: Vec<f64>,
    iterations: usize,
}

impl<'a> Engine<'a> {
    pub fn new(
        problem: &'a StoppingProblem,
        grid: &'a Grid,
        settings: &'a SolverSettings,
        sets: &'a [&'a Coefficients],
    ) -> Self {
        let mut scale: f64 = 1.0;
        for &t in &grid.t {
            for &x in &grid.x {
                scale = scale.max(problem.payoff.value(t, x).abs());
            }
        }
        let params = LcpParams {
            method: settings.method,
            omega: settings.psor_omega,
            tol: settings.tol_pde * scale,
            max_sweeps: settings.max_sweeps,
            presweeps: settings.presweeps,
        };
        Self {
            problem,
            grid,
            settings,
            sets,
            params,
            scale,
        }
    }

    fn obstacle(&self, t: f64) -> Result<Vec<f64>> {
        let p = &self.problem.payoff;
        self.grid
            .x
            .iter()
            .map(|&x| {
                let v = p.value(t, x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    p.branch_a.eval_checked(t, x)?;
                    p.branch_b.eval_checked(t, x)?;
                    Err(Error::NonFinite {
                        expr: "payoff".into(),
                        value: v,
                        t,
                        x,
                    })
                }
            })
            .collect()
    }

    /// Obstacle with the edge entries replaced by any closure override; the
    /// LCP pins the edges to these values.
    fn pinned(&self, t: f64, g: &[f64]) -> Result<Vec<f64>> {
        let mut p = g.to_vec();
        let n = p.len();
        let x = &self.grid.x;
        if let Some(f) = &self.problem.closure.lower {
            p[0] = f.eval_checked(t, x[0])?;
        }
        if let Some(f) = &self.problem.closure.upper {
            p[n - 1] = f.eval_checked(t, x[n - 1])?;
        }
        Ok(p)
    }

    fn ops(&self, t: f64) -> Result<Vec<OpSet>> {
        self.sets.iter().map(|c| assemble(c, t, &self.grid.x)).collect()
    }

    /// Lowest-index maximiser of the generator row, keeping `current` when it
    /// is within round-off of the best.
    fn best_action(&self, ops: &[OpSet], v: &[f64], i: usize, current: u16) -> u16 {
        if ops.len() == 1 {
            return 0;
        }
        let vals: Vec<f64> = ops.iter().map(|o| o.apply(v, i)).collect();
        let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-12 * self.scale.max(best.abs());
        if vals[current as usize] >= best - slack {
            return current;
        }
        vals.iter().position(|&w| w >= best - slack).unwrap_or(0) as u16
    }

    /// One implicit layer: solves for `v^n` given the data at `t^n`, the
    /// explicit contribution `explicit` (already including `v^{n+1}/dt`), and
    /// the weight `theta`. `inv_dt = 0` gives the elliptic problem.
    #[allow(clippy::too_many_arguments)]
    fn layer(
        &self,
        t: f64,
        ops: &[OpSet],
        g: &[f64],
        explicit: &[f64],
        inv_dt: f64,
        theta: f64,
        warm: &Layer,
        ws: &mut LcpWorkspace,
    ) -> Result<Layer> {
        let n = g.len();
        let mut v = warm.v.clone();
        let mut stop = warm.stop.clone();
        let mut policy = warm.policy.clone();
        let mut m = Tridiag::zeros(n);
        let max_outer = if ops.len() == 1 { 1 } else { self.settings.max_policy_iterations };
        let g = &self.pinned(t, g)?;
        let mut iterations = 0;
        loop {
            iterations += 1;
            for i in 1..n - 1 {
                let o = &ops[policy[i] as usize];
                m.lo[i] = -theta * o.lo[i];
                m.diag[i] = inv_dt - theta * o.diag[i];
                m.up[i] = -theta * o.up[i];
                m.rhs[i] = explicit[i] + theta * o.flow[i];
            }
            lcp::solve(&m, g, &mut v, &mut stop, &self.params, ws, t, &self.grid.x)
                .map_err(|e| match e {
                    Error::LcpNoConvergence { sweeps, tol, x, residual, .. } => {
                        Error::LcpNoConvergence { sweeps, tol, t, x, residual }
                    }
                    e => e,
                })?;
            if ops.len() == 1 {
                break;
            }
            let mut changed = false;
            for i in 1..n - 1 {
                let a = self.best_action(ops, &v, i, policy[i]);
                if a != policy[i] {
                    policy[i] = a;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            if iterations >= max_outer {
                return Err(Error::PolicyCycling {
                    iterations,
                    t,
                });
            }
        }
        let mut residual = vec![0.0; n];
        m.scaled_residual(&v, &mut residual);
        Ok(Layer {
            v,
            stop,
            policy,
            residual,
            iterations,
        })
    }

    fn explicit_part(&self, next: &Layer, ops_next: Option<&[OpSet]>, inv_dt: f64, theta: f64) -> Vec<f64> {
        let n = next.v.len();
        let mut q = vec![0.0; n];
        for i in 1..n - 1 {
            q[i] = inv_dt * next.v[i];
            if let Some(ops) = ops_next {
                if theta < 1.0 {
                    q[i] += (1.0 - theta) * ops[next.policy[i] as usize].apply(&next.v, i);
                }
            }
        }
        q
    }

    fn terminal(&self, g: Vec<f64>, ops: &[OpSet]) -> Layer {
        let n = g.len();
        let mut policy = vec![0u16; n];
        for i in 1..n - 1 {
            policy[i] = self.best_action(ops, &g, i, 0);
        }
        Layer {
            stop: vec![true; n],
            residual: vec![0.0; n],
            v: g,
            policy,
            iterations: 0,
        }
    }

    /// Pseudo-time continuation to the fixed point of the implicit step with
    /// coefficients frozen at `t_freeze`. Step sizes grow geometrically; the
    /// last steps are elliptic.
    fn stationary_layer(&self, t_freeze: f64) -> Result<Layer> {
        let ops = self.ops(t_freeze)?;
        let g = self.obstacle(t_freeze)?;
        let n = g.len();
        let mut ws = LcpWorkspace::new(n);
        let mut cur = self.terminal(g.clone(), &ops);
        let tol = self.settings.stationary_tol * self.scale;
        let mut dt: f64 = 1e-2;
        let mut change = f64::INFINITY;
        for _ in 0..self.settings.stationary_max_layers {
            let inv_dt = if dt.is_finite() { 1.0 / dt } else { 0.0 };
            let explicit = self.explicit_part(&cur, None, inv_dt, 1.0);
            let next = self.layer(t_freeze, &ops, &g, &explicit, inv_dt, 1.0, &cur, &mut ws)?;
            change = next
                .v
                .iter()
                .zip(&cur.v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            cur = next;
            // Only the elliptic step certifies the fixed point; small early
            // steps can move less than `tol` without being converged.
            if change < tol && !dt.is_finite() {
                return Ok(cur);
            }
            dt = if dt > 1e9 { f64::INFINITY } else { dt * 2.0 };
        }
        Err(Error::StationaryNoConvergence {
            layers: self.settings.stationary_max_layers,
            change,
        })
    }

    pub fn stationary(&self, t_freeze: f64) -> Result<ValueSurface> {
        let layer = self.stationary_layer(t_freeze)?;
        let g = self.obstacle(t_freeze)?;
        Ok(self.assemble_surface(vec![layer], vec![g]))
    }

    pub fn backward(&self) -> Result<(ValueSurface, Vec<usize>)> {
        let t = &self.grid.t;
        let nt = t.len();
        let end = t[nt - 1];
        let mut layers: Vec<Layer> = Vec::with_capacity(nt);
        let mut obstacles: Vec<Vec<f64>> = Vec::with_capacity(nt);
        let n = self.grid.x.len();
        let mut ws = LcpWorkspace::new(n);

        let g_end = self.obstacle(end)?;
        let mut ops_next = self.ops(end)?;
        let terminal = if self.problem.horizon.is_perpetual() {
            self.stationary_layer(end)?
        } else {
            self.terminal(g_end.clone(), &ops_next)
        };
        layers.push(terminal);
        obstacles.push(g_end);

        let theta = self.settings.theta;
        for k in (0..nt - 1).rev() {
            let dt = t[k + 1] - t[k];
            let ops = self.ops(t[k])?;
            let g = self.obstacle(t[k])?;
            let next = layers.last().expect("terminal layer present");
            let explicit = self.explicit_part(next, Some(&ops_next), 1.0 / dt, theta);
            let layer = self.layer(t[k], &ops, &g, &explicit, 1.0 / dt, theta, next, &mut ws)?;
            layers.push(layer);
            obstacles.push(g);
            ops_next = ops;
        }
        layers.reverse();
        obstacles.reverse();
        let iterations = layers.iter().map(|l| l.iterations).collect();
        Ok((self.assemble_surface(layers, obstacles), iterations))
    }

    fn assemble_surface(&self, layers: Vec<Layer>, obstacles: Vec<Vec<f64>>) -> ValueSurface {
        let nx = self.grid.x.len();
        let nt = layers.len();
        let tol_obs = self.settings.tol_obstacle * self.scale;
        let mut values = Vec::with_capacity(nt * nx);
        let mut obstacle = Vec::with_capacity(nt * nx);
        let mut region = Vec::with_capacity(nt * nx);
        let mut residual = Vec::with_capacity(nt * nx);
        let controlled = self.problem.is_controlled();
        let mut action = Vec::with_capacity(if controlled { nt * nx } else { 0 });
        for (l, g) in layers.iter().zip(&obstacles) {
            for i in 0..nx {
                values.push(l.v[i]);
                obstacle.push(g[i]);
                let pinned = (i == 0 && self.problem.closure.lower.is_none())
                    || (i == nx - 1 && self.problem.closure.upper.is_none());
                let r = if pinned || l.v[i] - g[i] <= tol_obs {
                    Region::Stop
                } else {
                    Region::Continue
                };
                region.push(r);
                residual.push(l.residual[i]);
                if controlled {
                    action.push(l.policy[i]);
                }
            }
        }
        ValueSurface {
            grid: self.grid.clone(),
            values,
            obstacle,
            region,
            residual,
            action: controlled.then_some(action),
            action_names: self.problem.actions.iter().map(|a| a.name.clone()).collect(),
            scale: self.scale,
        }
    }
}

//! Per-layer linear complementarity solves.
//!
//! Each layer is `min(M v - q, v - g) = 0` with `M` a tridiagonal M-matrix
//! and the first/last node pinned to `g`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcpMethod {
    /// Projected SOR until the update falls under tolerance.
    Psor,
    /// Active-set (policy) iteration with exact tridiagonal solves.
    PolicyIteration,
    /// A bounded number of PSOR sweeps to seed the active set, then
    /// policy iteration to finish exactly.
    PsorPolished,
}

/// Rows of `M` plus the right-hand side. Entries at the two edge rows are
/// ignored.
#[derive(Debug, Clone, Default)]
pub struct Tridiag {
    pub lo: Vec<f64>,
    pub diag: Vec<f64>,
    pub up: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl Tridiag {
    pub fn zeros(n: usize) -> Self {
        Self {
            lo: vec![0.0; n],
            diag: vec![0.0; n],
            up: vec![0.0; n],
            rhs: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `(q - M v)_i / M_ii` at interior rows, zero at the edges.
    pub fn scaled_residual(&self, v: &[f64], out: &mut [f64]) {
        let n = self.len();
        out[0] = 0.0;
        out[n - 1] = 0.0;
        for i in 1..n - 1 {
            let mv = self.lo[i] * v[i - 1] + self.diag[i] * v[i] + self.up[i] * v[i + 1];
            out[i] = (self.rhs[i] - mv) / self.diag[i];
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LcpParams {
    pub method: LcpMethod,
    pub omega: f64,
    /// Absolute tolerance on the PSOR update.
    pub tol: f64,
    pub max_sweeps: usize,
    pub presweeps: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LcpStats {
    pub sweeps: usize,
    pub pivots: usize,
}

pub struct LcpWorkspace {
    c: Vec<f64>,
    d: Vec<f64>,
    res: Vec<f64>,
}

impl LcpWorkspace {
    pub fn new(n: usize) -> Self {
        Self {
            c: vec![0.0; n],
            d: vec![0.0; n],
            res: vec![0.0; n],
        }
    }
}

/// Solves the obstacle LCP in place. `v` carries the warm start on entry;
/// `stop` the warm active set. `t` is used only for diagnostics.
pub fn solve(
    m: &Tridiag,
    g: &[f64],
    v: &mut [f64],
    stop: &mut [bool],
    params: &LcpParams,
    ws: &mut LcpWorkspace,
    t: f64,
    x: &[f64],
) -> Result<LcpStats> {
    let n = m.len();
    v[0] = g[0];
    v[n - 1] = g[n - 1];
    stop[0] = true;
    stop[n - 1] = true;
    let mut stats = LcpStats::default();
    match params.method {
        LcpMethod::Psor => {
            stats.sweeps = psor(m, g, v, params, params.max_sweeps, t, x, true)?;
            for i in 1..n - 1 {
                stop[i] = v[i] <= g[i];
            }
        }
        LcpMethod::PolicyIteration => {
            stats.pivots = policy_iteration(m, g, v, stop, ws, params.tol)?;
        }
        LcpMethod::PsorPolished => {
            for i in 1..n - 1 {
                v[i] = v[i].max(g[i]);
            }
            let sweeps = params.presweeps.min(params.max_sweeps);
            stats.sweeps = psor(m, g, v, params, sweeps, t, x, false)?;
            for i in 1..n - 1 {
                stop[i] = v[i] <= g[i];
            }
            stats.pivots = policy_iteration(m, g, v, stop, ws, params.tol)?;
        }
    }
    Ok(stats)
}

#[allow(clippy::too_many_arguments)]
fn psor(
    m: &Tridiag,
    g: &[f64],
    v: &mut [f64],
    p: &LcpParams,
    max_sweeps: usize,
    t: f64,
    x: &[f64],
    must_converge: bool,
) -> Result<usize> {
    let n = m.len();
    let mut worst = (0usize, 0.0f64);
    for sweep in 1..=max_sweeps {
        worst = (0, 0.0);
        for i in 1..n - 1 {
            let y = (m.rhs[i] - m.lo[i] * v[i - 1] - m.up[i] * v[i + 1]) / m.diag[i];
            let new = (v[i] + p.omega * (y - v[i])).max(g[i]);
            let change = (new - v[i]).abs();
            if change > worst.1 {
                worst = (i, change);
            }
            v[i] = new;
        }
        if worst.1 < p.tol {
            return Ok(sweep);
        }
    }
    if must_converge {
        return Err(Error::LcpNoConvergence {
            sweeps: max_sweeps,
            tol: p.tol,
            t,
            x: x[worst.0],
            residual: worst.1,
        });
    }
    Ok(max_sweeps)
}

/// Howard iteration on the scaled pair `((M v - q)/M_ii, v - g)`.
fn policy_iteration(
    m: &Tridiag,
    g: &[f64],
    v: &mut [f64],
    stop: &mut [bool],
    ws: &mut LcpWorkspace,
    tol: f64,
) -> Result<usize> {
    let n = m.len();
    // Switching slack: far below any reporting tolerance, far above
    // round-off in the tridiagonal solve.
    let eps = 1e-6 * tol;
    for it in 0..=n + 2 {
        thomas(m, g, stop, v, ws);
        m.scaled_residual(v, &mut ws.res);
        let mut changed = false;
        for i in 1..n - 1 {
            if stop[i] {
                // Releasing requires the PDE row to be violated: q - Mv > 0.
                if ws.res[i] > eps {
                    stop[i] = false;
                    changed = true;
                }
            } else if v[i] - g[i] < -eps {
                stop[i] = true;
                changed = true;
            }
        }
        if !changed {
            return Ok(it + 1);
        }
    }
    Err(Error::LcpNoConvergence {
        sweeps: n + 3,
        tol,
        t: f64::NAN,
        x: f64::NAN,
        residual: f64::NAN,
    })
}

/// Tridiagonal solve with stop rows replaced by `v_i = g_i`.
fn thomas(m: &Tridiag, g: &[f64], stop: &[bool], v: &mut [f64], ws: &mut LcpWorkspace) {
    let n = m.len();
    let (c, d) = (&mut ws.c, &mut ws.d);
    let row = |i: usize| -> (f64, f64, f64, f64) {
        if stop[i] || i == 0 || i == n - 1 {
            (0.0, 1.0, 0.0, g[i])
        } else {
            (m.lo[i], m.diag[i], m.up[i], m.rhs[i])
        }
    };
    let (_, b0, c0, r0) = row(0);
    c[0] = c0 / b0;
    d[0] = r0 / b0;
    for i in 1..n {
        let (a, b, cc, r) = row(i);
        let denom = b - a * c[i - 1];
        c[i] = cc / denom;
        d[i] = (r - a * d[i - 1]) / denom;
    }
    v[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        v[i] = d[i] - c[i] * v[i + 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// -v'' + 0.1 v = 2 on a uniform grid with obstacle g = 0.3 - 0.6|x - 0.5|.
    fn problem(n: usize) -> (Tridiag, Vec<f64>, Vec<f64>) {
        let h = 1.0 / (n - 1) as f64;
        let x: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let mut m = Tridiag::zeros(n);
        for i in 1..n - 1 {
            m.lo[i] = -1.0 / (h * h);
            m.up[i] = -1.0 / (h * h);
            m.diag[i] = 2.0 / (h * h) + 0.1;
            m.rhs[i] = 2.0;
        }
        let g = x.iter().map(|&x| 0.3 - 0.6 * (x - 0.5).abs()).collect();
        (m, g, x)
    }

    fn params(method: LcpMethod) -> LcpParams {
        LcpParams {
            method,
            omega: 1.5,
            tol: 1e-12,
            max_sweeps: 200_000,
            presweeps: 16,
        }
    }

    fn run(method: LcpMethod, n: usize) -> Vec<f64> {
        let (m, g, x) = problem(n);
        let mut v = g.clone();
        let mut stop = vec![false; n];
        let mut ws = LcpWorkspace::new(n);
        solve(&m, &g, &mut v, &mut stop, &params(method), &mut ws, 0.0, &x).unwrap();
        v
    }

    #[test]
    fn methods_agree() {
        let a = run(LcpMethod::Psor, 41);
        let b = run(LcpMethod::PolicyIteration, 41);
        let c = run(LcpMethod::PsorPolished, 41);
        for i in 0..41 {
            assert!((a[i] - b[i]).abs() < 1e-9, "{i}: {} vs {}", a[i], b[i]);
            assert_eq!(b[i], c[i]);
        }
    }

    #[test]
    fn complementarity_holds() {
        let n = 81;
        let (m, g, _) = problem(n);
        let v = run(LcpMethod::PolicyIteration, n);
        let mut res = vec![0.0; n];
        m.scaled_residual(&v, &mut res);
        let contact = (1..n - 1).filter(|&i| v[i] == g[i]).count();
        assert!(contact > 0 && contact < n - 2, "contact set {contact}");
        for i in 1..n - 1 {
            assert!(v[i] >= g[i] - 1e-14);
            assert!(res[i] <= 1e-12);
            assert!(((v[i] - g[i]) * res[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn psor_budget_exhaustion_is_reported() {
        let (m, g, x) = problem(201);
        let mut v = g.clone();
        let mut stop = vec![false; 201];
        let mut ws = LcpWorkspace::new(201);
        let mut p = params(LcpMethod::Psor);
        p.max_sweeps = 3;
        let err = solve(&m, &g, &mut v, &mut stop, &p, &mut ws, 0.0, &x).unwrap_err();
        assert!(matches!(err, Error::LcpNoConvergence { sweeps: 3, .. }));
    }
}

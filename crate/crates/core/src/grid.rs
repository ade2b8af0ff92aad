//! Space-time grids.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::StoppingProblem;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    /// Geometric spacing; requires a positive lower end.
    Log,
    /// Explicit x-nodes; overrides the range.
    Custom(Vec<f64>),
}

impl Spacing {
    pub fn name(&self) -> &'static str {
        match self {
            Spacing::Uniform => "uniform",
            Spacing::Log => "log",
            Spacing::Custom(_) => "custom",
        }
    }
}

/// What to grid: node counts plus optional explicit truncation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    /// Number of time steps; the grid has `nt + 1` time nodes.
    pub nt: usize,
    /// Number of x-nodes.
    pub nx: usize,
    pub spacing: Spacing,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub margin: Option<f64>,
}

impl GridSpec {
    pub fn uniform(nt: usize, nx: usize) -> Self {
        Self {
            nt,
            nx,
            spacing: Spacing::Uniform,
            x_min: None,
            x_max: None,
            margin: None,
        }
    }

    pub fn log(nt: usize, nx: usize, x_min: f64, x_max: f64) -> Self {
        Self {
            nt,
            nx,
            spacing: Spacing::Log,
            x_min: Some(x_min),
            x_max: Some(x_max),
            margin: None,
        }
    }

    pub fn with_counts(&self, nt: Option<usize>, nx: Option<usize>) -> Self {
        let mut g = self.clone();
        if let Some(nt) = nt {
            g.nt = nt;
        }
        if let Some(nx) = nx {
            g.nx = nx;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    /// Index of the node placed on the payoff kink, if it is interior.
    pub kink: Option<usize>,
}

impl Grid {
    /// Builds the grid for `problem`, snapping the t=0 payoff crossing onto
    /// its nearest node.
    pub fn build(problem: &StoppingProblem, spec: &GridSpec) -> Result<Grid> {
        let x_c = problem.crossing_at(0.0).ok();
        Self::with_horizon(problem, spec, problem.horizon.end(), x_c)
    }

    /// One-layer grid for stationary solves.
    pub fn stationary(problem: &StoppingProblem, spec: &GridSpec) -> Result<Grid> {
        let mut g = Self::with_horizon(problem, spec, 0.0, problem.crossing_at(0.0).ok())?;
        g.t = vec![0.0];
        Ok(g)
    }

    fn with_horizon(
        problem: &StoppingProblem,
        spec: &GridSpec,
        end: f64,
        x_c: Option<f64>,
    ) -> Result<Grid> {
        let mut x = match &spec.spacing {
            Spacing::Custom(nodes) => nodes.clone(),
            spacing => {
                let (lo, hi) = problem.numeric_bounds(spec)?;
                space_nodes(spacing, lo, hi, spec.nx)?
            }
        };
        if x.len() < 3 || x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "x-grid needs at least 3 strictly increasing nodes".into(),
            ));
        }
        let d = problem.domain;
        if x[0] <= d.lower && d.lower.is_finite() || x[x.len() - 1] >= d.upper && d.upper.is_finite() {
            return Err(Error::Config(format!(
                "x-grid [{}, {}] must lie strictly inside the domain ({}, {})",
                x[0],
                x[x.len() - 1],
                d.lower,
                d.upper
            )));
        }
        let kink = x_c.and_then(|c| snap(&mut x, c));
        let t = if spec.nt == 0 {
            vec![0.0]
        } else {
            (0..=spec.nt).map(|k| end * k as f64 / spec.nt as f64).collect()
        };
        Ok(Grid { t, x, kink })
    }

    pub fn from_nodes(t: Vec<f64>, x: Vec<f64>, kink: Option<usize>) -> Grid {
        Grid { t, x, kink }
    }

    pub fn nt(&self) -> usize {
        self.t.len()
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    /// Largest x-cell width.
    pub fn dx_max(&self) -> f64 {
        self.x.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Width of the x-cell adjacent to `x` (the one containing it).
    pub fn cell_at(&self, x: f64) -> f64 {
        let i = self.locate(x);
        self.x[i + 1] - self.x[i]
    }

    pub fn dt(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }

    /// Index `i` with `x[i] <= x < x[i+1]`, clamped to valid cells.
    pub fn locate(&self, x: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&v| v <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    pub fn nearest(&self, x: f64) -> usize {
        let i = self.locate(x);
        if (x - self.x[i]).abs() <= (self.x[i + 1] - x).abs() {
            i
        } else {
            i + 1
        }
    }
}

fn space_nodes(spacing: &Spacing, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::Config("grid needs at least 3 x-nodes".into()));
    }
    let step = |k: usize| k as f64 / (n - 1) as f64;
    Ok(match spacing {
        Spacing::Uniform => (0..n).map(|k| lo + (hi - lo) * step(k)).collect(),
        Spacing::Log => {
            if !(lo > 0.0) {
                return Err(Error::Config(format!("log spacing needs x_min > 0, got {lo}")));
            }
            let (a, b) = (lo.ln(), hi.ln());
            let mut v: Vec<f64> = (0..n).map(|k| (a + (b - a) * step(k)).exp()).collect();
            v[0] = lo;
            v[n - 1] = hi;
            v
        }
        Spacing::Custom(v) => v.clone(),
    })
}

/// Moves the node nearest to `c` onto `c` when `c` is strictly interior.
fn snap(x: &mut [f64], c: f64) -> Option<usize> {
    let n = x.len();
    if !(c > x[0] && c < x[n - 1]) {
        return None;
    }
    let k = x.partition_point(|&v| v < c);
    let i = if k > 0 && (c - x[k - 1]) < (x[k] - c) { k - 1 } else { k };
    if i == 0 || i == n - 1 {
        // Snapping an edge node would move the range; leave it.
        return if x[i] == c { Some(i) } else { None };
    }
    x[i] = c;
    Some(i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snap_places_kink_on_node() {
        let mut x: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
        let i = snap(&mut x, 0.33).unwrap();
        assert_eq!(x[i], 0.33);
        assert!(x.windows(2).all(|w| w[1] > w[0]));
        assert!(snap(&mut x, 0.0).is_none());
    }

    #[test]
    fn log_nodes_hit_ends() {
        let v = space_nodes(&Spacing::Log, 0.01, 100.0, 5).unwrap();
        assert_eq!(v[0], 0.01);
        assert_eq!(v[4], 100.0);
        assert!((v[2] - 1.0).abs() < 1e-12);
        assert!(space_nodes(&Spacing::Log, 0.0, 1.0, 5).is_err());
    }

    #[test]
    fn locate_clamps() {
        let g = Grid::from_nodes(vec![0.0], vec![0.0, 1.0, 2.0, 3.0], None);
        assert_eq!(g.locate(-1.0), 0);
        assert_eq!(g.locate(1.5), 1);
        assert_eq!(g.locate(3.0), 2);
        assert_eq!(g.nearest(1.6), 2);
    }
}

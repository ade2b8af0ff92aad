//! Free-boundary extraction and smooth-fit measurement.

use serde::Serialize;

use super::{Region, ValueSurface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryMode {
    /// Boundary on the last stopping node.
    Snapped,
    /// Sub-cell estimate from the continuation side.
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerIssue {
    pub t: f64,
    pub x: f64,
    pub kind: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeBoundary {
    pub t: Vec<f64>,
    pub x_c: Vec<f64>,
    /// Refined lower boundary; `None` when only the grid edge stops.
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    pub lower_node: Vec<Option<f64>>,
    pub upper_node: Vec<Option<f64>>,
    /// Layers whose continuation section is empty.
    pub empty: Vec<bool>,
    pub valid: bool,
    pub issues: Vec<LayerIssue>,
    /// Largest refined move between consecutive layers.
    pub max_jump: f64,
    /// `max_jump` in units of the local cell width.
    pub max_jump_cells: f64,
    #[serde(skip)]
    pub x_nodes: Vec<f64>,
}

impl FreeBoundary {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn series(&self, mode: BoundaryMode) -> (&[Option<f64>], &[Option<f64>]) {
        match mode {
            BoundaryMode::Snapped => (&self.lower_node, &self.upper_node),
            BoundaryMode::Refined => (&self.lower, &self.upper),
        }
    }

    /// Width of the grid cell containing `x`.
    pub fn cell_at(&self, x: f64) -> f64 {
        let n = self.x_nodes.len();
        if n < 2 {
            return 0.0;
        }
        let k = self.x_nodes.partition_point(|&v| v <= x).clamp(1, n - 1);
        self.x_nodes[k] - self.x_nodes[k - 1]
    }

    /// Boundaries at calendar time `t`: linear between layers for refined
    /// values, the layer at or before `t` for snapped ones. Beyond the last
    /// layer the last values persist.
    pub fn at(&self, t: f64, mode: BoundaryMode) -> (Option<f64>, Option<f64>) {
        let (lo, up) = self.series(mode);
        let n = self.t.len();
        if n == 1 || t <= self.t[0] {
            return (lo[0], up[0]);
        }
        if t >= self.t[n - 1] {
            return (lo[n - 1], up[n - 1]);
        }
        let k = self.t.partition_point(|&s| s <= t) - 1;
        match mode {
            BoundaryMode::Snapped => (lo[k], up[k]),
            BoundaryMode::Refined => {
                let w = (t - self.t[k]) / (self.t[k + 1] - self.t[k]);
                let mix = |a: Option<f64>, b: Option<f64>| match (a, b) {
                    (Some(a), Some(b)) => Some(a + w * (b - a)),
                    (a, b) => if w < 0.5 { a } else { b },
                };
                (mix(lo[k], lo[k + 1]), mix(up[k], up[k + 1]))
            }
        }
    }

    /// Copy with both series shifted inward (towards `x_c`) by `delta`.
    pub fn shifted_inward(&self, delta: f64) -> FreeBoundary {
        let mut b = self.clone();
        for s in [&mut b.lower, &mut b.lower_node] {
            for v in s.iter_mut().flatten() {
                *v += delta;
            }
        }
        for s in [&mut b.upper, &mut b.upper_node] {
            for v in s.iter_mut().flatten() {
                *v -= delta;
            }
        }
        b
    }
}

/// Per layer: the outermost stopping nodes bracketing the continuation
/// nodes. A stopping node inside the bracket, or a bracket that misses
/// `x_c`, marks the boundary invalid.
pub fn extract_boundaries(surface: &ValueSurface, x_c: impl Fn(f64) -> f64) -> FreeBoundary {
    let x = &surface.grid.x;
    let nx = x.len();
    let nt = surface.nt();
    let mut fb = FreeBoundary {
        t: surface.grid.t.clone(),
        x_c: Vec::with_capacity(nt),
        lower: Vec::with_capacity(nt),
        upper: Vec::with_capacity(nt),
        lower_node: Vec::with_capacity(nt),
        upper_node: Vec::with_capacity(nt),
        empty: Vec::with_capacity(nt),
        valid: true,
        issues: Vec::new(),
        max_jump: 0.0,
        max_jump_cells: 0.0,
        x_nodes: x.clone(),
    };
    for n in 0..nt {
        let t = surface.grid.t[n];
        let xc = x_c(t);
        fb.x_c.push(xc);
        let reg = surface.region_layer(n);
        let gap: Vec<f64> = surface
            .layer(n)
            .iter()
            .zip(surface.obstacle_layer(n))
            .map(|(v, g)| (v - g).max(0.0))
            .collect();
        let first = reg.iter().position(|&r| r == Region::Continue);
        let last = reg.iter().rposition(|&r| r == Region::Continue);
        let (Some(cl), Some(cu)) = (first, last) else {
            let k = surface.grid.nearest(xc);
            for s in [&mut fb.lower, &mut fb.upper, &mut fb.lower_node, &mut fb.upper_node] {
                s.push(Some(x[k]));
            }
            fb.empty.push(true);
            continue;
        };
        fb.empty.push(false);
        for i in cl..=cu {
            if reg[i] == Region::Stop {
                fb.valid = false;
                fb.issues.push(LayerIssue { t, x: x[i], kind: "stopping node inside continuation band" });
            }
        }
        // `None` when the band reaches (or is only closed by) a grid edge.
        let il = cl.checked_sub(1).filter(|&i| i > 0);
        let iu = Some(cu + 1).filter(|&i| i < nx - 1);
        let lo_x = il.map_or(x[0], |i| x[i]);
        let up_x = iu.map_or(x[nx - 1], |i| x[i]);
        if lo_x > xc || up_x < xc {
            fb.valid = false;
            fb.issues.push(LayerIssue { t, x: xc, kind: "continuation band misses the payoff crossing" });
        }
        if let Some(il) = il {
            fb.lower_node.push(Some(x[il]));
            fb.lower.push(Some(refine(x, &gap, il, 1)));
        } else {
            fb.lower_node.push(None);
            fb.lower.push(None);
        }
        if let Some(iu) = iu {
            fb.upper_node.push(Some(x[iu]));
            fb.upper.push(Some(refine(x, &gap, iu, -1)));
        } else {
            fb.upper_node.push(None);
            fb.upper.push(None);
        }
    }
    for series in [&fb.lower, &fb.upper] {
        for w in series.windows(2) {
            if let (Some(a), Some(b)) = (w[0], w[1]) {
                let jump = (b - a).abs();
                fb.max_jump = fb.max_jump.max(jump);
                let cell = fb.cell_at(0.5 * (a + b));
                if cell > 0.0 {
                    fb.max_jump_cells = fb.max_jump_cells.max(jump / cell);
                }
            }
        }
    }
    fb
}

/// Near a free boundary `V - g` vanishes quadratically, so `sqrt(V - g)` is
/// close to linear; extrapolate its root. The first continuation node sits
/// against the discrete contact and its gap is biased low, so the line goes
/// through the second and third nodes when they exist.
fn refine(x: &[f64], gap: &[f64], stop: usize, dir: isize) -> f64 {
    let at = |k: isize| {
        let i = stop as isize + k * dir;
        (i >= 0 && (i as usize) < x.len()).then_some(i as usize)
    };
    let (Some(i1), Some(i2)) = (at(1), at(2)) else { return x[stop] };
    let (a, b) = match at(3) {
        Some(i3) if gap[i3] > 0.0 => (i2, i3),
        _ => (i1, i2),
    };
    let (d1, d2) = (gap[a].sqrt(), gap[b].sqrt());
    if gap[b] <= 0.0 || d2 <= d1 {
        return x[stop];
    }
    let root = x[a] - d1 * (x[b] - x[a]) / (d2 - d1);
    // The discrete contact set lags the true one by up to a cell, so the
    // estimate may fall one cell past the stopping node.
    let h = (x[i1] - x[stop]).abs();
    let (lo, hi) = if dir > 0 { (x[stop] - h, x[i1]) } else { (x[i1], x[stop] + h) };
    root.clamp(lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothFitGap {
    pub t: Vec<f64>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

impl SmoothFitGap {
    pub fn max(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.upper)
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// One-sided difference quotient of `V` across one cell from the refined
/// boundary into the continuation region, minus the payoff slope there.
/// `V` is read off a quadratic through the three nearest continuation nodes;
/// `g` off a quadratic through the stopping node and its neighbours.
pub fn smooth_fit_gap(surface: &ValueSurface, boundary: &FreeBoundary) -> SmoothFitGap {
    let x = &surface.grid.x;
    let nx = x.len();
    let mut out = SmoothFitGap {
        t: boundary.t.clone(),
        lower: Vec::with_capacity(boundary.len()),
        upper: Vec::with_capacity(boundary.len()),
    };
    for n in 0..boundary.len() {
        if boundary.empty[n] {
            out.lower.push(Some(0.0));
            out.upper.push(Some(0.0));
            continue;
        }
        let v = surface.layer(n);
        let g = surface.obstacle_layer(n);
        let reg = surface.region_layer(n);
        let side = |b: Option<f64>, node: Option<f64>, dir: isize| -> Option<f64> {
            let b = b?;
            let node = node?;
            let s = x.partition_point(|&xi| xi < node);
            let idx = |k: isize| -> Option<usize> {
                let j = s as isize + k * dir;
                (j >= 0 && (j as usize) < nx).then_some(j as usize)
            };
            let (c1, c2, c3) = (idx(1)?, idx(2)?, idx(3)?);
            if [c1, c2, c3].iter().any(|&c| reg[c] != Region::Continue) {
                return None;
            }
            let (o0, o1, o2) = (idx(-1)?, idx(0)?, idx(1)?);
            let h = (x[c1] - x[s]).abs();
            let q = |p: f64| lagrange(x, v, [c1, c2, c3], p);
            let gb = lagrange(x, g, [o0, o1, o2], b);
            let gx = lagrange_slope(x, g, [o0, o1, o2], b);
            let step = h * dir as f64;
            Some((q(b + step) - gb) / step - gx)
        };
        let lo = side(boundary.lower[n], boundary.lower_node[n], 1);
        let up = side(boundary.upper[n], boundary.upper_node[n], -1);
        out.lower.push(lo);
        out.upper.push(up);
    }
    out
}

fn lagrange(x: &[f64], y: &[f64], k: [usize; 3], p: f64) -> f64 {
    let [a, b, c] = k;
    let (xa, xb, xc) = (x[a], x[b], x[c]);
    y[a] * (p - xb) * (p - xc) / ((xa - xb) * (xa - xc))
        + y[b] * (p - xa) * (p - xc) / ((xb - xa) * (xb - xc))
        + y[c] * (p - xa) * (p - xb) / ((xc - xa) * (xc - xb))
}

fn lagrange_slope(x: &[f64], y: &[f64], k: [usize; 3], p: f64) -> f64 {
    let [a, b, c] = k;
    let (xa, xb, xc) = (x[a], x[b], x[c]);
    y[a] * ((p - xb) + (p - xc)) / ((xa - xb) * (xa - xc))
        + y[b] * ((p - xa) + (p - xc)) / ((xb - xa) * (xb - xc))
        + y[c] * ((p - xa) + (p - xb)) / ((xc - xa) * (xc - xb))
}

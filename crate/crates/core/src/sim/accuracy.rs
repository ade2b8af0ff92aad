//! Decision accuracy conditional on the stopping time.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::Branch;
use crate::solver::{BoundaryMode, FreeBoundary};

use super::stats::{cochran_armitage, wilson, TrendTest};
use super::PathEnsemble;

/// Bins with fewer stops than this are reported absent.
pub const MIN_BIN_COUNT: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyBin {
    pub t_bin_lo: f64,
    pub t_bin_hi: f64,
    /// `a` picks the branch for `θ >= 0`, `b` the other.
    pub alt: char,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Belief at the boundary at the bin midpoint: `b̄` for `a`, `1 - b̲` for `b`.
    pub theory: Option<f64>,
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyProfile {
    pub version: u32,
    pub bins: Vec<AccuracyBin>,
    pub trend_a: Option<TrendTest>,
    pub trend_b: Option<TrendTest>,
    /// Both alternatives pooled per bin.
    pub trend: Option<TrendTest>,
    /// Decisions used: stops at a boundary, not censored, capped or cut
    /// short by a deadline.
    pub decisions: usize,
}

/// Bins decisions by stopping time into `n_bins` equal-count bins and
/// compares the chosen alternative with the drawn parameter.
pub fn accuracy_profile(ensemble: &PathEnsemble, boundary: &FreeBoundary, n_bins: usize) -> Result<AccuracyProfile> {
    if n_bins == 0 {
        return Err(Error::Config("need at least one bin".into()));
    }
    let mut used: Vec<(f64, Branch, bool)> = Vec::new();
    for p in &ensemble.paths {
        let theta = p
            .theta
            .ok_or_else(|| Error::Precondition("accuracy needs a learning scenario with drawn parameters".into()))?;
        if p.censored || p.capped || p.deadline_hit || p.tau <= 0.0 {
            continue;
        }
        if let Some(alt) = p.alternative {
            let correct = (alt == Branch::A) == (theta >= 0.0);
            used.push((p.tau, alt, correct));
        }
    }
    if used.is_empty() {
        return Err(Error::Precondition("no decisions to profile".into()));
    }
    let mut taus: Vec<f64> = used.iter().map(|u| u.0).collect();
    taus.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (0..=n_bins)
        .map(|k| taus[((k * (taus.len() - 1)) as f64 / n_bins as f64).round() as usize])
        .collect();
    edges[0] = 0.0;
    edges.dedup();
    let nb = edges.len() - 1;
    let bin_of = |t: f64| edges[1..nb].partition_point(|&e| e < t);
    let mut counts = vec![[(0usize, 0usize); 2]; nb];
    for &(t, alt, ok) in &used {
        let k = bin_of(t);
        let a = if alt == Branch::A { 0 } else { 1 };
        counts[k][a].0 += 1;
        counts[k][a].1 += ok as usize;
    }
    let mut bins = Vec::new();
    for (k, c) in counts.iter().enumerate() {
        let mid = 0.5 * (edges[k] + edges[k + 1]);
        let (lo, up) = boundary.at(mid, BoundaryMode::Refined);
        for (a, alt) in [(0, 'a'), (1, 'b')] {
            let (n, ok) = c[a];
            let (ci_lo, ci_hi) = wilson(ok, n, 0.95);
            bins.push(AccuracyBin {
                t_bin_lo: edges[k],
                t_bin_hi: edges[k + 1],
                alt,
                count: n,
                correct: ok,
                accuracy: if n > 0 { ok as f64 / n as f64 } else { f64::NAN },
                ci_lo,
                ci_hi,
                theory: if a == 0 { up } else { lo.map(|v| 1.0 - v) },
                present: n >= MIN_BIN_COUNT,
            });
        }
    }
    let trend_for = |sel: &dyn Fn(usize) -> (usize, usize)| {
        let mut k = Vec::new();
        let mut n = Vec::new();
        let mut s = Vec::new();
        for b in 0..nb {
            let (m, ok) = sel(b);
            if m >= MIN_BIN_COUNT {
                k.push(ok);
                n.push(m);
                s.push(0.5 * (edges[b] + edges[b + 1]));
            }
        }
        cochran_armitage(&k, &n, &s)
    };
    Ok(AccuracyProfile {
        version: crate::diagnostics::REPORT_VERSION,
        trend_a: trend_for(&|b| (counts[b][0].0, counts[b][0].1)),
        trend_b: trend_for(&|b| (counts[b][1].0, counts[b][1].1)),
        trend: trend_for(&|b| (counts[b][0].0 + counts[b][1].0, counts[b][0].1 + counts[b][1].1)),
        decisions: used.len(),
        bins,
    })
}

//! Artifact formats: CSV tables, the STPF1 binary surface format, JSON
//! reports and the run manifest.
//!
//! Floats are written in Rust's shortest round-trip form, so every CSV
//! parses back to the exact values written.

pub mod binary;
pub mod manifest;

pub use binary::{read_surface_binary, write_surface_binary, MAGIC};
pub use manifest::{Check, RunManifest};

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::Branch;
use crate::sim::{AccuracyBin, PathEnsemble};
use crate::solver::{FreeBoundary, Region, ValueSurface};

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("{what}: cannot parse `{s}` as a number")))
}

fn parse_opt(s: &str, what: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(s, what).map(Some)
    }
}

fn region_name(r: Region) -> &'static str {
    match r {
        Region::Continue => "continue",
        Region::Stop => "stop",
    }
}

fn check_header(rdr: &mut csv::Reader<impl Read>, want: &[&str]) -> Result<bool> {
    let h = rdr.headers()?;
    let got: Vec<&str> = h.iter().collect();
    if got.len() >= want.len() && got[..want.len()] == *want {
        Ok(got.len() > want.len())
    } else {
        Err(Error::Format(format!("expected header {want:?}, got {got:?}")))
    }
}

/// `t,x,value,region,residual[,action]`, one row per node, t-major.
pub fn write_surface_csv(surface: &ValueSurface, w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let with_action = surface.action.is_some();
    let mut header = vec!["t", "x", "value", "region", "residual"];
    if with_action {
        header.push("action");
    }
    wr.write_record(&header)?;
    for n in 0..surface.nt() {
        for i in 0..surface.nx() {
            let k = surface.idx(n, i);
            let mut row = vec![
                surface.grid.t[n].to_string(),
                surface.grid.x[i].to_string(),
                surface.values[k].to_string(),
                region_name(surface.region[k]).to_string(),
                surface.residual[k].to_string(),
            ];
            if let Some(a) = &surface.action {
                row.push(match surface.region[k] {
                    Region::Continue => surface.action_names.get(a[k] as usize).cloned().unwrap_or_default(),
                    Region::Stop => String::new(),
                });
            }
            wr.write_record(&row)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// A surface CSV read back.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceTable {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub region: Vec<Region>,
    pub residual: Vec<f64>,
    pub action: Option<Vec<String>>,
}

pub fn read_surface_csv(r: impl Read) -> Result<SurfaceTable> {
    let mut rdr = csv::Reader::from_reader(r);
    let with_action = check_header(&mut rdr, &["t", "x", "value", "region", "residual"])?;
    let mut out = SurfaceTable {
        t: Vec::new(),
        x: Vec::new(),
        values: Vec::new(),
        region: Vec::new(),
        residual: Vec::new(),
        action: with_action.then(Vec::new),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let t = parse_f64(&rec[0], "t")?;
        let x = parse_f64(&rec[1], "x")?;
        if out.t.last() != Some(&t) {
            out.t.push(t);
        }
        if out.t.len() == 1 {
            out.x.push(x);
        }
        out.values.push(parse_f64(&rec[2], "value")?);
        out.region.push(match &rec[3] {
            "continue" => Region::Continue,
            "stop" => Region::Stop,
            other => return Err(Error::Format(format!("unknown region `{other}`"))),
        });
        out.residual.push(parse_f64(&rec[4], "residual")?);
        if let Some(a) = &mut out.action {
            a.push(rec.get(5).unwrap_or("").to_string());
        }
    }
    if out.t.len() * out.x.len() != out.values.len() {
        return Err(Error::Format("surface rows do not form a t-by-x lattice".into()));
    }
    Ok(out)
}

/// `t,b_lower,b_upper` from the refined series; missing boundaries are
/// empty cells.
pub fn write_boundary_csv(b: &FreeBoundary, w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "b_lower", "b_upper"])?;
    for n in 0..b.len() {
        wr.write_record([b.t[n].to_string(), opt(b.lower[n]), opt(b.upper[n])])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryTable {
    pub t: Vec<f64>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

impl BoundaryTable {
    /// Boundary usable as a stopping rule on the given x-nodes. Both the
    /// snapped and refined series carry the file's values.
    pub fn into_boundary(self, x_nodes: Vec<f64>) -> FreeBoundary {
        let n = self.t.len();
        FreeBoundary {
            x_c: vec![f64::NAN; n],
            lower_node: self.lower.clone(),
            upper_node: self.upper.clone(),
            empty: vec![false; n],
            valid: true,
            issues: Vec::new(),
            max_jump: 0.0,
            max_jump_cells: 0.0,
            t: self.t,
            lower: self.lower,
            upper: self.upper,
            x_nodes,
        }
    }
}

pub fn read_boundary_csv(r: impl Read) -> Result<BoundaryTable> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &["t", "b_lower", "b_upper"])?;
    let mut out = BoundaryTable::default();
    for rec in rdr.records() {
        let rec = rec?;
        out.t.push(parse_f64(&rec[0], "t")?);
        out.lower.push(parse_opt(&rec[1], "b_lower")?);
        out.upper.push(parse_opt(&rec[2], "b_upper")?);
    }
    if out.t.is_empty() {
        return Err(Error::Format("boundary file has no rows".into()));
    }
    Ok(out)
}

fn alt_name(a: Option<Branch>) -> &'static str {
    match a {
        Some(Branch::A) => "a",
        Some(Branch::B) => "b",
        None => "",
    }
}

/// `path_id,tau,x_tau,payoff,alternative,deadline_hit`.
pub fn write_ensemble_csv(e: &PathEnsemble, w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["path_id", "tau", "x_tau", "payoff", "alternative", "deadline_hit"])?;
    for p in &e.paths {
        wr.write_record([
            p.path_id.to_string(),
            p.tau.to_string(),
            p.x_tau.to_string(),
            p.payoff.to_string(),
            alt_name(p.alternative).to_string(),
            p.deadline_hit.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRow {
    pub path_id: u64,
    pub tau: f64,
    pub x_tau: f64,
    pub payoff: f64,
    pub alternative: Option<Branch>,
    pub deadline_hit: bool,
}

pub fn read_ensemble_csv(r: impl Read) -> Result<Vec<EnsembleRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &["path_id", "tau", "x_tau", "payoff", "alternative", "deadline_hit"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(EnsembleRow {
            path_id: rec[0].parse().map_err(|_| Error::Format(format!("bad path_id `{}`", &rec[0])))?,
            tau: parse_f64(&rec[1], "tau")?,
            x_tau: parse_f64(&rec[2], "x_tau")?,
            payoff: parse_f64(&rec[3], "payoff")?,
            alternative: match &rec[4] {
                "a" => Some(Branch::A),
                "b" => Some(Branch::B),
                "" => None,
                other => return Err(Error::Format(format!("unknown alternative `{other}`"))),
            },
            deadline_hit: rec[5].parse().map_err(|_| Error::Format(format!("bad flag `{}`", &rec[5])))?,
        });
    }
    Ok(out)
}

/// `t_bin_lo,t_bin_hi,alt,accuracy,ci_lo,ci_hi,count`; absent bins keep
/// their counts with an empty accuracy.
pub fn write_profile_csv(bins: &[AccuracyBin], w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t_bin_lo", "t_bin_hi", "alt", "accuracy", "ci_lo", "ci_hi", "count"])?;
    for b in bins {
        let acc = if b.present { b.accuracy.to_string() } else { String::new() };
        wr.write_record([
            b.t_bin_lo.to_string(),
            b.t_bin_hi.to_string(),
            b.alt.to_string(),
            acc,
            b.ci_lo.to_string(),
            b.ci_hi.to_string(),
            b.count.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRow {
    pub t_bin_lo: f64,
    pub t_bin_hi: f64,
    pub alt: char,
    pub accuracy: Option<f64>,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub count: usize,
}

pub fn read_profile_csv(r: impl Read) -> Result<Vec<ProfileRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &["t_bin_lo", "t_bin_hi", "alt", "accuracy", "ci_lo", "ci_hi", "count"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(ProfileRow {
            t_bin_lo: parse_f64(&rec[0], "t_bin_lo")?,
            t_bin_hi: parse_f64(&rec[1], "t_bin_hi")?,
            alt: rec[2].chars().next().ok_or_else(|| Error::Format("empty alt".into()))?,
            accuracy: parse_opt(&rec[3], "accuracy")?,
            ci_lo: parse_f64(&rec[4], "ci_lo")?,
            ci_hi: parse_f64(&rec[5], "ci_hi")?,
            count: rec[6].parse().map_err(|_| Error::Format(format!("bad count `{}`", &rec[6])))?,
        });
    }
    Ok(out)
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

/// Writes `f`'s output to `path` through a buffered file.
pub fn write_file(path: &Path, f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

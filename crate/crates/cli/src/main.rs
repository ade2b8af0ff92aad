use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use stopflow_core::catalog::{self, CatalogModel};
use stopflow_core::config;
use stopflow_core::diagnostics::{classify_environment, compare_problems, controlled_monotonicity_check, CompareMode};
use stopflow_core::io::{self, RunManifest};
use stopflow_core::sim::{self, accuracy_profile, simulate_stopped, Scenario, SimParams, StopRule};
use stopflow_core::verify::{self, VerifyOptions};
use stopflow_core::{
    smooth_fit_gap, solve_controlled, BoundaryMode, FreeBoundary, Grid, GridSpec, Region, SolverSettings, StoppingProblem,
    ValueSurface,
};

#[derive(Parser)]
#[command(name = "stopflow", version, about = "Nonstationary optimal stopping: solve, compare, simulate, verify")]
struct Cli {
    /// Directory for artifacts and the run manifest.
    #[arg(long, global = true, default_value = "stopflow-out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid overrides, e.g. `nx=400,nt=200`.
    #[arg(long, global = true, value_parser = parse_grid)]
    grid: Option<GridOverride>,
    /// Exit 1 when any check fails.
    #[arg(long, global = true)]
    strict_exit: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, Default)]
struct GridOverride {
    nx: Option<usize>,
    nt: Option<usize>,
}

fn parse_grid(s: &str) -> Result<GridOverride, String> {
    let mut g = GridOverride::default();
    for part in s.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| format!("expected key=value, got `{part}`"))?;
        let v: usize = v.trim().parse().map_err(|_| format!("`{v}` is not a count"))?;
        match k.trim() {
            "nx" => g.nx = Some(v),
            "nt" => g.nt = Some(v),
            other => return Err(format!("unknown grid key `{other}` (nx, nt)")),
        }
    }
    Ok(g)
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem and extract its free boundary.
    Solve {
        /// Config file, or `catalog:<name>`.
        config: String,
        /// Also write the STPF1 binary surface.
        #[arg(long)]
        binary: bool,
    },
    /// Solve two problems on one grid and check the predicted ordering.
    Compare {
        lo: String,
        hi: String,
        /// flow_discount | volatility | drift | stopping_payoff
        #[arg(long, default_value = "flow_discount")]
        mode: String,
    },
    /// Monte Carlo paths stopped at a boundary.
    Simulate {
        config: String,
        /// Boundary CSV to stop at; solved from the config when absent.
        #[arg(long)]
        boundary: Option<PathBuf>,
        #[arg(short, long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long)]
        x0: Option<f64>,
        /// Time cap for perpetual problems.
        #[arg(long, default_value_t = 100.0)]
        t_max: f64,
        /// Time bins of the accuracy profile (learning models only).
        #[arg(long, default_value_t = 6)]
        bins: usize,
        #[arg(long, value_enum, default_value_t = Mode::Refined)]
        mode: Mode,
    },
    /// Run a verification suite, or `all`.
    Verify { suite: String },
    /// Built-in models.
    Catalog {
        #[command(subcommand)]
        action: CatalogCmd,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Snapped,
    Refined,
}

#[derive(Subcommand)]
enum CatalogCmd {
    List,
    /// Print the canonical config document.
    Show {
        name: String,
        #[arg(long)]
        toml: bool,
    },
    /// List verification suites.
    Suites,
}

/// Bad invocation or input: exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<stopflow_core::Error>() {
        Some(stopflow_core::Error::Config(_) | stopflow_core::Error::Syntax { .. } | stopflow_core::Error::Io(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    sim::init_global_pool();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(pass) if !pass && cli.strict_exit => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Catalog { action } => {
            catalog_cmd(action)?;
            Ok(true)
        }
        Command::Solve { config, binary } => cmd_solve(cli, config, *binary),
        Command::Compare { lo, hi, mode } => cmd_compare(cli, lo, hi, mode),
        Command::Simulate { config, boundary, n, dt, x0, t_max, bins, mode } => {
            let params = SimParams { n_paths: *n, seed: cli.seed.unwrap_or(0), dt_sim: *dt, x0: *x0, t_max: *t_max };
            let mode = match mode {
                Mode::Snapped => BoundaryMode::Snapped,
                Mode::Refined => BoundaryMode::Refined,
            };
            cmd_simulate(cli, config, boundary.as_deref(), params, *bins, mode)
        }
        Command::Verify { suite } => cmd_verify(cli, suite),
    }
}

fn catalog_cmd(action: &CatalogCmd) -> Result<()> {
    let text = match action {
        CatalogCmd::List => catalog::names()
            .into_iter()
            .map(|name| format!("{name:<36} {}\n", catalog::describe(name).unwrap_or("")))
            .collect(),
        CatalogCmd::Show { name, toml } => {
            let m = catalog::load(name)?;
            if *toml {
                config::to_toml(&m.problem, None)?
            } else {
                config::to_json(&m.problem, None) + "\n"
            }
        }
        CatalogCmd::Suites => verify::suite_names()
            .into_iter()
            .map(|name| format!("{name:<18} {}\n", verify::describe(name).unwrap_or("")))
            .collect(),
    };
    // A closed pipe (`| head`) is not an error.
    match std::io::Write::write_all(&mut std::io::stdout().lock(), text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

struct Loaded {
    source: String,
    problem: StoppingProblem,
    settings: SolverSettings,
    model: Option<CatalogModel>,
}

fn load(source: &str) -> Result<Loaded> {
    if let Some(name) = source.strip_prefix("catalog:") {
        let m = catalog::load(name)?;
        return Ok(Loaded { source: source.into(), problem: m.problem.clone(), settings: SolverSettings::default(), model: Some(m) });
    }
    let path = Path::new(source);
    if !path.is_file() {
        bail!(Usage(format!("config not found: {source}")));
    }
    let c = config::read_config(path).with_context(|| format!("reading {source}"))?;
    Ok(Loaded { source: source.into(), problem: c.problem, settings: c.settings.unwrap_or_default(), model: None })
}

fn grid_spec(cli: &Cli, p: &StoppingProblem) -> GridSpec {
    let g = cli.grid.unwrap_or_default();
    p.grid.with_counts(g.nt, g.nx)
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    Ok(&cli.out)
}

fn ext(cli: &Cli) -> &'static str {
    match cli.format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn surface_json(s: &ValueSurface) -> serde_json::Value {
    let region: Vec<&str> = s
        .region
        .iter()
        .map(|r| match r {
            Region::Continue => "continue",
            Region::Stop => "stop",
        })
        .collect();
    json!({
        "t": s.grid.t,
        "x": s.grid.x,
        "values": s.values,
        "region": region,
        "residual": s.residual,
        "action_names": s.action_names,
        "action": s.action,
    })
}

fn boundary_json(b: &FreeBoundary) -> serde_json::Value {
    json!({ "t": b.t, "b_lower": b.lower, "b_upper": b.upper })
}

fn write_json_value(path: &Path, v: &serde_json::Value) -> Result<()> {
    std::fs::write(path, io::to_json_string(v)?)?;
    Ok(())
}

fn cmd_solve(cli: &Cli, source: &str, binary: bool) -> Result<bool> {
    let start = Instant::now();
    let l = load(source)?;
    let dir = out_dir(cli)?;
    let spec = grid_spec(cli, &l.problem);
    let (grid, surface, boundary) = verify::solve_problem(&l.problem, &spec, &l.settings)?;
    let mut m = RunManifest::new("solve");
    m.configs.push(l.source.clone());
    m.grid = Some(spec.clone());
    m.settings = Some(l.settings);

    let surface_path = dir.join(format!("surface.{}", ext(cli)));
    let boundary_path = dir.join(format!("boundary.{}", ext(cli)));
    match cli.format {
        Format::Csv => {
            io::write_file(&surface_path, |w| io::write_surface_csv(&surface, w))?;
            io::write_file(&boundary_path, |w| io::write_boundary_csv(&boundary, w))?;
        }
        Format::Json => {
            write_json_value(&surface_path, &surface_json(&surface))?;
            write_json_value(&boundary_path, &boundary_json(&boundary))?;
        }
    }
    m.outputs.extend([surface_path, boundary_path]);
    if binary {
        let p = dir.join("surface.stpf");
        io::write_file(&p, |w| io::write_surface_binary(&surface, w))?;
        m.outputs.push(p);
    }

    let terminal = !l.problem.horizon.is_perpetual();
    let inv = surface.check_invariants(&l.settings, terminal);
    let fit = smooth_fit_gap(&surface, &boundary);
    let verdict = if l.problem.is_controlled() {
        // The stationary grid has one layer; classify on the time grid.
        let g = if grid.nt() > 1 { grid.clone() } else { Grid::build(&l.problem, &spec)? };
        controlled_monotonicity_check(&solve_controlled(&l.problem, &g, &l.settings)?, &l.problem)
    } else {
        classify_environment(&l.problem, &surface)
    };
    let summary = json!({
        "version": 1,
        "problem": l.problem.name,
        "nt": grid.nt(),
        "nx": grid.nx(),
        "boundary_t0": { "lower": boundary.lower[0], "upper": boundary.upper[0] },
        "boundary_valid": boundary.valid,
        "boundary_issues": boundary.issues.len(),
        "max_jump": boundary.max_jump,
        "max_jump_cells": boundary.max_jump_cells,
        "smooth_fit_max_gap": fit.max(),
        "invariants": inv,
        "environment": verdict,
    });
    let summary_path = dir.join("solve.json");
    write_json_value(&summary_path, &summary)?;
    m.outputs.push(summary_path);

    println!(
        "{}: nt={} nx={} b_lower(0)={} b_upper(0)={} {:?}",
        l.problem.name,
        grid.nt(),
        grid.nx(),
        fmt_opt(boundary.lower[0]),
        fmt_opt(boundary.upper[0]),
        verdict.classification
    );
    m.check("invariants", inv.pass, format!("min gap {:.2e}, max residual {:.2e}", inv.min_gap, inv.max_residual));
    m.check("boundary", boundary.valid, format!("{} layer issues", boundary.issues.len()));
    finish(m, dir, start)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.6}"))
}

fn finish(m: RunManifest, dir: &Path, start: Instant) -> Result<bool> {
    let pass = m.pass;
    for c in m.checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {}: {}", c.name, c.detail);
    }
    let path = m.finish(dir, start.elapsed().as_secs_f64())?;
    println!("manifest: {}", path.display());
    Ok(pass)
}

fn cmd_compare(cli: &Cli, lo: &str, hi: &str, mode: &str) -> Result<bool> {
    let start = Instant::now();
    let mode: CompareMode = mode.parse()?;
    let (a, b) = (load(lo)?, load(hi)?);
    let dir = out_dir(cli)?;
    let spec = grid_spec(cli, &a.problem);
    let rep = compare_problems(&a.problem, &b.problem, mode, Some(&spec), &a.settings)?;
    let mut m = RunManifest::new("compare");
    m.configs.extend([a.source, b.source]);
    m.grid = Some(spec);
    m.settings = Some(a.settings);
    let path = dir.join("compare.json");
    io::write_json(&path, &rep)?;
    m.outputs.push(path);
    println!(
        "{:?} {} vs {}: dominance {:.4}, worst {:.2e}, inclusion {}, hypothesis {:?}",
        rep.mode, rep.lo, rep.hi, rep.value_dominance, rep.worst_violation, rep.region_inclusion, rep.hypothesis_check
    );
    m.check("compare", rep.pass, format!("worst {:.2e}, inclusion {}", rep.worst_violation, rep.region_inclusion));
    finish(m, dir, start)
}

fn cmd_simulate(
    cli: &Cli,
    source: &str,
    boundary_file: Option<&Path>,
    params: SimParams,
    bins: usize,
    mode: BoundaryMode,
) -> Result<bool> {
    let start = Instant::now();
    if params.n_paths == 0 {
        bail!(Usage("simulate needs at least one path (--n)".into()));
    }
    let l = load(source)?;
    let dir = out_dir(cli)?;
    let spec = grid_spec(cli, &l.problem);
    let mut m = RunManifest::new("simulate");
    m.configs.push(l.source.clone());
    m.grid = Some(spec.clone());
    m.settings = Some(l.settings);
    m.seeds.push(params.seed);

    let (boundary, pde) = match boundary_file {
        Some(p) => {
            let file = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            let table = io::read_boundary_csv(file)?;
            let x = Grid::build(&l.problem, &spec)?.x;
            m.configs.push(p.display().to_string());
            (table.into_boundary(x), None)
        }
        None => {
            let (_, s, b) = verify::solve_problem(&l.problem, &spec, &l.settings)?;
            let x0 = params.x0.or(l.problem.x0);
            let pde = x0.map(|x| (s.value_at(0, x), s.scale));
            (b, pde)
        }
    };
    let scenario = match &l.model {
        Some(model) => Scenario::from_catalog(model),
        None => Scenario::plain(&l.problem),
    };
    let e = simulate_stopped(scenario, StopRule::Boundary { boundary: &boundary, mode }, &params)?;
    let (mean, se) = e.value();

    let ens_path = dir.join(format!("ensemble.{}", ext(cli)));
    match cli.format {
        Format::Csv => io::write_file(&ens_path, |w| io::write_ensemble_csv(&e, w))?,
        Format::Json => io::write_json(&ens_path, &e)?,
    }
    m.outputs.push(ens_path);

    let profile = if scenario.learning.is_some() && mode == BoundaryMode::Refined {
        let prof = accuracy_profile(&e, &boundary, bins)?;
        let p = dir.join(format!("profile.{}", ext(cli)));
        match cli.format {
            Format::Csv => io::write_file(&p, |w| io::write_profile_csv(&prof.bins, w))?,
            Format::Json => io::write_json(&p, &prof)?,
        }
        m.outputs.push(p);
        Some(prof)
    } else {
        None
    };

    let summary = json!({
        "version": 1,
        "problem": l.problem.name,
        "n_paths": e.n_paths,
        "seed": e.seed,
        "dt_sim": e.dt_sim,
        "x0": e.x0,
        "value": mean,
        "std_err": se,
        "censored": e.censored,
        "capped": e.capped,
        "pde_value": pde.map(|p| p.0),
        "trend": profile.as_ref().and_then(|p| p.trend),
    });
    let sp = dir.join("simulate.json");
    write_json_value(&sp, &summary)?;
    m.outputs.push(sp);
    println!("{}: value {mean:.6} ± {se:.6} ({} paths, {} censored)", l.problem.name, e.n_paths, e.censored);
    if let Some((v, scale)) = pde {
        let slack = 3.0 * se + 5e-3 * scale;
        m.check("mc_vs_pde", (mean - v).abs() <= slack, format!("mc {mean:.6} ± {se:.6}, pde {v:.6}"));
    }
    finish(m, dir, start)
}

fn cmd_verify(cli: &Cli, suite: &str) -> Result<bool> {
    let start = Instant::now();
    if suite != "all" && verify::describe(suite).is_none() {
        bail!(Usage(format!("unknown suite `{suite}`; known: all, {}", verify::suite_names().join(", "))));
    }
    let g = cli.grid.unwrap_or_default();
    let mut opts = VerifyOptions { nx: g.nx, nt: g.nt, ..Default::default() };
    if let Some(seed) = cli.seed {
        opts.seed = seed;
    }
    let dir = out_dir(cli)?;
    let checks = verify::run(suite, &opts)?;
    let mut m = RunManifest::new(format!("verify {suite}"));
    m.seeds.push(opts.seed);
    m.settings = Some(opts.settings);
    for c in &checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let path = dir.join(format!("verify.{}", ext(cli)));
    match cli.format {
        Format::Json => io::write_json(&path, &checks)?,
        Format::Csv => io::write_file(&path, |w| {
            use std::io::Write;
            writeln!(w, "name,pass,detail")?;
            for c in &checks {
                writeln!(w, "{},{},\"{}\"", c.name, c.pass, c.detail.replace('"', "\"\""))?;
            }
            Ok(())
        })?,
    }
    m.outputs.push(path);
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!("{} checks, {failed} failed", checks.len());
    m.checks = checks;
    m.pass = failed == 0;
    finish(m, dir, start)
}

//! Named verification suites run by `stopflow verify`. Each suite solves
//! catalog models, applies the structural checks and returns pass/fail
//! lines with the measured numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{self, CatalogModel, WaldParams};
use crate::diagnostics::{
    check_single_crossing, classify_environment, compare_problems, controlled_monotonicity_check,
    shifted_payoff_compare, trend_sign_table, verify_boundary_monotonicity, CompareMode, MonotoneClass,
    MonotonicityOptions,
};
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::grid::{Grid, GridSpec};
use crate::io::Check;
use crate::problem::{Branch, Horizon, StoppingPayoff, StoppingProblem};
use crate::sim::{
    accuracy_profile, belief_consistency, coupled_stopping_rank, estimate_value_mc, simulate_stopped, Scenario,
    SimParams, StopRule,
};
use crate::solver::{extract_boundaries, solve, solve_controlled, BoundaryMode, FreeBoundary, SolverSettings, ValueSurface};

/// Shared run options.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Overrides the catalog grids; also shrinks Monte Carlo sizes tenfold.
    pub nx: Option<usize>,
    pub nt: Option<usize>,
    pub settings: SolverSettings,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 20240601, nx: None, nt: None, settings: SolverSettings::default() }
    }
}

impl VerifyOptions {
    fn coarse(&self) -> bool {
        self.nx.is_some() || self.nt.is_some()
    }

    fn paths(&self, n: usize) -> usize {
        if self.coarse() {
            (n / 10).max(200)
        } else {
            n
        }
    }

    fn spec(&self, p: &StoppingProblem) -> GridSpec {
        p.grid.with_counts(self.nt, self.nx)
    }
}

type Suite = fn(&VerifyOptions) -> Result<Vec<Check>>;

const SUITES: &[(&str, &str, Suite)] = &[
    ("closed-forms", "put, investment and default thresholds against closed forms", closed_forms),
    ("stationary", "time-invariant problems give flat, symmetric boundaries", stationary),
    ("monotone", "monotone-environment classification and boundary direction", monotone),
    ("single-crossing", "single-crossing profiles and continuation-band shape", single_crossing),
    ("flow-discount", "seeded flow/discount pairs: dominance, inclusion, coupled stopping times", flow_discount),
    ("volatility-drift", "volatility and drift comparisons after the shape check", volatility_drift),
    ("payoff-shift", "stopping-payoff comparisons through the V - g reduction", payoff_shift),
    ("trend-signs", "boundary direction predicted from coefficient trends", trend_signs),
    ("deadline", "Poisson deadline transform and band direction", deadline),
    ("monte-carlo", "Monte Carlo values against the PDE and closed forms", monte_carlo),
    ("accuracy", "decision accuracy across stopping times", accuracy),
    ("control", "finite-action control overlay", control),
    ("continuity", "boundary jumps per time step under refinement", continuity),
    ("invariants", "complementarity, convexity and x-monotonicity of solves", invariants),
];

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|s| s.0).collect()
}

pub fn describe(name: &str) -> Option<&'static str> {
    SUITES.iter().find(|s| s.0 == name).map(|s| s.1)
}

/// Runs one suite, or every suite for `all`. Check names are prefixed
/// with the suite name.
pub fn run(name: &str, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let selected: Vec<_> = if name == "all" {
        SUITES.iter().collect()
    } else {
        vec![SUITES
            .iter()
            .find(|s| s.0 == name)
            .ok_or_else(|| Error::Config(format!("unknown suite `{name}`; known: all, {}", suite_names().join(", "))))?]
    };
    let mut out = Vec::new();
    for (suite, _, f) in selected {
        match f(opts) {
            Ok(checks) => out.extend(checks.into_iter().map(|c| Check { name: format!("{suite}/{}", c.name), ..c })),
            Err(e) => out.push(Check { name: format!("{suite}/error"), pass: false, detail: e.to_string() }),
        }
    }
    Ok(out)
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check { name: name.into(), pass, detail }
}

/// Solved model: stationary grid for time-invariant perpetual problems.
pub struct Solved {
    pub model: CatalogModel,
    pub grid: Grid,
    pub surface: ValueSurface,
    pub boundary: FreeBoundary,
}

pub fn solve_problem(p: &StoppingProblem, spec: &GridSpec, settings: &SolverSettings) -> Result<(Grid, ValueSurface, FreeBoundary)> {
    let grid = if p.horizon.is_perpetual() && p.is_time_invariant() {
        Grid::stationary(p, spec)?
    } else {
        Grid::build(p, spec)?
    };
    let surface = solve(p, &grid, settings)?;
    let (lo, hi) = (grid.x[0], grid.x[grid.nx() - 1]);
    let boundary = extract_boundaries(&surface, |t| p.crossing_at(t).unwrap_or(0.5 * (lo + hi)));
    Ok((grid, surface, boundary))
}

fn solved(name: &str, opts: &VerifyOptions) -> Result<Solved> {
    let model = catalog::load(name)?;
    let (grid, surface, boundary) = solve_problem(&model.problem, &opts.spec(&model.problem), &opts.settings)?;
    Ok(Solved { model, grid, surface, boundary })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn closed_forms(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (name, side) in [
        ("put_stationary", 0),
        ("investment_stationary", 1),
        ("investment_golden", 1),
        ("leland_stationary", 0),
        ("leland_penalty", 0),
    ] {
        let s = solved(name, opts)?;
        let o = s.model.oracle.expect("closed-form model");
        let b = if side == 0 { s.boundary.lower[0] } else { s.boundary.upper[0] };
        let exact = o.threshold();
        let err = b.map_or(f64::INFINITY, |b| rel(b, exact));
        // 1% on the catalog grids; coarse grids get one cell.
        let tol = 0.01f64.max(s.grid.cell_at(exact) / exact);
        out.push(check(&format!("{name}/threshold"), err <= tol, format!("b={b:?} exact={exact:.10} rel={err:.2e} tol={tol:.2e}")));
        // Value curve where the state is resolved well inside the grid.
        let x = &s.grid.x;
        let sup = x
            .iter()
            .enumerate()
            .filter(|(_, &xi)| xi <= 10.0 * exact.max(1.0))
            .map(|(i, &xi)| (s.surface.values[i] + s.model.shift - o.value(xi)).abs())
            .fold(0.0, f64::max);
        out.push(check(&format!("{name}/value_sup"), sup <= 5e-3, format!("sup|V - V*| = {sup:.2e}")));
    }
    Ok(out)
}

fn stationary(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let m = catalog::load("wald_stationary")?;
    // Solve on the time grid to see flatness across t.
    let spec = opts.spec(&m.problem);
    let grid = Grid::build(&m.problem, &spec)?;
    let s = crate::solver::solve_hjb(&m.problem, &grid, &opts.settings)?;
    let b = extract_boundaries(&s, |_| 0.5);
    let v = classify_environment(&m.problem, &s);
    let c = verify_boundary_monotonicity(&b, &v, &MonotonicityOptions::default());
    out.push(check("wald/flat", v.classification == MonotoneClass::Flat && c.pass, format!("{:?}, census {}", v.classification, c.census.len())));
    let spread = |series: &[Option<f64>]| {
        let v: Vec<f64> = series.iter().flatten().copied().collect();
        v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let cell = grid.dx_max();
    let (sl, su) = (spread(&b.lower), spread(&b.upper));
    out.push(check(
        "wald/within_one_cell",
        sl <= cell && su <= cell && b.lower.iter().chain(&b.upper).all(Option::is_some),
        format!("range lower {sl:.2e}, upper {su:.2e}, cell {cell:.2e}"),
    ));
    let asym = (0..b.len())
        .filter_map(|n| Some((b.lower[n]? + b.upper[n]? - 1.0).abs()))
        .fold(0.0, f64::max);
    out.push(check("wald/symmetric", asym <= 1e-6, format!("max |b_lo + b_up - 1| = {asym:.2e}")));
    for name in ["put_stationary", "investment_stationary", "leland_stationary", "wald_intensity_menu"] {
        let m = catalog::load(name)?;
        let grid = Grid::build(&m.problem, &opts.spec(&m.problem).with_counts(Some(opts.nt.unwrap_or(50)), None))?;
        let s = solve(&m.problem, &grid, &opts.settings)?;
        let v = classify_environment(&m.problem, &s);
        out.push(check(&format!("{name}/flat"), v.classification == MonotoneClass::Flat, format!("{:?}", v.classification)));
    }
    Ok(out)
}

fn direction(name: &str, want: MonotoneClass, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let s = solved(name, opts)?;
    let v = if s.model.problem.is_controlled() {
        let cs = solve_controlled(&s.model.problem, &s.grid, &opts.settings)?;
        controlled_monotonicity_check(&cs, &s.model.problem)
    } else {
        classify_environment(&s.model.problem, &s.surface)
    };
    let c = verify_boundary_monotonicity(&s.boundary, &v, &MonotonicityOptions::default());
    Ok(vec![
        check(&format!("{name}/class"), v.classification == want, format!("{:?} (want {want:?})", v.classification)),
        check(
            &format!("{name}/boundary"),
            c.pass,
            format!("moves lower {:?} upper {:?}, census {}", c.lower_movement, c.upper_movement, c.census.len()),
        ),
    ])
}

fn monotone(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (name, want) in [
        ("wald_rising_cost", MonotoneClass::DecreasingStrict),
        ("wald_rising_intensity", MonotoneClass::IncreasingStrict),
        ("nonbinary_three_point", MonotoneClass::DecreasingStrict),
        ("put_falling_vol", MonotoneClass::DecreasingStrict),
    ] {
        out.extend(direction(name, want, opts)?);
    }
    out.push(nonbinary_sigma(opts)?);
    Ok(out)
}

/// The tabulated belief volatility of the three-point prior falls in t at
/// ten interior beliefs.
fn nonbinary_sigma(opts: &VerifyOptions) -> Result<Check> {
    let m = catalog::load("nonbinary_three_point")?;
    let p = &m.problem;
    let grid = Grid::build(p, &opts.spec(p))?;
    let sigma = &p.coefficients.sigma;
    let mut worst = f64::NEG_INFINITY;
    for k in 1..=10 {
        let x = grid.x[grid.nearest(k as f64 / 11.0)];
        for w in grid.t.windows(2) {
            worst = worst.max(sigma.eval(w[1], x) - sigma.eval(w[0], x));
        }
    }
    Ok(check("nonbinary_three_point/sigma_decreasing", worst < 0.0, format!("max step change {worst:.2e}")))
}

fn single_crossing(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for name in ["wald_stationary", "wald_rising_cost", "put_stationary", "leland_stationary"] {
        let m = catalog::load(name)?;
        let grid = Grid::build(&m.problem, &opts.spec(&m.problem))?;
        let p = check_single_crossing(&m.problem, &grid)?;
        out.push(check(&format!("{name}/sc"), p.verdict_sc, format!("sc={} ssc={}", p.verdict_sc, p.verdict_ssc)));
    }
    let s = solved("two_hump", opts)?;
    let p = check_single_crossing(&s.model.problem, &s.grid)?;
    let holes = s.boundary.issues.len();
    out.push(check(
        "two_hump/detected",
        !p.verdict_sc && !s.boundary.valid,
        format!("sc={} boundary valid={} issues={holes}", p.verdict_sc, s.boundary.valid),
    ));
    Ok(out)
}

/// Wald pair with `f_hi >= f_lo`, `r_hi <= r_lo`, possibly moving in t.
pub fn random_pair(rng: &mut ChaCha8Rng, nt: usize, nx: usize) -> Result<(StoppingProblem, StoppingProblem)> {
    let r_lo = rng.random_range(0.05..0.2);
    let r_hi = r_lo - rng.random_range(0.0..0.04);
    let (c0, c1): (f64, f64) = (rng.random_range(0.01..0.04), rng.random_range(0.0..0.01));
    let (d0, d1): (f64, f64) = (rng.random_range(0.0..0.008), rng.random_range(0.0..0.002));
    let make = |r: f64, c: String| -> Result<StoppingProblem> {
        let (p, _) = catalog::make_wald(&WaldParams {
            rate: r,
            cost: CoefficientField::parse(&c)?,
            horizon: Horizon::Perpetual { window: 3.0 },
            grid: GridSpec::uniform(nt, nx),
            ..Default::default()
        })?;
        Ok(p)
    };
    let lo = make(r_lo, format!("{c0} + {c1}*t"))?;
    let hi = make(r_hi, format!("{} + {}*t", c0 - d0, (c1 - d1).max(0.0)))?;
    Ok((StoppingProblem { name: "pair_lo".into(), ..lo }, StoppingProblem { name: "pair_hi".into(), ..hi }))
}

fn flow_discount(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (nt, nx) = (opts.nt.unwrap_or(100), opts.nx.unwrap_or(201));
    let pairs = if opts.coarse() { 5 } else { 20 };
    let (mut dom, mut inc, mut coupled) = (0, 0, 0);
    let mut worst = 0.0f64;
    let mut violations = 0;
    for k in 0..pairs {
        let (lo, hi) = random_pair(&mut rng, nt, nx)?;
        let rep = compare_problems(&lo, &hi, CompareMode::FlowDiscount, None, &opts.settings)?;
        dom += (rep.worst_violation <= rep.tol_compare) as usize;
        inc += (rep.region_inclusion == 0) as usize;
        worst = worst.max(rep.worst_violation);
        let (_, _, b_lo) = solve_problem(&lo, &lo.grid, &opts.settings)?;
        let (_, _, b_hi) = solve_problem(&hi, &lo.grid, &opts.settings)?;
        let params = SimParams { n_paths: opts.paths(10_000), seed: opts.seed + k as u64, dt_sim: 5e-3, ..Default::default() };
        let c = coupled_stopping_rank(Scenario::plain(&lo), Scenario::plain(&hi), &b_lo, &b_hi, BoundaryMode::Snapped, &params)?;
        coupled += c.pass as usize;
        violations += c.violations;
    }
    out.push(check("pairs/dominance", dom == pairs, format!("{dom}/{pairs}, worst {worst:.2e}")));
    out.push(check("pairs/inclusion", inc == pairs, format!("{inc}/{pairs}")));
    out.push(check("pairs/coupled_tau", coupled == pairs, format!("{coupled}/{pairs}, {violations} path violations")));
    Ok(out)
}

fn volatility_drift(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let put = |vol: f64| -> Result<StoppingProblem> {
        Ok(catalog::make_put(&catalog::PutParams { vol: vol.into(), ..Default::default() })?.0)
    };
    let spec = opts.spec(&put(0.2)?);
    let rep = compare_problems(&put(0.2)?, &put(0.4)?, CompareMode::Volatility, Some(&spec), &opts.settings)?;
    let (b_lo, b_hi) = (rep.lo_boundary[0], rep.hi_boundary[0]);
    let order = matches!((b_lo, b_hi), (Some(a), Some(b)) if b <= a);
    out.push(check(
        "put_sigma/compare",
        rep.pass && rep.hypothesis_check == crate::diagnostics::Hypothesis::Convex,
        format!("{:?}, worst {:.2e}, inclusion {}", rep.hypothesis_check, rep.worst_violation, rep.region_inclusion),
    ));
    out.push(check("put_sigma/threshold_order", order, format!("b(0.2)={b_lo:?} b(0.4)={b_hi:?}")));
    let inv = |mu: f64| -> Result<StoppingProblem> {
        Ok(catalog::make_investment(&catalog::InvestmentParams { mu: mu.into(), ..Default::default() })?.0)
    };
    let spec = opts.spec(&inv(0.02)?);
    let rep = compare_problems(&inv(0.02)?, &inv(0.03)?, CompareMode::Drift, Some(&spec), &opts.settings)?;
    let (b_lo, b_hi) = (rep.lo_boundary[1], rep.hi_boundary[1]);
    out.push(check(
        "investment_mu/compare",
        rep.pass && rep.hypothesis_check == crate::diagnostics::Hypothesis::Nondecreasing,
        format!("{:?}, worst {:.2e}, inclusion {}", rep.hypothesis_check, rep.worst_violation, rep.region_inclusion),
    ));
    out.push(check(
        "investment_mu/threshold_order",
        matches!((b_lo, b_hi), (Some(a), Some(b)) if b >= a),
        format!("b(0.02)={b_lo:?} b(0.03)={b_hi:?}"),
    ));
    Ok(out)
}

/// Investment with the payoff `x - I` written without the kink: the firm
/// never invests below `I`, so the value is unchanged.
pub fn linear_investment(cost: f64) -> Result<StoppingProblem> {
    let (mut p, _) = catalog::make_investment(&catalog::InvestmentParams { cost: cost.into(), ..Default::default() })?;
    let g = CoefficientField::parse(&format!("x - {cost}"))?;
    p.payoff = StoppingPayoff::new(g.clone(), g).with_crossing(cost);
    Ok(p)
}

fn payoff_shift(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let direct = catalog::make_leland_direct(&catalog::LelandParams { penalty: -0.1, ..Default::default() })?;
    let spec = opts.spec(&direct);
    let rep = shifted_payoff_compare(&direct, &(-0.3).into(), Some(&spec), &opts.settings)?;
    // The reduced problem with the larger flow belongs to the smaller G;
    // its default boundary sits lower.
    let (hi_b, lo_b) = (rep.hi_boundary[0], rep.lo_boundary[0]);
    out.push(check(
        "leland_penalty/compare",
        rep.pass,
        format!("worst {:.2e}, inclusion {}", rep.worst_violation, rep.region_inclusion),
    ));
    out.push(check(
        "leland_penalty/default_boundary_increasing_in_G",
        matches!((hi_b, lo_b), (Some(a), Some(b)) if a < b),
        format!("b(G=-0.3)={hi_b:?} b(G=-0.1)={lo_b:?}"),
    ));
    let base = linear_investment(1.0)?;
    let spec = opts.spec(&base);
    let rep = shifted_payoff_compare(&base, &CoefficientField::parse("x - 1.2")?, Some(&spec), &opts.settings)?;
    // Larger I means a larger reduced flow, so I = 1.2 is `hi`.
    let (b1, b12) = (rep.lo_boundary[1], rep.hi_boundary[1]);
    out.push(check("investment_cost/compare", rep.pass, format!("worst {:.2e}, inclusion {}", rep.worst_violation, rep.region_inclusion)));
    out.push(check(
        "investment_cost/threshold_increasing_in_I",
        matches!((b1, b12), (Some(a), Some(b)) if a < b),
        format!("b(I=1)={b1:?} b(I=1.2)={b12:?}"),
    ));
    Ok(out)
}

fn trend_signs(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (name, want) in [
        ("put_falling_vol", Some(MonotoneClass::DecreasingStrict)),
        ("investment_falling_cost", Some(MonotoneClass::Decreasing)),
        ("put_stationary", Some(MonotoneClass::Flat)),
    ] {
        let mut m = catalog::load(name)?;
        m.problem.grid = opts.spec(&m.problem);
        let t = trend_sign_table(&m.problem, &opts.settings)?;
        out.push(check(
            name,
            t.prediction == want && t.agreement == Some(true),
            format!("prediction {:?}, verified {:?}", t.prediction, t.agreement),
        ));
    }
    Ok(out)
}

fn deadline(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let (base, _) = catalog::make_wald(&WaldParams::default())?;
    let spec = catalog::DeadlineSpec { alpha: 0.3.into(), gamma: 0.0.into(), news: catalog::News::Unknown };
    let p = catalog::apply_deadline(&base, &spec)?;
    let mut direct = base.clone();
    direct.coefficients.discount = (0.1 + 0.3).into();
    let exact = p.coefficients.discount.eval(0.0, 0.5) == direct.coefficients.discount.eval(0.0, 0.5)
        && p.coefficients.flow.eval(0.0, 0.5) == direct.coefficients.flow.eval(0.0, 0.5);
    out.push(check("constant_rate/exact", exact, "r + alpha, f + alpha*0".into()));
    for name in ["deadline_forced", "deadline_revelation"] {
        let s = solved(name, opts)?;
        let info = s.model.deadline.as_ref().expect("deadline model");
        let news = catalog::check_news(&info.spec, &s.surface, 1e-9);
        let trend = catalog::predicted_trend(&info.spec, info.spec.news, &s.grid.x, s.model.problem.horizon.end());
        let v = classify_environment(&s.model.problem, &s.surface);
        let c = verify_boundary_monotonicity(&s.boundary, &v, &MonotonicityOptions::default());
        out.push(check(&format!("{name}/news"), news.consistent, format!("declared {:?}, observed {:?}", news.declared, news.observed)));
        out.push(check(
            &format!("{name}/narrowing"),
            trend == Some(catalog::BandTrend::Narrowing) && v.classification.direction() < 0 && c.pass,
            format!("predicted {trend:?}, classified {:?}, boundary pass {}", v.classification, c.pass),
        ));
    }
    Ok(out)
}

fn monte_carlo(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let s = solved("put_stationary", opts)?;
    let o = s.model.oracle.expect("put oracle");
    let sc = Scenario::plain(&s.model.problem);
    let params = SimParams { n_paths: opts.paths(20_000), seed: opts.seed, dt_sim: 5e-3, x0: Some(1.0), ..Default::default() };
    let rule = StopRule::Boundary { boundary: &s.boundary, mode: BoundaryMode::Refined };
    let v = estimate_value_mc(sc, rule, &params)?;
    let pde = s.surface.value_at(0, 1.0);
    let slack = 3.0 * v.std_err + 5e-3 * s.surface.scale;
    out.push(check(
        "put/optimal",
        (v.mean - o.value(1.0)).abs() <= slack && v.mean <= pde + slack,
        format!("mc {:.5} ± {:.5}, closed form {:.5}, pde {pde:.5}", v.mean, v.std_err, o.value(1.0)),
    ));
    let bad = s.boundary.shifted_inward(0.1);
    let w = estimate_value_mc(sc, StopRule::Boundary { boundary: &bad, mode: BoundaryMode::Refined }, &params)?;
    out.push(check(
        "put/suboptimal_below",
        w.mean < pde - 3.0 * w.std_err,
        format!("inward-shifted rule {:.5} ± {:.5} vs pde {pde:.5}", w.mean, w.std_err),
    ));
    let imm = estimate_value_mc(sc, StopRule::Immediate, &params)?;
    out.push(check("put/immediate", imm.mean == 0.0 && imm.std_err == 0.0, format!("{} ± {}", imm.mean, imm.std_err)));
    let s = solved("wald_stationary", opts)?;
    let sc = Scenario::from_catalog(&s.model);
    let params = SimParams { n_paths: opts.paths(20_000), seed: opts.seed, dt_sim: 1e-3, ..Default::default() };
    let e = simulate_stopped(sc, StopRule::Boundary { boundary: &s.boundary, mode: BoundaryMode::Refined }, &params)?;
    let (mean, se) = e.value();
    let pde = s.surface.value_at(0, 0.5);
    out.push(check(
        "wald/value",
        (mean - pde).abs() <= 3.0 * se + 5e-3 * s.surface.scale,
        format!("mc {mean:.5} ± {se:.5}, pde {pde:.5}"),
    ));
    let bad = s.boundary.shifted_inward(0.1);
    let w = estimate_value_mc(sc, StopRule::Boundary { boundary: &bad, mode: BoundaryMode::Refined }, &params)?;
    out.push(check(
        "wald/suboptimal_below",
        w.mean < pde - 3.0 * w.std_err,
        format!("inward-shifted rule {:.5} ± {:.5} vs pde {pde:.5}", w.mean, w.std_err),
    ));
    let n = e.paths.len() as f64;
    let up = e.paths.iter().filter(|p| p.alternative == Some(Branch::A)).count() as f64 / n;
    let se_up = (0.25 / n).sqrt();
    out.push(check("wald/symmetry", (up - 0.5).abs() <= 3.0 * se_up, format!("P(upper) = {up:.4} ± {se_up:.4}")));
    let learning = s.model.learning.as_ref().expect("learning model");
    let bc = belief_consistency(&s.model.problem, learning, opts.paths(10_000), 1e-4, 1.0, opts.seed)?;
    out.push(check("wald/belief_ks", bc.ks < 0.02, format!("KS {:.4}", bc.ks)));
    Ok(out)
}

fn accuracy(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (name, n, dt, decreasing) in [
        ("wald_stationary", 20_000, 2e-4, false),
        ("wald_rising_cost", 20_000, 1e-3, true),
        ("nonbinary_three_point", 100_000, 1e-3, true),
    ] {
        let s = solved(name, opts)?;
        let params = SimParams { n_paths: opts.paths(n), seed: opts.seed, dt_sim: dt, ..Default::default() };
        let e = simulate_stopped(
            Scenario::from_catalog(&s.model),
            StopRule::Boundary { boundary: &s.boundary, mode: BoundaryMode::Refined },
            &params,
        )?;
        let prof = accuracy_profile(&e, &s.boundary, 6)?;
        let p = prof.trend.map_or(f64::NAN, |t| t.p_decreasing);
        if decreasing {
            out.push(check(&format!("{name}/decreasing"), p < 0.05, format!("trend p = {p:.2e}")));
        } else {
            // Bonferroni over the bins: each 95% interval alone misses one
            // time in twenty.
            let present: Vec<_> = prof.bins.iter().filter(|b| b.present).collect();
            let level = 1.0 - 0.05 / present.len().max(1) as f64;
            let inside = present.iter().all(|b| {
                let (lo, hi) = crate::sim::stats::wilson(b.correct, b.count, level);
                b.theory.is_some_and(|th| lo <= th && th <= hi)
            });
            let flat = prof.trend.is_some_and(|t| t.p_decreasing > 0.025 && t.p_increasing > 0.025);
            out.push(check(&format!("{name}/flat"), flat && inside, format!("trend p = {p:.3}, boundary level inside every adjusted CI: {inside}")));
        }
    }
    Ok(out)
}

fn control(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let (base, _) = catalog::make_wald(&WaldParams { grid: opts.spec(&catalog::load("wald_stationary")?.problem), ..Default::default() })?;
    let single = catalog::intensity_menu(&base, &[1.0], 0.0)?;
    let grid = Grid::build(&base, &base.grid)?;
    let a = solve(&base, &grid, &opts.settings)?;
    let b = solve_controlled(&single, &grid, &opts.settings)?;
    let gap = a.values.iter().zip(&b.surface.values).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    out.push(check("singleton_equivalence", gap <= 1e-12, format!("max |dV| = {gap:.2e}")));
    let menu = catalog::intensity_menu(&base, &[0.5, 1.0], 0.05)?;
    let low = catalog::intensity_menu(&base, &[0.5], 0.05)?;
    let high = catalog::intensity_menu(&base, &[1.0], 0.0)?;
    let vm = solve_controlled(&menu, &grid, &opts.settings)?.surface;
    let vl = solve_controlled(&low, &grid, &opts.settings)?.surface;
    let vh = solve_controlled(&high, &grid, &opts.settings)?.surface;
    let tol = 1e-9;
    let sandwiched = (0..vm.values.len()).all(|k| vl.values[k] <= vm.values[k] + tol && vm.values[k] <= vh.values[k] + tol);
    out.push(check("menu_sandwich", sandwiched, "V(i=0.5) <= V(menu) <= V(i=1, free)".into()));
    out.extend(direction("wald_intensity_menu_rising_cost", MonotoneClass::DecreasingStrict, opts)?);
    out.extend(direction("wald_intensity_menu_falling_noise", MonotoneClass::IncreasingStrict, opts)?);
    Ok(out)
}

fn continuity(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let m = catalog::load("wald_rising_cost")?;
    let p = &m.problem;
    let profile = check_single_crossing(p, &Grid::build(p, &p.grid)?)?;
    let mut jumps = Vec::new();
    // The x-grid stays at the catalog resolution: on coarse grids the jump
    // is already at its sawtooth floor and refining t shows nothing.
    for nt in [100, 200, 400] {
        let spec = p.grid.with_counts(Some(nt), None);
        let (_, _, b) = solve_problem(p, &spec, &opts.settings)?;
        jumps.push((nt, b.max_jump, b.max_jump_cells));
    }
    let at400 = jumps[2].2;
    let decreasing = jumps.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(vec![
        check("ssc", profile.verdict_ssc, format!("ssc = {}", profile.verdict_ssc)),
        check("jump_nt400", at400 <= 3.0, format!("{at400:.3} cells")),
        check("refinement", decreasing, format!("{:?}", jumps.iter().map(|j| (j.0, j.1)).collect::<Vec<_>>())),
    ])
}

/// Divided second differences `>= -tol`, skipping the nodes next to the
/// truncated edges, where the imposed edge value is not the true value.
pub fn convex_in_x(s: &ValueSurface, tol: f64) -> bool {
    let x = &s.grid.x;
    (0..s.nt()).all(|n| {
        let v = s.layer(n);
        (2..v.len().saturating_sub(2)).all(|i| {
            let (sl, sr) = ((v[i] - v[i - 1]) / (x[i] - x[i - 1]), (v[i + 1] - v[i]) / (x[i + 1] - x[i]));
            (sr - sl) * 0.5 * (x[i + 1] - x[i - 1]) >= -tol
        })
    })
}

/// Consecutive differences with sign `dir` (+1 nondecreasing), to `tol`.
pub fn monotone_in_x(s: &ValueSurface, dir: f64, tol: f64) -> bool {
    (0..s.nt()).all(|n| s.layer(n).windows(2).all(|w| dir * (w[1] - w[0]) >= -tol))
}

fn invariants(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut failing = Vec::new();
    for name in catalog::names() {
        let s = solved(name, opts)?;
        let terminal = !s.model.problem.horizon.is_perpetual();
        let rep = s.surface.check_invariants(&opts.settings, terminal);
        if !rep.pass {
            failing.push(name);
        }
        // Convex payoffs with flows affine in x.
        if s.model.learning.is_some() || s.model.oracle.is_some() {
            let ok = convex_in_x(&s.surface, 1e-7 * s.surface.scale);
            out.push(check(&format!("{name}/convex"), ok, "V convex in x".into()));
        }
        if name.starts_with("leland") || name.starts_with("investment") {
            let ok = monotone_in_x(&s.surface, 1.0, 1e-12 * s.surface.scale);
            out.push(check(&format!("{name}/monotone_x"), ok, "V nondecreasing in x".into()));
        }
    }
    out.insert(0, check("complementarity", failing.is_empty(), format!("failing: {failing:?}")));
    Ok(out)
}

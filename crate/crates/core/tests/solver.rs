use approx::assert_relative_eq;

use stopflow_core::catalog;
use stopflow_core::verify::solve_problem;
use stopflow_core::*;

fn solved(name: &str) -> (catalog::CatalogModel, Grid, ValueSurface, FreeBoundary) {
    let m = catalog::load(name).unwrap();
    let (g, s, b) = solve_problem(&m.problem, &m.problem.grid, &SolverSettings::default()).unwrap();
    (m, g, s, b)
}

#[test]
fn put_matches_closed_form() {
    let (m, g, s, b) = solved("put_stationary");
    let o = m.oracle.unwrap();
    assert_relative_eq!(b.lower[0].unwrap(), o.threshold(), max_relative = 1e-3);
    for (i, &x) in g.x.iter().enumerate().filter(|(_, &x)| x < 10.0) {
        assert!((s.values[i] - o.value(x)).abs() < 5e-3, "x={x}");
    }
    assert!(b.upper[0].is_none());
}

#[test]
fn investment_thresholds() {
    for (name, exact) in [("investment_stationary", 3.0), ("investment_golden", 2.618_033_988_7)] {
        let (_, _, _, b) = solved(name);
        assert_relative_eq!(b.upper[0].unwrap(), exact, max_relative = 1e-2);
    }
}

#[test]
fn leland_default_threshold_and_shift() {
    let (m, _, s, b) = solved("leland_penalty");
    let o = m.oracle.unwrap();
    assert_relative_eq!(b.lower[0].unwrap(), o.threshold(), max_relative = 1e-2);
    // Equity far from default approaches the going-concern value.
    let x = 10.0;
    assert!((s.value_at(0, x) + m.shift - o.value(x)).abs() < 1e-3);
}

#[test]
fn stationary_wald_is_symmetric() {
    let (_, g, s, b) = solved("wald_stationary");
    assert_eq!(g.nt(), 1);
    assert!((b.lower[0].unwrap() + b.upper[0].unwrap() - 1.0).abs() < 1e-9);
    let v = s.layer(0);
    let n = v.len();
    for i in 0..n {
        assert!((v[i] - v[n - 1 - i]).abs() < 1e-9);
    }
}

#[test]
fn lcp_methods_agree() {
    let m = catalog::load("wald_rising_cost").unwrap();
    let spec = m.problem.grid.with_counts(Some(40), Some(101));
    let grid = Grid::build(&m.problem, &spec).unwrap();
    let base = solve(&m.problem, &grid, &SolverSettings::default()).unwrap();
    for method in [LcpMethod::Psor, LcpMethod::PolicyIteration] {
        let s = solve(&m.problem, &grid, &SolverSettings { method, tol_pde: 1e-12, ..Default::default() }).unwrap();
        let gap = s.values.iter().zip(&base.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-8, "{method:?}: {gap:e}");
    }
}

#[test]
fn crank_nicolson_close_to_backward_euler() {
    let m = catalog::load("wald_rising_cost").unwrap();
    let grid = Grid::build(&m.problem, &m.problem.grid).unwrap();
    let be = solve(&m.problem, &grid, &SolverSettings::default()).unwrap();
    let cn = solve(&m.problem, &grid, &SolverSettings { theta: 0.5, ..Default::default() }).unwrap();
    assert!((be.value_at(0, 0.5) - cn.value_at(0, 0.5)).abs() < 1e-4);
    assert!(cn.check_invariants(&SolverSettings::default(), false).pass);
}

#[test]
fn invariants_hold_on_catalog() {
    for name in catalog::names() {
        let m = catalog::load(name).unwrap();
        let spec = m.problem.grid.with_counts(Some(50), Some(201));
        let (_, s, _) = solve_problem(&m.problem, &spec, &SolverSettings::default()).unwrap();
        let rep = s.check_invariants(&SolverSettings::default(), !m.problem.horizon.is_perpetual());
        assert!(rep.pass, "{name}: {rep:?}");
        assert!(s.values.iter().zip(&s.obstacle).all(|(v, g)| v >= &(g - 1e-12)), "{name}");
    }
}

#[test]
fn rising_cost_band_narrows() {
    let (_, _, _, b) = solved("wald_rising_cost");
    let n = b.len() - 1;
    assert!(b.lower[n].unwrap() > b.lower[0].unwrap());
    assert!(b.upper[n].unwrap() < b.upper[0].unwrap());
    let fit = smooth_fit_gap(&solved("wald_stationary").2, &solved("wald_stationary").3);
    assert!(fit.max() < 0.05, "{}", fit.max());
}

#[test]
fn solver_entry_points_refuse_wrong_shapes() {
    let m = catalog::load("wald_rising_cost").unwrap();
    let grid = Grid::build(&m.problem, &m.problem.grid).unwrap();
    let st = SolverSettings::default();
    assert!(matches!(solve_stationary(&m.problem, &grid, &st), Err(Error::Precondition(_))));
    assert!(matches!(solve_controlled(&m.problem, &grid, &st), Err(Error::Precondition(_))));
    let menu = catalog::load("wald_intensity_menu").unwrap();
    assert!(matches!(solve_hjb(&menu.problem, &grid, &st), Err(Error::Precondition(_))));
    let bad = SolverSettings { psor_omega: 2.5, ..Default::default() };
    assert!(matches!(solve(&m.problem, &grid, &bad), Err(Error::Config(_))));
}

#[test]
fn two_hump_boundary_is_flagged() {
    let (_, _, _, b) = solved("two_hump");
    assert!(!b.valid);
    assert!(!b.issues.is_empty());
}

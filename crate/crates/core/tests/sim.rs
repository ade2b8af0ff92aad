use stopflow_core::catalog;
use stopflow_core::sim::*;
use stopflow_core::verify::solve_problem;
use stopflow_core::*;

fn solved(name: &str) -> (catalog::CatalogModel, ValueSurface, FreeBoundary) {
    let m = catalog::load(name).unwrap();
    let (_, s, b) = solve_problem(&m.problem, &m.problem.grid, &SolverSettings::default()).unwrap();
    (m, s, b)
}

#[test]
fn same_seed_same_ensemble() {
    let (m, _, b) = solved("wald_rising_cost");
    let rule = StopRule::Boundary { boundary: &b, mode: BoundaryMode::Refined };
    let p = SimParams { n_paths: 300, dt_sim: 5e-3, seed: 11, ..Default::default() };
    let a = simulate_stopped(Scenario::from_catalog(&m), rule, &p).unwrap();
    let c = simulate_stopped(Scenario::from_catalog(&m), rule, &p).unwrap();
    assert_eq!(a.paths, c.paths);
    let d = simulate_stopped(Scenario::from_catalog(&m), rule, &SimParams { seed: 12, ..p }).unwrap();
    assert_ne!(a.paths, d.paths);
    // Path k does not depend on how many paths run.
    let e = simulate_stopped(Scenario::from_catalog(&m), rule, &SimParams { n_paths: 100, ..p }).unwrap();
    assert_eq!(&a.paths[..100], &e.paths[..]);
}

#[test]
fn zero_paths_refused() {
    let (m, _, b) = solved("wald_stationary");
    let p = SimParams { n_paths: 0, ..Default::default() };
    let rule = StopRule::Boundary { boundary: &b, mode: BoundaryMode::Refined };
    assert!(matches!(simulate_stopped(Scenario::from_catalog(&m), rule, &p), Err(Error::Config(_))));
}

#[test]
fn immediate_and_horizon_rules() {
    let (m, _, _) = solved("put_stationary");
    let p = SimParams { n_paths: 50, dt_sim: 1e-2, x0: Some(0.8), t_max: 1.0, ..Default::default() };
    let e = simulate_stopped(Scenario::plain(&m.problem), StopRule::Immediate, &p).unwrap();
    assert!(e.paths.iter().all(|r| r.tau == 0.0 && (r.payoff - 0.2).abs() < 1e-12));
    let e = simulate_stopped(Scenario::plain(&m.problem), StopRule::Horizon, &p).unwrap();
    assert!(e.paths.iter().all(|r| r.censored || r.capped));
}

#[test]
fn optimal_rule_beats_shifted_rule() {
    let (m, s, b) = solved("put_stationary");
    let p = SimParams { n_paths: 4_000, dt_sim: 1e-2, x0: Some(1.0), seed: 2, ..Default::default() };
    let sc = Scenario::plain(&m.problem);
    let v = estimate_value_mc(sc, StopRule::Boundary { boundary: &b, mode: BoundaryMode::Refined }, &p).unwrap();
    let pde = s.value_at(0, 1.0);
    assert!((v.mean - pde).abs() < 3.0 * v.std_err + 5e-3, "{} vs {pde}", v.mean);
    let bad = b.shifted_inward(0.15);
    let w = estimate_value_mc(sc, StopRule::Boundary { boundary: &bad, mode: BoundaryMode::Refined }, &p).unwrap();
    assert!(w.mean < v.mean);
}

#[test]
fn coupling_needs_shared_dynamics() {
    let (lo, _, b_lo) = solved("wald_stationary");
    let (hi, _, b_hi) = solved("wald_rising_intensity");
    let p = SimParams { n_paths: 10, ..Default::default() };
    let e = coupled_stopping_rank(Scenario::plain(&lo.problem), Scenario::plain(&hi.problem), &b_lo, &b_hi, BoundaryMode::Snapped, &p)
        .unwrap_err();
    assert!(matches!(e, Error::Precondition(_)));
}

#[test]
fn coupled_ranking_on_cost_pair() {
    // Higher cost stops sooner on every path.
    let make = |c: f64| catalog::make_wald(&catalog::WaldParams { cost: c.into(), ..Default::default() }).unwrap().0;
    let (lo, hi) = (make(0.03), make(0.02));
    let st = SolverSettings::default();
    let (_, _, b_lo) = solve_problem(&lo, &lo.grid, &st).unwrap();
    let (_, _, b_hi) = solve_problem(&hi, &hi.grid, &st).unwrap();
    let p = SimParams { n_paths: 1_000, dt_sim: 5e-3, seed: 4, ..Default::default() };
    let r = coupled_stopping_rank(Scenario::plain(&lo), Scenario::plain(&hi), &b_lo, &b_hi, BoundaryMode::Snapped, &p).unwrap();
    assert_eq!(r.violations, 0, "worst {}", r.worst);
    assert!(r.mean_tau_hi > r.mean_tau_lo);
}

#[test]
fn deadline_clock_fires() {
    let (m, _, b) = solved("deadline_forced");
    let p = SimParams { n_paths: 2_000, dt_sim: 1e-2, seed: 8, ..Default::default() };
    let e = simulate_stopped(Scenario::from_catalog(&m), StopRule::Boundary { boundary: &b, mode: BoundaryMode::Refined }, &p).unwrap();
    let hits = e.paths.iter().filter(|r| r.deadline_hit).count();
    assert!(hits > 0 && hits < e.paths.len());
}

#[test]
fn accuracy_needs_learning() {
    let (m, _, b) = solved("put_stationary");
    let p = SimParams { n_paths: 100, dt_sim: 1e-2, x0: Some(1.0), t_max: 5.0, ..Default::default() };
    let e = simulate_stopped(Scenario::plain(&m.problem), StopRule::Boundary { boundary: &b, mode: BoundaryMode::Refined }, &p).unwrap();
    assert!(matches!(accuracy_profile(&e, &b, 3), Err(Error::Precondition(_))));
}

#[test]
fn belief_simulations_agree() {
    let m = catalog::load("wald_stationary").unwrap();
    let r = belief_consistency(&m.problem, m.learning.as_ref().unwrap(), 2_000, 1e-3, 0.5, 3).unwrap();
    assert!(r.ks < 0.05, "{}", r.ks);
}

use stopflow_core::catalog;
use stopflow_core::diagnostics::*;
use stopflow_core::*;

fn surface(name: &str) -> (StoppingProblem, Grid, ValueSurface, FreeBoundary) {
    let m = catalog::load(name).unwrap();
    let grid = Grid::build(&m.problem, &m.problem.grid).unwrap();
    let s = solve(&m.problem, &grid, &SolverSettings::default()).unwrap();
    let b = extract_boundaries(&s, |t| m.problem.crossing_at(t).unwrap());
    (m.problem, grid, s, b)
}

#[test]
fn classification_directions() {
    for (name, want) in [
        ("wald_stationary", MonotoneClass::Flat),
        ("wald_rising_cost", MonotoneClass::DecreasingStrict),
        ("wald_rising_intensity", MonotoneClass::IncreasingStrict),
        ("deadline_forced", MonotoneClass::DecreasingStrict),
    ] {
        let (p, _, s, b) = surface(name);
        let v = classify_environment(&p, &s);
        assert_eq!(v.classification, want, "{name}");
        let c = verify_boundary_monotonicity(&b, &v, &MonotonicityOptions::default());
        assert!(c.pass, "{name}: {:?}", c.census);
    }
}

#[test]
fn wrong_prediction_is_caught() {
    let (_, _, _, b) = surface("wald_rising_cost");
    let c = verify_boundary_monotonicity(&b, &MonotoneVerdict::predicted(MonotoneClass::IncreasingStrict), &MonotonicityOptions::default());
    assert!(!c.pass);
    assert!(!c.census.is_empty());
}

#[test]
fn single_crossing_profiles() {
    let (p, g, _, _) = surface("wald_rising_cost");
    let prof = check_single_crossing(&p, &g).unwrap();
    assert!(prof.verdict_sc && prof.verdict_ssc);
    assert!(prof.layers.iter().all(|l| l.x_minus.is_some() && l.x_plus.is_some()));
    let (p, g, _, _) = surface("two_hump");
    let prof = check_single_crossing(&p, &g).unwrap();
    assert!(!prof.verdict_sc);
    assert!(!prof.witnesses.is_empty());
}

#[test]
fn identical_problems_compare_clean() {
    let m = catalog::load("wald_rising_cost").unwrap();
    let spec = m.problem.grid.with_counts(Some(40), Some(101));
    let r = compare_problems(&m.problem, &m.problem, CompareMode::FlowDiscount, Some(&spec), &SolverSettings::default()).unwrap();
    assert!(r.pass);
    assert_eq!(r.worst_violation, 0.0);
    assert_eq!(r.region_inclusion, 0);
    assert_eq!(r.value_dominance, 1.0);
}

#[test]
fn compare_refuses_unpermitted_differences() {
    let lo = catalog::load("wald_stationary").unwrap().problem;
    let hi = catalog::load("wald_rising_intensity").unwrap().problem;
    let e = compare_problems(&lo, &hi, CompareMode::FlowDiscount, None, &SolverSettings::default()).unwrap_err();
    assert!(matches!(e, Error::Precondition(_)), "{e}");
    // Ordering in the wrong direction is refused as well.
    let rising = catalog::load("wald_rising_cost").unwrap().problem;
    let e = compare_problems(&lo, &rising, CompareMode::FlowDiscount, None, &SolverSettings::default()).unwrap_err();
    assert!(matches!(e, Error::Precondition(_)), "{e}");
}

#[test]
fn cost_pair_orders_values_and_regions() {
    let make = |c: f64| catalog::make_wald(&catalog::WaldParams { cost: c.into(), grid: GridSpec::uniform(40, 201), ..Default::default() }).unwrap().0;
    let (lo, hi) = (make(0.03), make(0.02));
    let r = compare_problems(&lo, &hi, CompareMode::FlowDiscount, None, &SolverSettings::default()).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(!r.reversed);
    // The cheaper problem continues on a wider band.
    assert!(r.hi_boundary[0].unwrap() < r.lo_boundary[0].unwrap());
    assert!(r.hi_boundary[1].unwrap() > r.lo_boundary[1].unwrap());
}

#[test]
fn kinked_payoff_cannot_be_reduced() {
    let p = catalog::load("put_stationary").unwrap().problem;
    assert!(smooth_payoff(&p).is_err());
}

#[test]
fn sign_table_refuses_learning_models() {
    let p = catalog::load("wald_rising_cost").unwrap().problem;
    assert!(trend_sign_table(&p, &SolverSettings::default()).is_err());
}

#[test]
fn sign_table_predicts_falling_volatility_put() {
    let p = catalog::load("put_falling_vol").unwrap().problem;
    let t = trend_sign_table(&p, &SolverSettings::default()).unwrap();
    assert_eq!(t.prediction, Some(MonotoneClass::DecreasingStrict));
    assert_eq!(t.agreement, Some(true));
    assert!(t.entries.iter().any(|e| e.name == "sigma_t" && e.max < 0.0));
}

#[test]
fn controlled_classification() {
    let m = catalog::load("wald_intensity_menu_rising_cost").unwrap();
    let grid = Grid::build(&m.problem, &m.problem.grid).unwrap();
    let cs = solve_controlled(&m.problem, &grid, &SolverSettings::default()).unwrap();
    let v = controlled_monotonicity_check(&cs, &m.problem);
    assert_eq!(v.classification, MonotoneClass::DecreasingStrict);
}

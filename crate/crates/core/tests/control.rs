use stopflow_core::catalog::{self, WaldParams};
use stopflow_core::*;

fn base() -> (StoppingProblem, Grid) {
    let (p, _) = catalog::make_wald(&WaldParams { grid: GridSpec::uniform(60, 161), ..Default::default() }).unwrap();
    let g = Grid::build(&p, &p.grid).unwrap();
    (p, g)
}

#[test]
fn singleton_menu_matches_plain_solver() {
    let (p, g) = base();
    let st = SolverSettings::default();
    let plain = solve(&p, &g, &st).unwrap();
    let single = catalog::intensity_menu(&p, &[1.0], 0.0).unwrap();
    let c = solve_controlled(&single, &g, &st).unwrap();
    let gap = plain.values.iter().zip(&c.surface.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap <= 1e-12, "{gap:e}");
    assert!(c.surface.action.as_ref().unwrap().iter().all(|&a| a == 0));
}

#[test]
fn menu_value_is_sandwiched() {
    let (p, g) = base();
    let st = SolverSettings::default();
    let v = |menu: &[f64], kappa: f64| solve_controlled(&catalog::intensity_menu(&p, menu, kappa).unwrap(), &g, &st).unwrap().surface;
    let (lo, mid, hi) = (v(&[0.5], 0.05), v(&[0.5, 1.0], 0.05), v(&[1.0], 0.0));
    for k in 0..mid.values.len() {
        assert!(lo.values[k] <= mid.values[k] + 1e-12 && mid.values[k] <= hi.values[k] + 1e-12);
    }
    // Both actions are used somewhere in the continuation region.
    let acts = mid.action.unwrap();
    assert!(acts.contains(&0) && acts.contains(&1));
}

#[test]
fn menu_must_be_positive() {
    let (p, _) = base();
    assert!(catalog::intensity_menu(&p, &[], 0.0).is_err());
    assert!(catalog::intensity_menu(&p, &[0.0, 1.0], 0.0).is_err());
}

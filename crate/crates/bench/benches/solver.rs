use criterion::{criterion_group, criterion_main, Criterion};

use stopflow_core::catalog;
use stopflow_core::sim::{estimate_value_mc, Scenario, SimParams, StopRule};
use stopflow_core::{extract_boundaries, solve, BoundaryMode, Grid, LcpMethod, SolverSettings};

fn stationary_put(c: &mut Criterion) {
    let m = catalog::load("put_stationary").unwrap();
    let grid = Grid::stationary(&m.problem, &m.problem.grid).unwrap();
    let settings = SolverSettings::default();
    c.bench_function("put_stationary nx=1600", |b| b.iter(|| solve(&m.problem, &grid, &settings).unwrap()));
}

fn backward_wald(c: &mut Criterion) {
    let m = catalog::load("wald_rising_cost").unwrap();
    let grid = Grid::build(&m.problem, &m.problem.grid).unwrap();
    let mut g = c.benchmark_group("wald_rising_cost 200x401");
    for (name, method) in [("psor_polished", LcpMethod::PsorPolished), ("psor", LcpMethod::Psor)] {
        let settings = SolverSettings { method, ..Default::default() };
        g.bench_function(name, |b| b.iter(|| solve(&m.problem, &grid, &settings).unwrap()));
    }
    g.finish();
}

fn controlled_menu(c: &mut Criterion) {
    let m = catalog::load("wald_intensity_menu_rising_cost").unwrap();
    let grid = Grid::build(&m.problem, &m.problem.grid).unwrap();
    let settings = SolverSettings::default();
    c.bench_function("intensity menu 200x401", |b| b.iter(|| solve(&m.problem, &grid, &settings).unwrap()));
}

fn monte_carlo(c: &mut Criterion) {
    let m = catalog::load("put_stationary").unwrap();
    let grid = Grid::stationary(&m.problem, &m.problem.grid).unwrap();
    let s = solve(&m.problem, &grid, &SolverSettings::default()).unwrap();
    let b = extract_boundaries(&s, |t| m.problem.crossing_at(t).unwrap());
    let params = SimParams { n_paths: 2_000, dt_sim: 1e-2, x0: Some(1.0), ..Default::default() };
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    g.bench_function("put 2000 paths", |bch| {
        bch.iter(|| {
            estimate_value_mc(
                Scenario::plain(&m.problem),
                StopRule::Boundary { boundary: &b, mode: BoundaryMode::Refined },
                &params,
            )
            .unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, stationary_put, backward_wald, controlled_menu, monte_carlo);
criterion_main!(benches);

use proptest::prelude::*;

use stopflow_core::catalog;
use stopflow_core::io::*;
use stopflow_core::sim::{accuracy_profile, simulate_stopped, Scenario, SimParams, StopRule};
use stopflow_core::verify::solve_problem;
use stopflow_core::*;

fn small(name: &str) -> (catalog::CatalogModel, ValueSurface, FreeBoundary) {
    let m = catalog::load(name).unwrap();
    let spec = m.problem.grid.with_counts(Some(20), Some(81));
    let (_, s, b) = solve_problem(&m.problem, &spec, &SolverSettings::default()).unwrap();
    (m, s, b)
}

#[test]
fn surface_csv_round_trip() {
    let (_, s, _) = small("wald_rising_cost");
    let mut buf = Vec::new();
    write_surface_csv(&s, &mut buf).unwrap();
    let t = read_surface_csv(&buf[..]).unwrap();
    assert_eq!(t.t, s.grid.t);
    assert_eq!(t.x, s.grid.x);
    assert_eq!(t.values, s.values);
    assert_eq!(t.region, s.region);
    assert_eq!(t.residual, s.residual);
    assert!(t.action.is_none());
}

#[test]
fn controlled_surface_carries_actions() {
    let (_, s, _) = small("wald_intensity_menu_rising_cost");
    let mut buf = Vec::new();
    write_surface_csv(&s, &mut buf).unwrap();
    let t = read_surface_csv(&buf[..]).unwrap();
    let actions = t.action.unwrap();
    assert!(actions.iter().zip(&t.region).all(|(a, r)| (*r == Region::Stop) == a.is_empty()));
    assert!(actions.iter().any(|a| a.starts_with("i=")));
}

#[test]
fn binary_round_trip() {
    for name in ["wald_rising_cost", "wald_intensity_menu"] {
        let (_, s, _) = small(name);
        let mut buf = Vec::new();
        write_surface_binary(&s, &mut buf).unwrap();
        assert_eq!(&buf[..5], MAGIC);
        let back = read_surface_binary(&buf[..]).unwrap();
        assert_eq!(back.values, s.values);
        assert_eq!(back.region, s.region);
        assert_eq!(back.action, s.action);
        assert_eq!(back.action_names, s.action_names);
        assert_eq!(back.grid.x, s.grid.x);
    }
}

#[test]
fn binary_rejects_bad_input() {
    assert!(matches!(read_surface_binary(&b"NOPE1xxxx"[..]), Err(Error::Format(_))));
    let (_, s, _) = small("wald_stationary");
    let mut buf = Vec::new();
    write_surface_binary(&s, &mut buf).unwrap();
    buf.truncate(buf.len() / 2);
    assert!(read_surface_binary(&buf[..]).is_err());
}

#[test]
fn boundary_csv_round_trip_and_reuse() {
    let (m, s, b) = small("wald_rising_cost");
    let mut buf = Vec::new();
    write_boundary_csv(&b, &mut buf).unwrap();
    let t = read_boundary_csv(&buf[..]).unwrap();
    assert_eq!(t.lower, b.lower);
    assert_eq!(t.upper, b.upper);
    // A boundary read back stops paths exactly like the original.
    let fb = t.into_boundary(s.grid.x.clone());
    let params = SimParams { n_paths: 200, dt_sim: 1e-2, seed: 5, ..Default::default() };
    let sc = Scenario::from_catalog(&m);
    let a = simulate_stopped(sc, StopRule::Boundary { boundary: &b, mode: BoundaryMode::Refined }, &params).unwrap();
    let c = simulate_stopped(sc, StopRule::Boundary { boundary: &fb, mode: BoundaryMode::Refined }, &params).unwrap();
    assert_eq!(a.paths, c.paths);
}

#[test]
fn boundary_csv_rejects_wrong_header() {
    assert!(matches!(read_boundary_csv(&b"t,lower,upper\n0,1,2\n"[..]), Err(Error::Format(_))));
    assert!(matches!(read_boundary_csv(&b"t,b_lower,b_upper\n"[..]), Err(Error::Format(_))));
}

#[test]
fn ensemble_and_profile_round_trip() {
    let (m, _, b) = small("wald_stationary");
    let params = SimParams { n_paths: 500, dt_sim: 1e-2, seed: 9, ..Default::default() };
    let e = simulate_stopped(Scenario::from_catalog(&m), StopRule::Boundary { boundary: &b, mode: BoundaryMode::Refined }, &params)
        .unwrap();
    let mut buf = Vec::new();
    write_ensemble_csv(&e, &mut buf).unwrap();
    let rows = read_ensemble_csv(&buf[..]).unwrap();
    assert_eq!(rows.len(), e.paths.len());
    for (r, p) in rows.iter().zip(&e.paths) {
        assert_eq!((r.path_id, r.tau, r.x_tau, r.payoff), (p.path_id, p.tau, p.x_tau, p.payoff));
        assert_eq!(r.alternative, p.alternative);
    }
    let prof = accuracy_profile(&e, &b, 3).unwrap();
    let mut buf = Vec::new();
    write_profile_csv(&prof.bins, &mut buf).unwrap();
    let back = read_profile_csv(&buf[..]).unwrap();
    assert_eq!(back.len(), prof.bins.len());
    for (r, bin) in back.iter().zip(&prof.bins) {
        assert_eq!(r.count, bin.count);
        assert_eq!(r.accuracy.is_some(), bin.present);
    }
}

#[test]
fn manifest_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = RunManifest::new("test");
    m.check("a", true, "");
    m.check("b", false, "broken");
    assert!(!m.pass);
    let path = m.finish(dir.path(), 0.5).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(v["format"], "stopflow-manifest/1");
    assert_eq!(v["checks"].as_array().unwrap().len(), 2);
}

proptest! {
    #[test]
    fn boundary_floats_survive_csv(vals in prop::collection::vec(prop::option::of(-1e6f64..1e6), 1..40)) {
        let n = vals.len();
        let t: Vec<f64> = (0..n).map(|k| k as f64 / 7.0).collect();
        let table = BoundaryTable { t: t.clone(), lower: vals.clone(), upper: vals.iter().rev().copied().collect() };
        let b = table.clone().into_boundary(vec![0.0, 1.0]);
        let mut buf = Vec::new();
        write_boundary_csv(&b, &mut buf).unwrap();
        let back = read_boundary_csv(&buf[..]).unwrap();
        prop_assert_eq!(back, table);
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use stopflow_core::io::{read_boundary_csv, read_surface_csv};

fn stopflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stopflow")).args(args).current_dir(dir).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn catalog_list_and_show() {
    let d = tempfile::tempdir().unwrap();
    let out = stopflow(&["catalog", "list"], d.path());
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("put_stationary")));
    let out = stopflow(&["catalog", "show", "wald_rising_cost"], d.path());
    ok(&out);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["name"], "wald_rising_cost");
    assert_eq!(stopflow(&["catalog", "show", "nope"], d.path()).status.code(), Some(2));
}

#[test]
fn solve_put_gives_flat_threshold() {
    let d = tempfile::tempdir().unwrap();
    ok(&stopflow(&["solve", "catalog:put_stationary", "--out", "o"], d.path()));
    let b = read_boundary_csv(fs::File::open(d.path().join("o/boundary.csv")).unwrap()).unwrap();
    let lo: Vec<f64> = b.lower.iter().map(|v| v.unwrap()).collect();
    assert!(lo.iter().all(|v| (v - lo[0]).abs() < 1e-12));
    assert!((lo[0] - 0.526_315_789_5).abs() / 0.526_315_789_5 < 0.01);
    let m = json(&d.path().join("o/manifest.json"));
    assert_eq!(m["pass"], true);
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for o in &outputs {
        assert!(d.path().join(o).exists(), "{o}");
    }
    assert!(outputs.iter().any(|o| o.ends_with("surface.csv")));
    let s = read_surface_csv(fs::File::open(d.path().join("o/surface.csv")).unwrap()).unwrap();
    assert_eq!(s.x.len(), 1600);
}

#[test]
fn solve_rising_cost_narrows() {
    let d = tempfile::tempdir().unwrap();
    ok(&stopflow(&["solve", "catalog:wald_rising_cost", "--out", "o", "--binary"], d.path()));
    let b = read_boundary_csv(fs::File::open(d.path().join("o/boundary.csv")).unwrap()).unwrap();
    let n = b.t.len() - 1;
    assert!(b.lower[n].unwrap() > b.lower[0].unwrap() && b.upper[n].unwrap() < b.upper[0].unwrap());
    assert_eq!(json(&d.path().join("o/solve.json"))["environment"]["classification"], "DecreasingStrict");
    assert!(d.path().join("o/surface.stpf").exists());
}

#[test]
fn runs_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    for dir in ["a", "b"] {
        ok(&stopflow(&["solve", "catalog:wald_rising_cost", "--grid", "nx=101,nt=40", "--out", dir], d.path()));
        ok(&stopflow(&["simulate", "catalog:wald_stationary", "-n", "300", "--dt", "0.005", "--seed", "7", "--out", &format!("{dir}/sim")], d.path()));
    }
    for f in ["surface.csv", "boundary.csv", "solve.json", "sim/ensemble.csv", "sim/profile.csv", "sim/simulate.json"] {
        assert_eq!(fs::read(d.path().join("a").join(f)).unwrap(), fs::read(d.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let out = stopflow(&["solve", "missing.toml"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));
    assert_eq!(stopflow(&["verify", "nosuchsuite"], d.path()).status.code(), Some(2));
    assert_eq!(stopflow(&["simulate", "catalog:wald_stationary", "-n", "0"], d.path()).status.code(), Some(2));
    assert_eq!(stopflow(&["solve", "catalog:put_stationary", "--grid", "nz=3"], d.path()).status.code(), Some(2));
    fs::write(d.path().join("bad.toml"), "name = \"x\"\n[domain\n").unwrap();
    let out = stopflow(&["solve", "bad.toml"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2:"));
}

#[test]
fn compare_identical_and_volatility_pair() {
    let d = tempfile::tempdir().unwrap();
    let out = stopflow(&["catalog", "show", "put_stationary"], d.path());
    let doc = String::from_utf8(out.stdout).unwrap();
    fs::write(d.path().join("lo.json"), doc.replace("\"0.3 * x\"", "\"0.2 * x\"").replace("\"nx\": 1600", "\"nx\": 400")).unwrap();
    fs::write(d.path().join("hi.json"), doc.replace("\"0.3 * x\"", "\"0.4 * x\"").replace("\"nx\": 1600", "\"nx\": 400")).unwrap();

    ok(&stopflow(&["compare", "lo.json", "lo.json", "--mode", "flow_discount", "--out", "same"], d.path()));
    let r = json(&d.path().join("same/compare.json"));
    assert_eq!(r["pass"], true);
    assert_eq!(r["worst_violation"], 0.0);
    assert_eq!(r["region_inclusion"], 0);

    ok(&stopflow(&["compare", "lo.json", "hi.json", "--mode", "volatility", "--out", "vol", "--strict-exit"], d.path()));
    let r = json(&d.path().join("vol/compare.json"));
    assert_eq!(r["pass"], true);
    assert_eq!(r["hypothesis_check"], "convex");
}

#[test]
fn simulate_from_boundary_file() {
    let d = tempfile::tempdir().unwrap();
    ok(&stopflow(&["solve", "catalog:wald_stationary", "--out", "s"], d.path()));
    ok(&stopflow(
        &["simulate", "catalog:wald_stationary", "--boundary", "s/boundary.csv", "-n", "500", "--dt", "0.005", "--out", "m", "--format", "json"],
        d.path(),
    ));
    let s = json(&d.path().join("m/simulate.json"));
    assert_eq!(s["n_paths"], 500);
    assert!(s["pde_value"].is_null());
    let e = json(&d.path().join("m/ensemble.json"));
    assert_eq!(e["paths"].as_array().unwrap().len(), 500);
}

#[test]
fn verify_strict_exit() {
    let d = tempfile::tempdir().unwrap();
    let out = stopflow(&["verify", "continuity", "--out", "v", "--strict-exit"], d.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS continuity/jump_nt400"));
    let m = json(&d.path().join("v/manifest.json"));
    assert_eq!(m["command"], "verify continuity");
    assert!(m["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    // On a 100-node grid the widening band moves less than two cells.
    let args = ["verify", "monotone", "--grid", "nx=100,nt=50", "--out", "c"];
    assert_eq!(stopflow(&args, d.path()).status.code(), Some(0));
    let strict: Vec<&str> = args.iter().copied().chain(["--strict-exit"]).collect();
    assert_eq!(stopflow(&strict, d.path()).status.code(), Some(1));
}

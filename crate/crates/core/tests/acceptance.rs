//! Acceptance criteria 1-12. One line per criterion with the measured
//! numbers, the wall-clock time and its limit. Exits 1 if any fails.
//!
//! `cargo test -p stopflow-core --test acceptance`, optionally followed by
//! `-- 3 7` to run a subset.

use std::time::{Duration, Instant};

use stopflow_core::io::Check;
use stopflow_core::verify::{self, VerifyOptions};

struct Criterion {
    id: u32,
    title: &'static str,
    suite: &'static str,
    /// Check-name prefixes (after the suite) that belong to the criterion.
    select: &'static [&'static str],
    limit: Duration,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, title: "perpetual put threshold and value curve", suite: "closed-forms", select: &["put_stationary/"], limit: secs(10) },
    Criterion {
        id: 2,
        title: "investment thresholds 3.000 and golden ratio",
        suite: "closed-forms",
        select: &["investment_stationary/", "investment_golden/"],
        limit: secs(20),
    },
    Criterion { id: 3, title: "stationary Wald: flat, symmetric boundaries", suite: "stationary", select: &["wald/"], limit: secs(10) },
    Criterion {
        id: 4,
        title: "rising cost narrows, rising intensity widens",
        suite: "monotone",
        select: &["wald_rising_cost/", "wald_rising_intensity/"],
        limit: secs(60),
    },
    Criterion {
        id: 5,
        title: "three-point prior: sigma falls, band narrows, accuracy falls",
        suite: "monotone+accuracy",
        select: &["nonbinary_three_point/"],
        limit: secs(300),
    },
    Criterion { id: 6, title: "20 flow/discount pairs with coupled stopping times", suite: "flow-discount", select: &[""], limit: secs(300) },
    Criterion { id: 7, title: "volatility and drift comparisons", suite: "volatility-drift", select: &[""], limit: secs(120) },
    Criterion { id: 8, title: "deadline transform and narrowing bands", suite: "deadline", select: &[""], limit: secs(120) },
    Criterion { id: 9, title: "complementarity, convexity, x-monotonicity", suite: "invariants", select: &[""], limit: secs(120) },
    Criterion { id: 10, title: "Monte Carlo against PDE values", suite: "monte-carlo", select: &[""], limit: secs(300) },
    Criterion { id: 11, title: "controlled overlay", suite: "control", select: &[""], limit: secs(120) },
    Criterion { id: 12, title: "boundary continuity under time refinement", suite: "continuity", select: &[""], limit: secs(120) },
];

fn run(c: &Criterion, opts: &VerifyOptions) -> (Vec<Check>, Duration) {
    let start = Instant::now();
    let mut checks = Vec::new();
    for suite in c.suite.split('+') {
        let got = verify::run(suite, opts).unwrap_or_else(|e| vec![Check { name: format!("{suite}/error"), pass: false, detail: e.to_string() }]);
        checks.extend(got.into_iter().filter(|k| {
            let rest = k.name.split_once('/').map_or("", |(_, r)| r);
            rest == "error" || c.select.iter().any(|p| rest.starts_with(p))
        }));
    }
    (checks, start.elapsed())
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let opts = VerifyOptions::default();
    let mut failed = 0;
    for c in CRITERIA.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let (checks, took) = run(c, &opts);
        let in_time = took <= c.limit;
        let pass = !checks.is_empty() && checks.iter().all(|k| k.pass) && in_time;
        failed += !pass as usize;
        println!(
            "criterion {:>2} {}: {} ({:.1}s, limit {}s)",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.title,
            took.as_secs_f64(),
            c.limit.as_secs()
        );
        for k in &checks {
            println!("    {} {}: {}", if k.pass { "ok  " } else { "FAIL" }, k.name, k.detail);
        }
        if checks.is_empty() {
            println!("    FAIL no checks selected");
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

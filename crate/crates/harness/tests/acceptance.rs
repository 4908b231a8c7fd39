//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --release -p lepski-harness --test acceptance -- 1 2 3`.

use std::cell::OnceCell;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use lepski_harness::config::ExperimentConfig;
use lepski_harness::diagnostics::{
    engine_checks, operator_checks, run_coverage, standard_families, theorem_suite, verify_filters, CheckSummary,
    FILTER_GRID, THEOREM_INSTANCES,
};
use lepski_harness::experiment::run_experiment;
use lepski_harness::rates::{rate_report, RateReport, RateStatus};

const SEED: u64 = 20240601;

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, budget: Duration) -> (bool, String) {
    (elapsed <= budget, format!("{:.1} s of {:.0} s budget", elapsed.as_secs_f64(), budget.as_secs_f64()))
}

fn checks_line(checks: &[CheckSummary]) -> (bool, String) {
    let pass = checks.iter().all(|c| c.pass);
    let worst = checks
        .iter()
        .map(|c| format!("{} {}×, max excess {:+.1e}", c.check, c.trials, c.max_excess))
        .collect::<Vec<_>>()
        .join("; ");
    (pass, worst)
}

fn criterion_1() -> Vec<(String, Outcome)> {
    let start = Instant::now();
    let suite = theorem_suite(THEOREM_INSTANCES, SEED).expect("abstract suite");
    let (fast, time) = within(start.elapsed(), Duration::from_secs(10));
    let n = suite.instances.len();
    let stated = suite.hat_dominates_star == n && suite.stated_error_bound == n && suite.oracle_bound == n;
    let detail = format!(
        "{n} instances: λ̂ ≥ λ* {}/{n}, error bound in the (A+λ̂) norm {}/{n}, oracle bound {}/{n}; {time}",
        suite.hat_dominates_star, suite.stated_error_bound, suite.oracle_bound
    );
    let proof = format!(
        "same instances, error bound in the (A+λ*) norm {}/{n}",
        suite.error_bound
    );
    vec![
        ("1".into(), outcome(stated && fast, detail)),
        ("1 (proof norm, informational)".into(), outcome(suite.error_bound == n, proof)),
    ]
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    for k2 in [1.0, 2.0] {
        rows.extend(verify_filters(&standard_families(k2).unwrap(), k2, FILTER_GRID));
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(5));
    let worst = rows.iter().map(|r| r.max_relative_excess).fold(f64::NEG_INFINITY, f64::max);
    let pass = rows.iter().all(|r| r.pass && r.max_relative_excess <= 1e-9);
    outcome(
        pass && fast,
        format!("{} families × 2 κ² on {FILTER_GRID}², max relative excess {worst:+.2e}; {time}", rows.len() / 2),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let checks = engine_checks(1000, SEED).expect("engine checks");
    let (fast, time) = within(start.elapsed(), Duration::from_secs(30));
    let (pass, detail) = checks_line(&checks[..1]);
    outcome(pass && fast, format!("{detail}; {time}"))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let checks = operator_checks(500, 12, SEED).expect("operator checks");
    let (fast, time) = within(start.elapsed(), Duration::from_secs(60));
    let (pass, detail) = checks_line(&checks);
    outcome(pass && fast, format!("{detail}; {time}"))
}

fn criterion_5() -> Outcome {
    let cfg = config("diagnostics.ini");
    let start = Instant::now();
    let cov = run_coverage(&cfg).expect("coverage");
    let (fast, time) = within(start.elapsed(), Duration::from_secs(300));
    let worst = cov
        .summaries
        .iter()
        .map(|s| format!("n={} {} {:.3}", s.n, s.bound, s.max_frequency.unwrap_or(0.0)))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(cov.pass() && fast, format!("max violation frequency: {worst}; {time}"))
}

fn rate_line(rates: &RateReport) -> String {
    rates
        .norms
        .iter()
        .map(|n| match &n.fit {
            Some(f) => format!("{} slope {:+.3} ± {:.3} vs {:+.3}", n.norm, f.slope, f.slope_se, n.target_slope),
            None => format!("{} inconclusive", n.norm),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn study(name: &str, tolerance: f64) -> (RateReport, Duration) {
    let cfg = config(name);
    let (r, b) = lepski_harness::rates::validate_rate_config(&cfg).expect("rate config");
    let start = Instant::now();
    let run = run_experiment(&cfg, threads()).expect("rate run");
    (rate_report(&run, r, b, tolerance), start.elapsed())
}

fn slopes_pass(r: &RateReport) -> bool {
    r.norms.iter().all(|n| n.status == RateStatus::Pass)
}

fn criterion_6(headline: &OnceCell<(RateReport, Duration)>) -> Outcome {
    let (rates, elapsed) = headline.get_or_init(|| study("headline.ini", 0.12));
    let (fast, time) = within(*elapsed, Duration::from_secs(1200));
    let ratios = rates
        .simultaneity
        .iter()
        .map(|s| format!("{}: {:.2}/{:.2}", s.n, s.median_ratio_rkhs, s.median_ratio_l2))
        .collect::<Vec<_>>()
        .join(", ");
    let pass = slopes_pass(rates) && rates.simultaneity_status == RateStatus::Pass && fast;
    outcome(
        pass,
        format!("{}; median oracle ratios H/L² {ratios}; {time} on {} thread(s)", rate_line(rates), threads()),
    )
}

fn criterion_7(headline: &OnceCell<(RateReport, Duration)>) -> Outcome {
    // The headline regime is rescored at the wider tolerance of this criterion.
    let (base, _) = headline.get_or_init(|| study("headline.ini", 0.12));
    let mut regimes = vec![("(½,½)", rescore(base, 0.15))];
    regimes.push(("(1,½)", study("smooth_target.ini", 0.15).0));
    regimes.push(("(½,¼)", study("fast_decay.ini", 0.15).0));
    let pass = regimes.iter().all(|(_, r)| slopes_pass(r));
    let detail = regimes
        .iter()
        .map(|(name, r)| format!("{name}: {}", rate_line(r)))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn rescore(r: &RateReport, tolerance: f64) -> RateReport {
    let mut out = r.clone();
    for n in out.norms.iter_mut() {
        n.tolerance = tolerance;
        if let Some(f) = &n.fit {
            n.status = if (f.slope - n.target_slope).abs() <= tolerance {
                RateStatus::Pass
            } else {
                RateStatus::Fail
            };
        }
    }
    out
}

fn criterion_8() -> Outcome {
    let cfg = config("theory.ini");
    let start = Instant::now();
    let run = match run_experiment(&cfg, threads()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("run aborted: {e}")),
    };
    let total = cfg.n.len() * cfg.replicates;
    let consistent = run.records.iter().filter(|r| r.is_consistent(run.kappa2)).count();
    let nonempty = run.records.iter().filter(|r| !r.empty_grid).count();
    let pass = run.failures.is_empty() && run.records.len() == total && consistent == total;
    outcome(
        pass,
        format!(
            "{}/{total} completed, {consistent}/{total} with λ̂ ∈ Λ_x ∪ {{κ²}} and λ_min a member, {nonempty} with a nonempty grid; {:.1} s",
            run.records.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |k: u32| wanted.is_empty() || wanted.contains(&k);
    let headline = OnceCell::new();
    let mut failed = 0;
    let mut report = |label: String, o: Outcome| {
        let status = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass && !label.contains("informational") {
            failed += 1;
        }
        println!("criterion {label}: {status} ({})", o.detail);
    };
    if run(1) {
        for (label, o) in criterion_1() {
            report(label, o);
        }
    }
    let singles: [(u32, &dyn Fn() -> Outcome); 7] = [
        (2, &criterion_2),
        (3, &criterion_3),
        (4, &criterion_4),
        (5, &criterion_5),
        (6, &|| criterion_6(&headline)),
        (7, &|| criterion_7(&headline)),
        (8, &criterion_8),
    ];
    for (k, f) in singles {
        if run(k) {
            report(k.to_string(), f());
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion line(s) failed");
        ExitCode::FAILURE
    }
}

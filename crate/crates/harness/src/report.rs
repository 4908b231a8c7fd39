//! CSV and JSON emission. Column meanings are documented in `docs/schema.md`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::baseline::BaselineReport;
use crate::diagnostics::DiagnosticsReport;
use crate::error::HarnessError;
use crate::experiment::{ReplicateFailure, RunReport, SizeSummary};
use crate::rates::RateReport;
use crate::config::ExperimentConfig;

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Creates `out_dir` and returns the paths written, in order.
fn prepare(out_dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(out_dir)?;
    Ok(())
}

#[derive(Serialize)]
struct ReplicateRow {
    n: usize,
    replicate: usize,
    seed: u64,
    lambda_hat: f64,
    empty_grid: bool,
    grid_size: usize,
    member_count: usize,
    threshold_constant: f64,
    ell: f64,
    rkhs_hat: f64,
    l2_hat: f64,
    oracle_rkhs_lambda: Option<f64>,
    oracle_rkhs: Option<f64>,
    oracle_l2_lambda: Option<f64>,
    oracle_l2: Option<f64>,
    ratio_rkhs: Option<f64>,
    ratio_l2: Option<f64>,
}

#[derive(Serialize)]
struct GridRow {
    n: usize,
    replicate: usize,
    index: usize,
    lambda: f64,
    estimation_term: f64,
    member: bool,
    selected: bool,
    rkhs: f64,
    l2: f64,
}

#[derive(Serialize)]
struct ComparisonRow {
    n: usize,
    replicate: usize,
    lambda: f64,
    lambda_prime: f64,
    lhs: f64,
    rhs: f64,
    pass: bool,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    config: &'a ExperimentConfig,
    kappa2: f64,
    gamma_bar: f64,
    replicates_completed: usize,
    failures: &'a [ReplicateFailure],
    summaries: &'a [SizeSummary],
    rates: Option<&'a RateReport>,
}

#[derive(Serialize)]
struct RateRow<'a> {
    norm: &'a str,
    s: f64,
    target_slope: f64,
    tolerance: f64,
    points: usize,
    slope: Option<f64>,
    slope_se: Option<f64>,
    intercept: Option<f64>,
    r_squared: Option<f64>,
    status: crate::rates::RateStatus,
}

/// Writes `replicates.csv`, `grid_errors.csv`, `comparisons.csv` (with traces on),
/// `summary.json` and `timings.csv`, plus `rates.csv` when a rate report is given.
/// Everything except `timings.csv` is a deterministic function of the config.
pub fn write_run(out_dir: &Path, run: &RunReport, rates: Option<&RateReport>) -> Result<Vec<PathBuf>, HarnessError> {
    prepare(out_dir)?;
    let mut written = Vec::new();
    let p = out_dir.join("replicates.csv");
    write_csv(
        &p,
        run.records.iter().map(|r| ReplicateRow {
            n: r.n,
            replicate: r.replicate,
            seed: r.seed,
            lambda_hat: r.lambda_hat,
            empty_grid: r.empty_grid,
            grid_size: r.grid.len(),
            member_count: r.member_set.len(),
            threshold_constant: r.threshold_constant,
            ell: r.ell,
            rkhs_hat: r.hat.rkhs,
            l2_hat: r.hat.l2,
            oracle_rkhs_lambda: r.oracle_rkhs.map(|o| o.lambda),
            oracle_rkhs: r.oracle_rkhs.map(|o| o.error),
            oracle_l2_lambda: r.oracle_l2.map(|o| o.lambda),
            oracle_l2: r.oracle_l2.map(|o| o.error),
            ratio_rkhs: r.ratio_rkhs(),
            ratio_l2: r.ratio_l2(),
        }),
    )?;
    written.push(p);
    let p = out_dir.join("grid_errors.csv");
    write_csv(
        &p,
        run.records.iter().flat_map(|r| {
            r.grid.iter().enumerate().map(move |(i, &lambda)| GridRow {
                n: r.n,
                replicate: r.replicate,
                index: i,
                lambda,
                estimation_term: r.estimation_terms.get(i).copied().unwrap_or(f64::NAN),
                member: r.member_set.contains(&lambda),
                selected: lambda == r.lambda_hat,
                rkhs: r.grid_errors[i].rkhs,
                l2: r.grid_errors[i].l2,
            })
        }),
    )?;
    written.push(p);
    if run.config.traces {
        let p = out_dir.join("comparisons.csv");
        write_csv(
            &p,
            run.records.iter().flat_map(|r| {
                r.comparisons.iter().map(move |c| ComparisonRow {
                    n: r.n,
                    replicate: r.replicate,
                    lambda: c.lambda,
                    lambda_prime: c.lambda_prime,
                    lhs: c.lhs,
                    rhs: c.rhs,
                    pass: c.pass,
                })
            }),
        )?;
        written.push(p);
    }
    if let Some(rates) = rates {
        let p = out_dir.join("rates.csv");
        write_csv(
            &p,
            rates.norms.iter().map(|n| RateRow {
                norm: n.norm,
                s: n.s,
                target_slope: n.target_slope,
                tolerance: n.tolerance,
                points: n.n.len(),
                slope: n.fit.as_ref().map(|f| f.slope),
                slope_se: n.fit.as_ref().map(|f| f.slope_se),
                intercept: n.fit.as_ref().map(|f| f.intercept),
                r_squared: n.fit.as_ref().map(|f| f.r_squared),
                status: n.status,
            }),
        )?;
        written.push(p);
    }
    let p = out_dir.join("summary.json");
    write_json(
        &p,
        &RunSummary {
            config: &run.config,
            kappa2: run.kappa2,
            gamma_bar: run.gamma_bar,
            replicates_completed: run.records.len(),
            failures: &run.failures,
            summaries: &run.summaries,
            rates,
        },
    )?;
    written.push(p);
    let p = out_dir.join("timings.csv");
    write_csv(&p, &run.timings)?;
    written.push(p);
    Ok(written)
}

#[derive(Serialize)]
struct BaselineReplicateRow {
    n: usize,
    replicate: usize,
    seed: u64,
    holdout_lambda: f64,
    holdout_validation_risk: f64,
    holdout_rkhs: f64,
    holdout_l2: f64,
    balancing_lambda: f64,
    balancing_empty_grid: bool,
    balancing_rkhs: f64,
    balancing_l2: f64,
}

#[derive(Serialize)]
struct BaselineTableRow {
    n: usize,
    completed: usize,
    holdout_rkhs_median: Option<f64>,
    balancing_rkhs_median: Option<f64>,
    holdout_l2_median: Option<f64>,
    balancing_l2_median: Option<f64>,
    rkhs_ratio_median: Option<f64>,
    l2_ratio_median: Option<f64>,
}

/// Writes `baseline_replicates.csv`, `baseline.csv` and `baseline_summary.json`.
pub fn write_baseline(out_dir: &Path, report: &BaselineReport) -> Result<Vec<PathBuf>, HarnessError> {
    prepare(out_dir)?;
    let p1 = out_dir.join("baseline_replicates.csv");
    write_csv(
        &p1,
        report.records.iter().map(|r| BaselineReplicateRow {
            n: r.n,
            replicate: r.replicate,
            seed: r.seed,
            holdout_lambda: r.holdout.lambda,
            holdout_validation_risk: r.holdout.validation_risk,
            holdout_rkhs: r.holdout.errors.rkhs,
            holdout_l2: r.holdout.errors.l2,
            balancing_lambda: r.balancing_lambda,
            balancing_empty_grid: r.balancing_empty_grid,
            balancing_rkhs: r.balancing.rkhs,
            balancing_l2: r.balancing.l2,
        }),
    )?;
    let p2 = out_dir.join("baseline.csv");
    let med = |q: Option<crate::experiment::Quantiles>| q.map(|q| q.median);
    write_csv(
        &p2,
        report.table.iter().map(|t| BaselineTableRow {
            n: t.n,
            completed: t.completed,
            holdout_rkhs_median: med(t.holdout_rkhs),
            balancing_rkhs_median: med(t.balancing_rkhs),
            holdout_l2_median: med(t.holdout_l2),
            balancing_l2_median: med(t.balancing_l2),
            rkhs_ratio_median: med(t.rkhs_ratio),
            l2_ratio_median: med(t.l2_ratio),
        }),
    )?;
    let p3 = out_dir.join("baseline_summary.json");
    #[derive(Serialize)]
    struct S<'a> {
        config: &'a ExperimentConfig,
        failures: usize,
        table: &'a [crate::baseline::BaselineRow],
    }
    write_json(
        &p3,
        &S {
            config: &report.config,
            failures: report.failures,
            table: &report.table,
        },
    )?;
    Ok(vec![p1, p2, p3])
}

#[derive(Serialize)]
struct TheoremRow {
    p: f64,
    c: f64,
    q: f64,
    steps: usize,
    seed: u64,
    lambda_hat: f64,
    lambda_star: f64,
    error_at_star: f64,
    error_at_hat: f64,
    error_bound: f64,
    c_s: f64,
    hat_dominates_star: bool,
    error_bound_holds: bool,
    stated_error_bound_holds: bool,
    oracle_bound_holds: bool,
}

#[derive(Serialize)]
struct FilterRow<'a> {
    filter: &'a str,
    kappa2: f64,
    grid: usize,
    max_relative_excess: f64,
    pass: bool,
    violation: String,
}

/// Writes `checks.csv`, `theorem.csv`, `filters.csv`, `coverage.csv` and
/// `diagnostics_summary.json`.
pub fn write_diagnostics(out_dir: &Path, report: &DiagnosticsReport) -> Result<Vec<PathBuf>, HarnessError> {
    prepare(out_dir)?;
    let checks = out_dir.join("checks.csv");
    write_csv(&checks, &report.checks)?;
    let theorem = out_dir.join("theorem.csv");
    write_csv(
        &theorem,
        report.theorem.instances.iter().map(|i| TheoremRow {
            p: i.p,
            c: i.c,
            q: i.q,
            steps: i.steps,
            seed: i.seed,
            lambda_hat: i.lambda_hat,
            lambda_star: i.lambda_star,
            error_at_star: i.error_at_star,
            error_at_hat: i.error_at_hat,
            error_bound: i.error_bound,
            c_s: i.c_s,
            hat_dominates_star: i.hat_dominates_star,
            error_bound_holds: i.error_bound_holds,
            stated_error_bound_holds: i.stated_error_bound_holds,
            oracle_bound_holds: i.oracle_bound_holds,
        }),
    )?;
    let filters = out_dir.join("filters.csv");
    write_filters(&filters, &report.filters)?;
    let coverage = out_dir.join("coverage.csv");
    write_csv(&coverage, &report.coverage.rows)?;
    let summary = out_dir.join("diagnostics_summary.json");
    #[derive(Serialize)]
    struct S<'a> {
        config: &'a ExperimentConfig,
        pass: bool,
        checks: &'a [crate::diagnostics::CheckSummary],
        theorem_instances: usize,
        theorem_hat_dominates_star: usize,
        theorem_error_bound: usize,
        theorem_stated_error_bound: usize,
        theorem_oracle_bound: usize,
        filters: &'a [crate::diagnostics::FilterSummary],
        coverage: &'a [crate::diagnostics::CoverageSummary],
    }
    write_json(
        &summary,
        &S {
            config: &report.config,
            pass: report.pass(),
            checks: &report.checks,
            theorem_instances: report.theorem.instances.len(),
            theorem_hat_dominates_star: report.theorem.hat_dominates_star,
            theorem_error_bound: report.theorem.error_bound,
            theorem_stated_error_bound: report.theorem.stated_error_bound,
            theorem_oracle_bound: report.theorem.oracle_bound,
            filters: &report.filters,
            coverage: &report.coverage.summaries,
        },
    )?;
    Ok(vec![checks, theorem, filters, coverage, summary])
}

pub fn write_filters(path: &Path, filters: &[crate::diagnostics::FilterSummary]) -> Result<(), HarnessError> {
    write_csv(
        path,
        filters.iter().map(|f| FilterRow {
            filter: &f.filter,
            kappa2: f.kappa2,
            grid: f.grid,
            max_relative_excess: f.max_relative_excess,
            pass: f.pass,
            violation: f
                .first_violation
                .as_ref()
                .map(|(c, l, t, o, d)| format!("{c} at lambda={l:e} t={t:e}: {o:e} > {d:e}"))
                .unwrap_or_default(),
        }),
    )
}

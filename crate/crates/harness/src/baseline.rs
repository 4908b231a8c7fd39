//! Hold-out selection of `λ` as a reference for the balancing rule.

use lepski_core::balancing::{balance, geometric_grid_with, GridConstraints};
use lepski_core::kernels::feature_matrix;
use lepski_core::spectral::fit_path;
use lepski_core::synthetic::{error_norms_from_coefficients, Dataset};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::experiment::{quantiles, record_from_outcome, run_jobs, ErrorPair, Quantiles, Setup, FAILURE_BUDGET};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoldoutChoice {
    pub lambda: f64,
    pub validation_risk: f64,
    /// Errors of the full-data estimator at the chosen `λ`.
    pub errors: ErrorPair,
}

/// Splits the sample in half, fits on the first half over `κ²q^{−i} ≥ κ²/n_train`,
/// picks the `λ` with the smallest mean squared validation residual and refits on
/// the full sample at that `λ`.
pub fn holdout_select(setup: &Setup, q: f64, data: &Dataset) -> Result<HoldoutChoice, HarnessError> {
    let n = data.len();
    let half = n / 2;
    if half < 1 || n - half < 1 {
        return Err(HarnessError::Config(format!("hold-out needs at least 2 samples, got {n}")));
    }
    let (xt, xv) = data.x.split_at(half);
    let (yt, yv) = data.y.split_at(half);
    let train = setup.decompose(xt, yt)?;
    let unconstrained = GridConstraints {
        floor: 1.0,
        dimension_factor: 0.0,
    };
    let grid = geometric_grid_with(setup.kappa2, q, half, unconstrained, |_| 0.0);
    let path = fit_path(&train, &setup.filter, &grid)?;
    let wv = feature_matrix(&setup.model, xv)?;
    let mut best: Option<(f64, f64)> = None;
    for (k, &lambda) in grid.iter().enumerate() {
        let theta = train.onb_coefficients(&path.beta[k])?;
        let pred = wv.mul_vec(&theta);
        let risk = pred.iter().zip(yv).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / yv.len() as f64;
        if best.is_none_or(|(_, r)| risk < r) {
            best = Some((lambda, risk));
        }
    }
    let (lambda, validation_risk) = best.ok_or_else(|| HarnessError::Run("hold-out grid is empty".into()))?;
    let full = setup.decompose(&data.x, &data.y)?;
    let refit = fit_path(&full, &setup.filter, &[lambda])?;
    let theta = full.onb_coefficients(&refit.beta[0])?;
    let e = error_norms_from_coefficients(&setup.model, &setup.target, &theta)?;
    Ok(HoldoutChoice {
        lambda,
        validation_risk,
        errors: ErrorPair { rkhs: e.rkhs, l2: e.l2 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRecord {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub holdout: HoldoutChoice,
    pub balancing_lambda: f64,
    pub balancing_empty_grid: bool,
    pub balancing: ErrorPair,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRow {
    pub n: usize,
    pub completed: usize,
    pub holdout_rkhs: Option<Quantiles>,
    pub holdout_l2: Option<Quantiles>,
    pub balancing_rkhs: Option<Quantiles>,
    pub balancing_l2: Option<Quantiles>,
    /// Per-replicate `e_H(hold-out)/e_H(balancing)`.
    pub rkhs_ratio: Option<Quantiles>,
    pub l2_ratio: Option<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineReport {
    pub config: ExperimentConfig,
    pub records: Vec<BaselineRecord>,
    pub failures: usize,
    pub table: Vec<BaselineRow>,
}

pub fn baseline_holdout(config: &ExperimentConfig, threads: usize) -> Result<BaselineReport, HarnessError> {
    let setup = Setup::new(config)?;
    let results = run_jobs(config, threads, |n, replicate, seed| {
        let data = setup.sample(n, seed)?;
        let holdout = holdout_select(&setup, config.balancing.q, &data)?;
        let dec = setup.decompose(&data.x, &data.y)?;
        let cfg = config.balancing_config(&setup.filter, setup.kappa2, n);
        let (outcome, _) = balance(&dec, &setup.filter, &cfg)?;
        let rec = record_from_outcome(&setup, &dec, outcome, n, replicate, seed, false)?;
        Ok(BaselineRecord {
            n,
            replicate,
            seed,
            holdout,
            balancing_lambda: rec.lambda_hat,
            balancing_empty_grid: rec.empty_grid,
            balancing: rec.hat,
        })
    })?;
    let total = results.len();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (_, _, _, out, _) in results {
        match out {
            Ok(r) => records.push(r),
            Err(e) => failures.push(e.to_string()),
        }
    }
    if failures.len() as f64 > FAILURE_BUDGET * total as f64 {
        return Err(HarnessError::Run(format!(
            "{} of {total} replicates failed; first: {}",
            failures.len(),
            failures[0]
        )));
    }
    let table = config
        .n
        .iter()
        .map(|&n| {
            let rs: Vec<&BaselineRecord> = records.iter().filter(|r| r.n == n).collect();
            let col = |f: &dyn Fn(&BaselineRecord) -> f64| quantiles(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            BaselineRow {
                n,
                completed: rs.len(),
                holdout_rkhs: col(&|r| r.holdout.errors.rkhs),
                holdout_l2: col(&|r| r.holdout.errors.l2),
                balancing_rkhs: col(&|r| r.balancing.rkhs),
                balancing_l2: col(&|r| r.balancing.l2),
                rkhs_ratio: col(&|r| r.holdout.errors.rkhs / r.balancing.rkhs),
                l2_ratio: col(&|r| r.holdout.errors.l2 / r.balancing.l2),
            }
        })
        .collect();
    Ok(BaselineReport {
        config: config.clone(),
        records,
        failures: failures.len(),
        table,
    })
}

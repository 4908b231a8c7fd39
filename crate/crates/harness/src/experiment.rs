//! Seeded Monte Carlo runs of the data-driven balancing estimator with exact
//! population errors at every grid value.

use std::time::Instant;

use lepski_core::balancing::{balance, BalancingOutcome, Comparison};
use lepski_core::filters::FilterFamily;
use lepski_core::kernels::feature_matrix;
use lepski_core::spectral::{fit_path, SpectralDecomposition};
use lepski_core::synthetic::{
    exact_error_norms, replicate_seed, sample_dataset, Dataset, NoiseModel, SourceConditionTarget, SpectralModel,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;

/// Largest fraction of aborted replicates tolerated in a run.
pub const FAILURE_BUDGET: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorPair {
    pub rkhs: f64,
    pub l2: f64,
}

/// One pairwise check of the selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trace {
    pub lambda: f64,
    pub lambda_prime: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl From<&Comparison> for Trace {
    fn from(c: &Comparison) -> Self {
        Self {
            lambda: c.lambda,
            lambda_prime: c.lambda_prime,
            lhs: c.lhs,
            rhs: c.rhs,
            pass: c.pass,
        }
    }
}

/// Grid value minimizing the true error in one norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleChoice {
    pub lambda: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub lambda_hat: f64,
    pub empty_grid: bool,
    pub grid: Vec<f64>,
    pub member_set: Vec<f64>,
    pub estimation_terms: Vec<f64>,
    pub threshold_constant: f64,
    pub ell: f64,
    /// Errors at every grid value, aligned with `grid`.
    pub grid_errors: Vec<ErrorPair>,
    pub hat: ErrorPair,
    /// `None` when the grid is empty.
    pub oracle_rkhs: Option<OracleChoice>,
    pub oracle_l2: Option<OracleChoice>,
    pub comparisons: Vec<Trace>,
}

impl ReplicateRecord {
    pub fn ratio_rkhs(&self) -> Option<f64> {
        self.oracle_rkhs.map(|o| ratio(self.hat.rkhs, o.error))
    }

    pub fn ratio_l2(&self) -> Option<f64> {
        self.oracle_l2.map(|o| ratio(self.hat.l2, o.error))
    }

    /// `λ̂` is in the grid or is the `κ²` sentinel with the flag set, and the
    /// smallest grid value is a member.
    pub fn is_consistent(&self, kappa2: f64) -> bool {
        if self.empty_grid {
            self.grid.is_empty() && self.lambda_hat == kappa2
        } else {
            self.grid.contains(&self.lambda_hat)
                && self.member_set.contains(self.grid.last().unwrap())
                && self.member_set.iter().all(|&l| l <= self.lambda_hat)
        }
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateFailure {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub message: String,
    /// The replicate violated a checked invariant rather than hitting an error.
    pub property: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub n: usize,
    pub replicate: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

/// Aggregates at one sample size; error and ratio quantiles exclude flagged runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeSummary {
    pub n: usize,
    pub completed: usize,
    pub failed: usize,
    pub empty_grid: usize,
    pub rkhs_hat: Option<Quantiles>,
    pub l2_hat: Option<Quantiles>,
    pub ratio_rkhs: Option<Quantiles>,
    pub ratio_l2: Option<Quantiles>,
    pub lambda_hat: Option<Quantiles>,
    pub median_grid_size: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub kappa2: f64,
    pub gamma_bar: f64,
    pub records: Vec<ReplicateRecord>,
    pub failures: Vec<ReplicateFailure>,
    pub summaries: Vec<SizeSummary>,
    #[serde(skip)]
    pub timings: Vec<Timing>,
}

/// Fixed ingredients shared by every replicate of a run.
pub struct Setup {
    pub model: SpectralModel,
    pub target: SourceConditionTarget,
    pub noise: NoiseModel,
    pub filter: FilterFamily,
    pub kappa2: f64,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let model = config.spectral_model()?;
        let kappa2 = model.kappa2();
        let target = config.target(&model)?;
        let filter = config.filter_family(kappa2)?;
        Ok(Self {
            model,
            target,
            noise: config.noise.model(),
            filter,
            kappa2,
        })
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset, HarnessError> {
        Ok(sample_dataset(&self.model, &self.target, &self.noise, n, seed)?)
    }

    pub fn decompose(&self, x: &[f64], y: &[f64]) -> Result<SpectralDecomposition, HarnessError> {
        let w = feature_matrix(&self.model, x)?;
        Ok(SpectralDecomposition::from_features(w, y, self.kappa2)?)
    }

    /// Exact errors of the estimator at each `λ` of a descending grid.
    pub fn errors_on(&self, dec: &SpectralDecomposition, grid: &[f64]) -> Result<Vec<ErrorPair>, HarnessError> {
        let path = fit_path(dec, &self.filter, grid)?;
        grid.iter()
            .map(|&l| {
                let e = exact_error_norms(&self.model, &self.target, dec, &path, l)?;
                Ok(ErrorPair { rkhs: e.rkhs, l2: e.l2 })
            })
            .collect()
    }
}

/// Runs `job` for every `(n, replicate)` on a pool of `threads` workers, keeping
/// the output in job order so that results do not depend on scheduling.
pub fn run_jobs<T: Send>(
    config: &ExperimentConfig,
    threads: usize,
    job: impl Fn(usize, usize, u64) -> Result<T, HarnessError> + Sync,
) -> Result<Vec<(usize, usize, u64, Result<T, HarnessError>, f64)>, HarnessError> {
    let jobs: Vec<(usize, usize)> = config
        .n
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |r| (n, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| HarnessError::Run(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|&(n, r)| {
                let seed = replicate_seed(config.seed, n, r);
                let start = Instant::now();
                let out = job(n, r, seed);
                (n, r, seed, out, start.elapsed().as_secs_f64())
            })
            .collect()
    }))
}

pub fn run_replicate(setup: &Setup, config: &ExperimentConfig, n: usize, replicate: usize, seed: u64) -> Result<ReplicateRecord, HarnessError> {
    let data = setup.sample(n, seed)?;
    let dec = setup.decompose(&data.x, &data.y)?;
    let cfg = config.balancing_config(&setup.filter, setup.kappa2, n);
    let (outcome, _) = balance(&dec, &setup.filter, &cfg)?;
    record_from_outcome(setup, &dec, outcome, n, replicate, seed, config.traces)
}

pub fn record_from_outcome(
    setup: &Setup,
    dec: &SpectralDecomposition,
    outcome: BalancingOutcome,
    n: usize,
    replicate: usize,
    seed: u64,
    traces: bool,
) -> Result<ReplicateRecord, HarnessError> {
    if !outcome.is_consistent(setup.kappa2) {
        return Err(HarnessError::Property(format!(
            "λ̂ = {:e} is neither a grid member nor the flagged sentinel",
            outcome.lambda_hat
        )));
    }
    let (grid_errors, hat, oracle_rkhs, oracle_l2) = if outcome.empty_grid_flag {
        let hat = setup.errors_on(dec, &[setup.kappa2])?[0];
        (Vec::new(), hat, None, None)
    } else {
        let errs = setup.errors_on(dec, &outcome.grid)?;
        let i = outcome.grid.iter().position(|&l| l == outcome.lambda_hat).unwrap();
        let best = |f: fn(&ErrorPair) -> f64| {
            let (k, e) = errs
                .iter()
                .enumerate()
                .min_by(|a, b| f(a.1).total_cmp(&f(b.1)))
                .unwrap();
            OracleChoice {
                lambda: outcome.grid[k],
                error: f(e),
            }
        };
        let orh = best(|e| e.rkhs);
        let orl = best(|e| e.l2);
        (errs.clone(), errs[i], Some(orh), Some(orl))
    };
    for e in grid_errors.iter().chain(std::iter::once(&hat)) {
        if !(e.rkhs.is_finite() && e.l2.is_finite() && e.rkhs >= 0.0 && e.l2 >= 0.0) {
            return Err(HarnessError::Property(format!("non-finite or negative error {e:?}")));
        }
    }
    Ok(ReplicateRecord {
        n,
        replicate,
        seed,
        lambda_hat: outcome.lambda_hat,
        empty_grid: outcome.empty_grid_flag,
        member_set: outcome.member_set,
        estimation_terms: outcome.estimation_terms,
        threshold_constant: outcome.threshold_constant,
        ell: outcome.ell,
        grid: outcome.grid,
        grid_errors,
        hat,
        oracle_rkhs,
        oracle_l2,
        comparisons: if traces {
            outcome.comparisons.iter().map(Trace::from).collect()
        } else {
            Vec::new()
        },
    })
}

pub fn quantiles(values: &[f64]) -> Option<Quantiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    };
    Some(Quantiles {
        q25: at(0.25),
        median: at(0.5),
        q75: at(0.75),
    })
}

pub fn summarize(n: usize, records: &[&ReplicateRecord], failed: usize) -> SizeSummary {
    let ok: Vec<&&ReplicateRecord> = records.iter().filter(|r| !r.empty_grid).collect();
    let collect = |f: &dyn Fn(&ReplicateRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
    let sizes: Vec<f64> = collect(&|r| Some(r.grid.len() as f64));
    SizeSummary {
        n,
        completed: records.len(),
        failed,
        empty_grid: records.len() - ok.len(),
        rkhs_hat: quantiles(&collect(&|r| Some(r.hat.rkhs))),
        l2_hat: quantiles(&collect(&|r| Some(r.hat.l2))),
        ratio_rkhs: quantiles(&collect(&|r| r.ratio_rkhs())),
        ratio_l2: quantiles(&collect(&|r| r.ratio_l2())),
        lambda_hat: quantiles(&collect(&|r| Some(r.lambda_hat))),
        median_grid_size: quantiles(&sizes).map(|q| q.median),
    }
}

/// Sample, decompose, balance and score every replicate.
pub fn run_experiment(config: &ExperimentConfig, threads: usize) -> Result<RunReport, HarnessError> {
    let setup = Setup::new(config)?;
    let results = run_jobs(config, threads, |n, r, seed| run_replicate(&setup, config, n, r, seed))?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut timings = Vec::new();
    for (n, replicate, seed, out, seconds) in results {
        timings.push(Timing { n, replicate, seconds });
        match out {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(ReplicateFailure {
                n,
                replicate,
                seed,
                message: e.to_string(),
                property: e.exit_code() == 2,
            }),
        }
    }
    let total = config.n.len() * config.replicates;
    if failures.len() as f64 > FAILURE_BUDGET * total as f64 {
        return Err(HarnessError::Run(format!(
            "{} of {total} replicates failed; first: {}",
            failures.len(),
            failures[0].message
        )));
    }
    let summaries = config
        .n
        .iter()
        .map(|&n| {
            let rs: Vec<&ReplicateRecord> = records.iter().filter(|r| r.n == n).collect();
            summarize(n, &rs, failures.iter().filter(|f| f.n == n).count())
        })
        .collect();
    Ok(RunReport {
        config: config.clone(),
        kappa2: setup.kappa2,
        gamma_bar: setup.filter.gamma_bar(),
        records,
        failures,
        summaries,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let q = quantiles(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((q.q25, q.median, q.q75), (2.0, 3.0, 4.0));
        let q = quantiles(&[1.0, 2.0]).unwrap();
        assert_eq!(q.median, 1.5);
        assert!(quantiles(&[]).is_none());
    }

    #[test]
    fn ratio_handles_zero_oracle() {
        assert_eq!(ratio(0.0, 0.0), 1.0);
        assert_eq!(ratio(1.0, 0.0), f64::INFINITY);
        assert_eq!(ratio(3.0, 2.0), 1.5);
    }
}

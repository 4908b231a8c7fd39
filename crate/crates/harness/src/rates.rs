//! Log-log regression of median errors on `n` against the predicted exponents,
//! plus the simultaneity check on oracle ratios.

use lepski_core::synthetic::rate_exponent;
use serde::Serialize;

use crate::config::{ConstantSpec, ExperimentConfig, ModelSpec};
use crate::error::HarnessError;
use crate::experiment::{run_experiment, RunReport};

/// Smallest number of `n` values a fit is attempted on.
pub const MIN_USABLE_POINTS: usize = 3;
pub const MIN_DISTINCT_N: usize = 4;
pub const MIN_REPLICATES: usize = 50;
/// Largest median oracle ratio accepted by the simultaneity check.
pub const SIMULTANEITY_RATIO: f64 = 3.0;
pub const DEFAULT_SLOPE_TOLERANCE: f64 = 0.12;

/// Ordinary least squares fit of `log y` on `log x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; `NaN` with only two points.
    pub slope_se: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

/// `None` with fewer than two points or no spread in `x`.
pub fn fit_log_log(x: &[f64], y: &[f64]) -> Option<SlopeFit> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = lx.iter().zip(&ly).map(|(a, b)| b - intercept - slope * a).collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let syy: f64 = ly.iter().map(|v| (v - my).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_se = if lx.len() > 2 {
        (sse / (m - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(SlopeFit {
        slope,
        intercept,
        slope_se,
        r_squared,
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RateStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormRate {
    pub norm: &'static str,
    pub s: f64,
    /// `−(r+s)/(2r+1+b)`.
    pub target_slope: f64,
    pub tolerance: f64,
    pub n: Vec<usize>,
    pub median_error: Vec<f64>,
    pub fit: Option<SlopeFit>,
    pub status: RateStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimultaneityRow {
    pub n: usize,
    pub median_ratio_rkhs: f64,
    pub median_ratio_l2: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub r: f64,
    pub b: f64,
    pub norms: Vec<NormRate>,
    pub simultaneity: Vec<SimultaneityRow>,
    pub simultaneity_status: RateStatus,
}

impl RateReport {
    /// Pass only if every slope and the simultaneity check pass.
    pub fn status(&self) -> RateStatus {
        let all = self
            .norms
            .iter()
            .map(|n| n.status)
            .chain(std::iter::once(self.simultaneity_status));
        let mut out = RateStatus::Pass;
        for s in all {
            match s {
                RateStatus::Fail => return RateStatus::Fail,
                RateStatus::Inconclusive => out = RateStatus::Inconclusive,
                RateStatus::Pass => {}
            }
        }
        out
    }

    pub fn norm(&self, name: &str) -> Option<&NormRate> {
        self.norms.iter().find(|n| n.norm == name)
    }
}

/// Checks the preconditions of a rate study and returns `(r, b)`.
pub fn validate_rate_config(config: &ExperimentConfig) -> Result<(f64, f64), HarnessError> {
    config.validate()?;
    let mut distinct = config.n.clone();
    distinct.dedup();
    if distinct.len() < MIN_DISTINCT_N {
        return Err(HarnessError::Config(format!(
            "a rate study needs at least {MIN_DISTINCT_N} distinct n values, got {}",
            distinct.len()
        )));
    }
    if config.replicates < MIN_REPLICATES {
        return Err(HarnessError::Config(format!(
            "a rate study needs at least {MIN_REPLICATES} replicates per n, got {}",
            config.replicates
        )));
    }
    if matches!(config.balancing.constant_mode, ConstantSpec::Theory) {
        return Err(HarnessError::Config("a rate study runs in scaled constant mode".into()));
    }
    let b = match config.model {
        ModelSpec::Mercer { decay, .. } => decay,
        ModelSpec::Gaussian { .. } => {
            return Err(HarnessError::Config("a rate study needs a power-law Mercer model".into()))
        }
    };
    Ok((config.r, b))
}

/// A sample size is usable when at most half of its replicates hit an empty grid.
fn usable(report: &RunReport, n: usize) -> bool {
    report
        .summaries
        .iter()
        .find(|s| s.n == n)
        .is_some_and(|s| s.completed > 0 && 2 * s.empty_grid <= s.completed && s.rkhs_hat.is_some())
}

/// Fits slopes for `s ∈ {0, ½}` and checks simultaneity on an existing run.
pub fn rate_report(report: &RunReport, r: f64, b: f64, tolerance: f64) -> RateReport {
    let ns: Vec<usize> = report.config.n.iter().copied().filter(|&n| usable(report, n)).collect();
    let summary = |n: usize| report.summaries.iter().find(|s| s.n == n).unwrap();
    let norms = [("rkhs", 0.0), ("l2", 0.5)]
        .into_iter()
        .map(|(norm, s)| {
            let median_error: Vec<f64> = ns
                .iter()
                .map(|&n| {
                    let sm = summary(n);
                    let q = if s == 0.0 { sm.rkhs_hat } else { sm.l2_hat };
                    q.unwrap().median
                })
                .collect();
            let target_slope = -rate_exponent(r, b, s);
            let fit = if ns.len() >= MIN_USABLE_POINTS {
                let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
                fit_log_log(&x, &median_error)
            } else {
                None
            };
            let status = match &fit {
                None => RateStatus::Inconclusive,
                Some(f) if (f.slope - target_slope).abs() <= tolerance => RateStatus::Pass,
                Some(_) => RateStatus::Fail,
            };
            NormRate {
                norm,
                s,
                target_slope,
                tolerance,
                n: ns.clone(),
                median_error,
                fit,
                status,
            }
        })
        .collect();
    let simultaneity: Vec<SimultaneityRow> = ns
        .iter()
        .map(|&n| {
            let sm = summary(n);
            let rh = sm.ratio_rkhs.map_or(f64::INFINITY, |q| q.median);
            let rl = sm.ratio_l2.map_or(f64::INFINITY, |q| q.median);
            SimultaneityRow {
                n,
                median_ratio_rkhs: rh,
                median_ratio_l2: rl,
                pass: rh <= SIMULTANEITY_RATIO && rl <= SIMULTANEITY_RATIO,
            }
        })
        .collect();
    let simultaneity_status = if ns.len() < MIN_USABLE_POINTS {
        RateStatus::Inconclusive
    } else if simultaneity.iter().all(|s| s.pass) {
        RateStatus::Pass
    } else {
        RateStatus::Fail
    };
    RateReport {
        r,
        b,
        norms,
        simultaneity,
        simultaneity_status,
    }
}

/// Runs the experiment and fits the rates.
pub fn rate_study(config: &ExperimentConfig, threads: usize, tolerance: f64) -> Result<(RunReport, RateReport), HarnessError> {
    let (r, b) = validate_rate_config(config)?;
    let run = run_experiment(config, threads)?;
    let rates = rate_report(&run, r, b, tolerance);
    Ok((run, rates))
}

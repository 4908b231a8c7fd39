//! Deterministic inequality checks, the abstract oracle suite, filter-constant
//! verification and deviation-bound coverage, in serializable form.

use lepski_core::diagnostics::{
    abstract_oracle_check, check_cordes_style, check_interpolation_tool, check_moment_inequality,
    check_norm_identities, check_subadditivity, check_sublinear_perturbation, check_zhou_decomposition,
    coverage_study, AbstractInstance, DeviationBound, PropertyReport,
};
use lepski_core::filters::{filter_constant_report, FilterFamily};
use lepski_core::synthetic::{NoiseModel, SourceConditionTarget, SpectralModel};
use lepski_core::filters::IndexFunction;
use serde::Serialize;

use crate::config::{ExperimentConfig, ModelSpec};
use crate::error::HarnessError;

/// Largest `n` of the random instances in the norm-identity check.
pub const NORM_IDENTITY_MAX_N: usize = 32;
/// Points per axis of the filter verification grid.
pub const FILTER_GRID: usize = 200;
/// Largest tolerated violation frequency of a deviation bound.
pub const COVERAGE_BUDGET: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckSummary {
    pub check: String,
    pub trials: usize,
    pub seed: u64,
    pub max_excess: f64,
    pub worst_trial: usize,
    pub pass: bool,
    /// Reproducer of the worst trial when it violates the check.
    pub detail: String,
}

impl From<PropertyReport> for CheckSummary {
    fn from(r: PropertyReport) -> Self {
        Self {
            pass: r.holds(),
            check: r.check.to_string(),
            trials: r.trials,
            seed: r.seed,
            max_excess: r.max_excess,
            worst_trial: r.worst_trial,
            detail: r.detail,
        }
    }
}

/// The operator inequality checks, each over `trials` random pairs of size `dim`.
pub fn operator_checks(trials: usize, dim: usize, seed: u64) -> Result<Vec<CheckSummary>, HarnessError> {
    let runs: [fn(usize, usize, u64) -> lepski_core::Result<PropertyReport>; 5] = [
        check_sublinear_perturbation,
        check_cordes_style,
        check_zhou_decomposition,
        check_interpolation_tool,
        check_moment_inequality,
    ];
    runs.iter()
        .map(|f| Ok(CheckSummary::from(f(trials, dim, seed)?)))
        .collect()
}

/// Norm identities and effective-dimension properties on small random samples,
/// plus subadditivity of the sublinear functions.
pub fn engine_checks(trials: usize, seed: u64) -> Result<Vec<CheckSummary>, HarnessError> {
    Ok(vec![
        check_norm_identities(trials, NORM_IDENTITY_MAX_N, seed)?.into(),
        check_subadditivity(trials, seed)?.into(),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremInstance {
    pub p: f64,
    pub c: f64,
    pub q: f64,
    pub steps: usize,
    pub seed: u64,
    pub lambda_hat: f64,
    pub lambda_star: f64,
    /// Error of `f^λ̂` in the `(A+λ*)` norm and in the `(A+λ̂)` norm.
    pub error_at_star: f64,
    pub error_at_hat: f64,
    pub error_bound: f64,
    pub c_s: f64,
    /// `(s, left side, right side)` of the oracle bound.
    pub oracle: Vec<(f64, f64, f64)>,
    pub hat_dominates_star: bool,
    pub error_bound_holds: bool,
    pub stated_error_bound_holds: bool,
    pub oracle_bound_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremSuite {
    pub instances: Vec<TheoremInstance>,
    pub hat_dominates_star: usize,
    pub error_bound: usize,
    pub stated_error_bound: usize,
    pub oracle_bound: usize,
}

impl TheoremSuite {
    /// All instances satisfy `λ̂ ≥ λ*`, the error bound in the `(A+λ*)` norm and
    /// the oracle bound.
    pub fn pass(&self) -> bool {
        let n = self.instances.len();
        self.hat_dominates_star == n && self.error_bound == n && self.oracle_bound == n
    }
}

/// Cycles through `p ∈ {½,1,2}`, `c ∈ {10⁻³,10⁻²,10⁻¹}` and `q ∈ {1.2, 2}` with
/// `n = 1000`, `C = 1` and grids reaching about `10⁻⁵`.
pub fn theorem_instances(count: usize, seed: u64) -> Vec<AbstractInstance> {
    const P: [f64; 3] = [0.5, 1.0, 2.0];
    const C: [f64; 3] = [1e-3, 1e-2, 1e-1];
    const Q: [(f64, usize); 2] = [(1.2, 60), (2.0, 20)];
    (0..count)
        .map(|i| {
            let (q, steps) = Q[(i / 9) % 2];
            AbstractInstance {
                p: P[i % 3],
                c: C[(i / 3) % 3],
                n: 1000.0,
                q,
                steps,
                constant: 1.0,
                dim: 16,
                seed: seed.wrapping_add(i as u64),
            }
        })
        .collect()
}

pub fn theorem_suite(count: usize, seed: u64) -> Result<TheoremSuite, HarnessError> {
    let mut instances = Vec::with_capacity(count);
    for inst in theorem_instances(count, seed) {
        let c = abstract_oracle_check(&inst)?;
        instances.push(TheoremInstance {
            p: inst.p,
            c: inst.c,
            q: inst.q,
            steps: inst.steps,
            seed: inst.seed,
            hat_dominates_star: c.hat_dominates_star(),
            error_bound_holds: c.error_bound_holds(),
            stated_error_bound_holds: c.stated_error_bound_holds(),
            oracle_bound_holds: c.oracle_bound_holds(),
            lambda_hat: c.lambda_hat,
            lambda_star: c.lambda_star,
            error_at_star: c.error_at_star,
            error_at_hat: c.error_at_hat,
            error_bound: c.error_bound,
            c_s: c.c_s,
            oracle: c.oracle,
        });
    }
    let count_of = |f: fn(&TheoremInstance) -> bool| instances.iter().filter(|i| f(i)).count();
    Ok(TheoremSuite {
        hat_dominates_star: count_of(|i| i.hat_dominates_star),
        error_bound: count_of(|i| i.error_bound_holds),
        stated_error_bound: count_of(|i| i.stated_error_bound_holds),
        oracle_bound: count_of(|i| i.oracle_bound_holds),
        instances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterSummary {
    pub filter: String,
    pub kappa2: f64,
    pub grid: usize,
    pub max_relative_excess: f64,
    pub pass: bool,
    /// `(constant, λ, t, observed, declared)` of the first failing constant.
    pub first_violation: Option<(String, f64, f64, f64, f64)>,
}

/// The four families with the constants they declare.
pub fn standard_families(kappa2: f64) -> Result<Vec<FilterFamily>, HarnessError> {
    Ok(vec![
        FilterFamily::tikhonov(kappa2),
        FilterFamily::iterated_tikhonov(kappa2, 3)?,
        FilterFamily::spectral_cutoff(kappa2, 2.0)?,
        FilterFamily::landweber(kappa2, 1.5)?,
    ])
}

pub fn verify_filters(families: &[FilterFamily], kappa2: f64, grid: usize) -> Vec<FilterSummary> {
    families
        .iter()
        .map(|f| {
            let r = filter_constant_report(f, kappa2, grid, grid);
            FilterSummary {
                filter: r.filter.to_string(),
                kappa2,
                grid,
                max_relative_excess: r.max_relative_excess(),
                pass: r.first_violation().is_none(),
                first_violation: r
                    .first_violation()
                    .map(|c| (c.name.to_string(), c.lambda, c.t, c.observed, c.declared)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub n: usize,
    pub bound: &'static str,
    pub lambda: f64,
    pub applicable: usize,
    pub violations: usize,
    pub frequency: Option<f64>,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageSummary {
    pub n: usize,
    pub bound: &'static str,
    pub replicates: usize,
    pub eta: f64,
    pub max_frequency: Option<f64>,
    pub pass: bool,
}

/// `κ²q^{−i}` down to `κ²/n`, the range on which the data grid can live.
pub fn coverage_grid(kappa2: f64, q: f64, n: usize) -> Vec<f64> {
    let floor = kappa2 / n as f64;
    (0..)
        .map(|i| kappa2 * q.powi(-i))
        .take_while(|&l| l >= floor)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageResult {
    pub rows: Vec<CoverageRow>,
    pub summaries: Vec<CoverageSummary>,
}

impl CoverageResult {
    pub fn pass(&self) -> bool {
        self.summaries.iter().all(|s| s.pass)
    }
}

/// Marginal violation frequencies of every deviation bound on the `D`-truncated
/// model of the config.
pub fn run_coverage(config: &ExperimentConfig) -> Result<CoverageResult, HarnessError> {
    let d = &config.diagnostics;
    let decay = match config.model {
        ModelSpec::Mercer { decay, .. } => decay,
        ModelSpec::Gaussian { .. } => {
            return Err(HarnessError::Config("coverage needs a power-law Mercer model".into()))
        }
    };
    let model = SpectralModel::power_law(decay, d.truncation)?;
    let phi = IndexFunction::power(config.r);
    let target = SourceConditionTarget::default_source(&model, phi, config.sign_seed)?;
    let noise: NoiseModel = config.noise.model();
    let k2 = model.kappa2();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (k, &n) in d.n.iter().enumerate() {
        let lambdas = coverage_grid(k2, config.balancing.q, n);
        let seed = config.seed.wrapping_add(k as u64);
        let rep = coverage_study(&model, &target, &noise, &lambdas, n, d.replicates, d.eta, seed)?;
        for c in &rep.cells {
            rows.push(CoverageRow {
                n,
                bound: c.bound.name(),
                lambda: c.lambda,
                applicable: c.applicable,
                violations: c.violations,
                frequency: c.frequency(),
                max_ratio: c.max_ratio,
            });
        }
        for b in DeviationBound::ALL {
            let f = rep.max_frequency(b);
            summaries.push(CoverageSummary {
                n,
                bound: b.name(),
                replicates: d.replicates,
                eta: d.eta,
                max_frequency: f,
                pass: f.is_none_or(|f| f <= COVERAGE_BUDGET),
            });
        }
    }
    Ok(CoverageResult { rows, summaries })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub config: ExperimentConfig,
    pub checks: Vec<CheckSummary>,
    pub theorem: TheoremSuite,
    pub filters: Vec<FilterSummary>,
    pub coverage: CoverageResult,
}

impl DiagnosticsReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
            && self.theorem.pass()
            && self.filters.iter().all(|f| f.pass)
            && self.coverage.pass()
    }
}

/// Number of abstract instances in the theorem suite.
pub const THEOREM_INSTANCES: usize = 100;

pub fn run_diagnostics(config: &ExperimentConfig) -> Result<DiagnosticsReport, HarnessError> {
    config.validate()?;
    let d = &config.diagnostics;
    let mut checks = operator_checks(d.trials, d.dim, config.seed)?;
    checks.extend(engine_checks(d.trials, config.seed)?);
    let k2 = config.spectral_model().map(|m| m.kappa2()).unwrap_or(1.0);
    let mut families = standard_families(k2)?;
    let own = config.filter_family(k2)?;
    if !families.contains(&own) {
        families.push(own);
    }
    Ok(DiagnosticsReport {
        config: config.clone(),
        checks,
        theorem: theorem_suite(THEOREM_INSTANCES, config.seed)?,
        filters: verify_filters(&families, k2, FILTER_GRID),
        coverage: run_coverage(config)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_grid_stops_at_kappa2_over_n() {
        let g = coverage_grid(2.0, 2.0, 16);
        assert_eq!(g, vec![2.0, 1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn theorem_instances_cover_every_combination() {
        let inst = theorem_instances(18, 0);
        let mut combos: Vec<(u64, u64, u64)> = inst
            .iter()
            .map(|i| (i.p.to_bits(), i.c.to_bits(), i.q.to_bits()))
            .collect();
        combos.sort();
        combos.dedup();
        assert_eq!(combos.len(), 18);
    }

    #[test]
    fn small_theorem_suite_passes() {
        let s = theorem_suite(6, 3).unwrap();
        assert!(s.pass(), "{s:?}");
    }
}

use std::fs;
use std::path::Path;

use lepski_harness::baseline::baseline_holdout;
use lepski_harness::config::{ConstantSpec, ExperimentConfig, ModelSpec, NoiseSpec};
use lepski_harness::experiment::run_experiment;
use lepski_harness::rates::{rate_study, validate_rate_config, RateStatus};
use lepski_harness::report::{write_baseline, write_run};
use lepski_harness::HarnessError;

fn small(n: Vec<usize>, replicates: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.n = n;
    cfg.replicates = replicates;
    cfg.model = ModelSpec::Mercer {
        decay: 0.5,
        truncation: 64,
    };
    cfg
}

fn zero_noise(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.noise = NoiseSpec::Gaussian { level: 0.0 };
    cfg.balancing.sigma = 1e-4;
    cfg.balancing.m = 1e-4;
    cfg
}

#[test]
fn smoke_run_records_selection_and_traces() {
    let cfg = zero_noise(small(vec![128], 1));
    let run = run_experiment(&cfg, 1).unwrap();
    assert_eq!(run.records.len(), 1);
    let r = &run.records[0];
    assert!(!r.empty_grid);
    assert!(r.grid.contains(&r.lambda_hat));
    assert_eq!(r.grid_errors.len(), r.grid.len());
    assert!(!r.comparisons.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let files = write_run(dir.path(), &run, None).unwrap();
    for name in ["replicates.csv", "grid_errors.csv", "comparisons.csv", "summary.json", "timings.csv"] {
        assert!(files.iter().any(|p| p.ends_with(name)), "{name} missing");
    }
}

fn deterministic_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.ends_with("timings.csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn identical_seeds_give_byte_identical_reports() {
    let cfg = small(vec![64, 128], 3);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_run(a.path(), &run_experiment(&cfg, 1).unwrap(), None).unwrap();
    write_run(b.path(), &run_experiment(&cfg, 1).unwrap(), None).unwrap();
    assert_eq!(deterministic_files(a.path()), deterministic_files(b.path()));
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = small(vec![64, 96, 128], 4);
    let seq = run_experiment(&cfg, 1).unwrap();
    let par = run_experiment(&cfg, 3).unwrap();
    assert_eq!(seq.records, par.records);
    assert_eq!(seq.summaries, par.summaries);
}

#[test]
fn different_seeds_give_different_samples() {
    let mut cfg = small(vec![64], 2);
    let a = run_experiment(&cfg, 1).unwrap();
    cfg.seed += 1;
    let b = run_experiment(&cfg, 1).unwrap();
    assert_ne!(a.records[0].seed, b.records[0].seed);
    assert_ne!(a.records[0].hat, b.records[0].hat);
}

#[test]
fn oracle_ratios_are_at_least_one_and_selection_is_consistent() {
    let cfg = small(vec![64, 256], 8);
    let run = run_experiment(&cfg, 2).unwrap();
    for r in &run.records {
        assert!(r.is_consistent(run.kappa2));
        assert!(r.ratio_rkhs().unwrap() >= 1.0);
        assert!(r.ratio_l2().unwrap() >= 1.0);
        for e in &r.grid_errors {
            assert!(e.rkhs.is_finite() && e.l2.is_finite() && e.rkhs >= 0.0 && e.l2 >= 0.0);
        }
    }
}

#[test]
fn theory_constants_at_small_n_give_the_flagged_sentinel() {
    let mut cfg = small(vec![256], 2);
    cfg.balancing.constant_mode = ConstantSpec::Theory;
    let lepski_core::balancing::ConstantMode::Theory = cfg.balancing.constant_mode.mode() else {
        panic!("theory mode expected");
    };
    let run = run_experiment(&cfg, 1).unwrap();
    for r in &run.records {
        assert!(r.empty_grid);
        assert_eq!(r.lambda_hat, run.kappa2);
        assert!(r.oracle_rkhs.is_none());
        assert!(r.is_consistent(run.kappa2));
    }
    assert_eq!(run.summaries[0].empty_grid, 2);
    assert!(run.summaries[0].ratio_rkhs.is_none());
}

#[test]
fn rate_configs_need_enough_sample_sizes_and_replicates() {
    let single = small(vec![128], 60);
    assert!(matches!(validate_rate_config(&single), Err(HarnessError::Config(_))));
    let few = small(vec![64, 128, 256, 512], 10);
    assert!(matches!(validate_rate_config(&few), Err(HarnessError::Config(_))));
    let mut theory = small(vec![64, 128, 256, 512], 50);
    theory.balancing.constant_mode = ConstantSpec::Theory;
    assert!(matches!(validate_rate_config(&theory), Err(HarnessError::Config(_))));
    assert!(validate_rate_config(&small(vec![64, 128, 256, 512], 50)).is_ok());
}

#[test]
fn doubling_the_noise_shifts_errors_but_not_slopes() {
    let base = small(vec![128, 256, 512, 1024], 50);
    let mut loud = base.clone();
    loud.noise = NoiseSpec::Gaussian { level: 0.2 };
    loud.balancing.sigma = 0.2;
    loud.balancing.m = 0.2;
    let (_, a) = rate_study(&base, 2, 0.5).unwrap();
    let (_, b) = rate_study(&loud, 2, 0.5).unwrap();
    for norm in ["rkhs", "l2"] {
        let fa = a.norm(norm).unwrap();
        let fb = b.norm(norm).unwrap();
        assert_ne!(fa.status, RateStatus::Inconclusive);
        for (ea, eb) in fa.median_error.iter().zip(&fb.median_error) {
            assert!(eb > ea, "{norm}: {eb} ≤ {ea}");
        }
        let (sa, sb) = (fa.fit.as_ref().unwrap().slope, fb.fit.as_ref().unwrap().slope);
        assert!((sa - sb).abs() <= 0.1, "{norm}: slopes {sa} and {sb}");
    }
}

#[test]
fn holdout_baseline_table_under_zero_noise() {
    let cfg = zero_noise(small(vec![128, 256], 3));
    let report = baseline_holdout(&cfg, 1).unwrap();
    assert_eq!(report.records.len(), 6);
    assert_eq!(report.table.len(), 2);
    for r in &report.records {
        // The target has ‖f‖_L² of order 0.5; both rules should fit it closely.
        assert!(r.holdout.errors.l2 < 0.1, "{r:?}");
        assert!(r.balancing.l2 < 0.1, "{r:?}");
    }
    for row in &report.table {
        assert!(row.rkhs_ratio.unwrap().median > 0.0);
    }
    let dir = tempfile::tempdir().unwrap();
    let files = write_baseline(dir.path(), &report).unwrap();
    let table = fs::read_to_string(files.iter().find(|p| p.ends_with("baseline.csv")).unwrap()).unwrap();
    assert!(table.starts_with("n,completed,holdout_rkhs_median"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn gaussian_kernel_is_rejected_for_exact_errors() {
    let mut cfg = small(vec![64], 1);
    cfg.model = ModelSpec::Gaussian { width: 0.2 };
    assert!(matches!(run_experiment(&cfg, 1), Err(HarnessError::Config(_))));
}

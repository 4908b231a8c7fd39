use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lepski_harness::baseline::baseline_holdout;
use lepski_harness::config::{ConstantSpec, ExperimentConfig};
use lepski_harness::diagnostics::{run_diagnostics, standard_families, verify_filters, FILTER_GRID};
use lepski_harness::experiment::{run_experiment, RunReport};
use lepski_harness::rates::{rate_study, RateStatus, DEFAULT_SLOPE_TOLERANCE};
use lepski_harness::report::{write_baseline, write_diagnostics, write_filters, write_run};
use lepski_harness::HarnessError;

/// Adaptive regularization by the balancing principle: experiments and checks.
#[derive(Parser)]
#[command(name = "lepski", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replicates; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// `theory` or `scaled:<c>`, overriding the config.
    #[arg(long, global = true)]
    constant_mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo run of the balancing estimator.
    Run { config: PathBuf },
    /// Run plus log-log slope fits against the predicted exponents.
    Rates {
        config: PathBuf,
        /// Allowed distance of each fitted slope from its target.
        #[arg(long, default_value_t = DEFAULT_SLOPE_TOLERANCE)]
        tolerance: f64,
    },
    /// Inequality checks, the abstract oracle suite and deviation coverage.
    Diagnostics { config: PathBuf },
    /// Checks the declared constants of the four filter families.
    VerifyFilters {
        /// Points per axis of the log grid.
        #[arg(long, default_value_t = FILTER_GRID)]
        grid: usize,
        #[arg(long, default_value_t = 1.0)]
        kappa2: f64,
    },
    /// Hold-out selection next to the balancing rule.
    Baseline { config: PathBuf },
}

fn load(path: &Path, g: &Global) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(d) = &g.out_dir {
        cfg.out_dir = d.to_string_lossy().into_owned();
    }
    if let Some(m) = &g.constant_mode {
        cfg.balancing.constant_mode = ConstantSpec::parse(m)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn threads(g: &Global) -> usize {
    g.threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn print_run(run: &RunReport) {
    println!("{:>6} {:>5} {:>5} {:>12} {:>12} {:>10} {:>10}", "n", "done", "empty", "rkhs_med", "l2_med", "ratio_H", "ratio_L2");
    let med = |q: Option<lepski_harness::experiment::Quantiles>| q.map_or(f64::NAN, |q| q.median);
    for s in &run.summaries {
        println!(
            "{:>6} {:>5} {:>5} {:>12.4e} {:>12.4e} {:>10.3} {:>10.3}",
            s.n,
            s.completed,
            s.empty_grid,
            med(s.rkhs_hat),
            med(s.l2_hat),
            med(s.ratio_rkhs),
            med(s.ratio_l2)
        );
    }
}

/// Exit code 2 when a replicate violated a checked invariant.
fn run_status(run: &RunReport) -> u8 {
    if run.failures.iter().any(|f| f.property) {
        eprintln!("{} replicate(s) violated an invariant", run.failures.iter().filter(|f| f.property).count());
        2
    } else {
        0
    }
}

fn execute(cli: Cli) -> Result<u8, HarnessError> {
    let g = &cli.global;
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config, g)?;
            let run = run_experiment(&cfg, threads(g))?;
            write_run(Path::new(&cfg.out_dir), &run, None)?;
            print_run(&run);
            Ok(run_status(&run))
        }
        Command::Rates { config, tolerance } => {
            let cfg = load(config, g)?;
            let (run, rates) = rate_study(&cfg, threads(g), *tolerance)?;
            write_run(Path::new(&cfg.out_dir), &run, Some(&rates))?;
            print_run(&run);
            for n in &rates.norms {
                match &n.fit {
                    Some(f) => println!(
                        "{:<5} slope {:+.4} ± {:.4} (target {:+.4}, R² {:.3}): {:?}",
                        n.norm, f.slope, f.slope_se, n.target_slope, f.r_squared, n.status
                    ),
                    None => println!("{:<5} fewer than 3 usable sample sizes: {:?}", n.norm, n.status),
                }
            }
            println!("simultaneity: {:?}", rates.simultaneity_status);
            Ok(match rates.status() {
                RateStatus::Fail => 2,
                RateStatus::Pass | RateStatus::Inconclusive => run_status(&run),
            })
        }
        Command::Diagnostics { config } => {
            let cfg = load(config, g)?;
            let report = run_diagnostics(&cfg)?;
            write_diagnostics(Path::new(&cfg.out_dir), &report)?;
            for c in &report.checks {
                println!("{:<28} trials {:>5} max excess {:+.3e} {}", c.check, c.trials, c.max_excess, if c.pass { "ok" } else { "VIOLATED" });
            }
            let t = &report.theorem;
            println!(
                "abstract oracle suite: {} instances, λ̂ ≥ λ* {}, error bound {}, error bound at λ̂ {}, oracle bound {}",
                t.instances.len(),
                t.hat_dominates_star,
                t.error_bound,
                t.stated_error_bound,
                t.oracle_bound
            );
            for f in &report.filters {
                println!("{:<18} max relative excess {:+.3e} {}", f.filter, f.max_relative_excess, if f.pass { "ok" } else { "VIOLATED" });
            }
            for s in &report.coverage.summaries {
                println!("coverage n={:<5} {:<12} max frequency {:?}", s.n, s.bound, s.max_frequency);
            }
            Ok(if report.pass() { 0 } else { 2 })
        }
        Command::VerifyFilters { grid, kappa2 } => {
            if *grid < 2 || !(*kappa2 > 0.0) {
                return Err(HarnessError::Config("grid must be at least 2 and κ² positive".into()));
            }
            let rows = verify_filters(&standard_families(*kappa2)?, *kappa2, *grid);
            if let Some(d) = &g.out_dir {
                std::fs::create_dir_all(d)?;
                write_filters(&d.join("filters.csv"), &rows)?;
            }
            for f in &rows {
                println!("{:<18} max relative excess {:+.3e} {}", f.filter, f.max_relative_excess, if f.pass { "ok" } else { "VIOLATED" });
            }
            Ok(if rows.iter().all(|f| f.pass) { 0 } else { 2 })
        }
        Command::Baseline { config } => {
            let cfg = load(config, g)?;
            let report = baseline_holdout(&cfg, threads(g))?;
            write_baseline(Path::new(&cfg.out_dir), &report)?;
            println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "n", "holdout_H", "balance_H", "ratio_H", "ratio_L2");
            let med = |q: Option<lepski_harness::experiment::Quantiles>| q.map_or(f64::NAN, |q| q.median);
            for t in &report.table {
                println!(
                    "{:>6} {:>12.4e} {:>12.4e} {:>12.3} {:>12.3}",
                    t.n,
                    med(t.holdout_rkhs),
                    med(t.balancing_rkhs),
                    med(t.rkhs_ratio),
                    med(t.l2_ratio)
                );
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

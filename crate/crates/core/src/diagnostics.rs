//! Deterministic operator inequalities as seeded randomized checks, the deviation
//! quantities of the probabilistic analysis, and their Monte Carlo coverage.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::filters::{FilterFamily, IndexFunction, IndexShape};
use crate::kernels::{gram_matrix, KernelSpec};
use crate::linalg::{operator_norm, orthonormal_columns, symmetric_eigen, Matrix};
use crate::spectral::{
    decompose, empirical_effective_dimension, empirical_norm_squared, fit_path, weighted_diff_norm,
};
use crate::synthetic::{sample_dataset, Dataset, NoiseModel, SourceConditionTarget, SpectralModel};

/// Slack allowed in every deterministic inequality, relative to `1 + rhs`.
pub const INEQUALITY_TOLERANCE: f64 = 1e-9;
/// Largest dimension accepted by the dense matrix-function checks.
pub const MAX_CHECK_DIMENSION: usize = 20;

/// Independent generator for `trial` under a master `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// `Q diag(d) Qᵀ` with `Q` from the QR factor of a standard normal matrix and
/// `d` log-uniform on `[1e−3, 1]`.
pub fn random_psd<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Matrix {
    let q = random_orthogonal(dim, rng);
    let d: Vec<f64> = (0..dim).map(|_| libm::pow(10.0, -3.0 * rng.random::<f64>())).collect();
    let qd = Matrix::from_fn(dim, dim, |i, j| q[(i, j)] * d[j]);
    let mut a = qd.matmul(&q.transpose());
    a.symmetrize();
    a
}

pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Matrix {
    loop {
        let g = Matrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(q) = orthonormal_columns(&g) {
            return q;
        }
    }
}

pub fn random_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// `f(A)` for symmetric `A` by dense eigendecomposition.
pub fn matrix_function(a: &Matrix, f: impl Fn(f64) -> f64) -> Result<Matrix> {
    Ok(symmetric_eigen(a)?.apply(f))
}

/// Outcome of one randomized inequality check.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub check: &'static str,
    pub trials: usize,
    pub seed: u64,
    /// Largest `(lhs − rhs)/(1 + rhs)` seen; nonpositive when every trial holds.
    pub max_excess: f64,
    pub worst_trial: usize,
    /// Reproducer for the worst trial.
    pub detail: String,
}

impl PropertyReport {
    fn new(check: &'static str, trials: usize, seed: u64) -> Self {
        Self {
            check,
            trials,
            seed,
            max_excess: f64::NEG_INFINITY,
            worst_trial: 0,
            detail: String::new(),
        }
    }

    fn observe(&mut self, trial: usize, lhs: f64, rhs: f64, detail: impl FnOnce() -> String) {
        let excess = (lhs - rhs) / (1.0 + rhs.abs());
        if !(excess <= self.max_excess) {
            self.max_excess = if excess.is_nan() { f64::INFINITY } else { excess };
            self.worst_trial = trial;
            if excess > INEQUALITY_TOLERANCE || excess.is_nan() {
                self.detail = detail();
            }
        }
    }

    pub fn holds(&self) -> bool {
        self.max_excess <= INEQUALITY_TOLERANCE
    }

    /// `Err(PropertyViolation)` carrying the seed and trial of the worst case.
    pub fn into_result(self) -> Result<Self> {
        if self.holds() {
            Ok(self)
        } else {
            Err(Error::PropertyViolation {
                check: self.check,
                seed: self.seed,
                trial: self.worst_trial,
                excess: self.max_excess,
            })
        }
    }
}

fn check_dimension(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_CHECK_DIMENSION {
        return Err(Error::Parameter(format!(
            "dense checks need 1 ≤ dim ≤ {MAX_CHECK_DIMENSION}, got {dim}"
        )));
    }
    Ok(())
}

fn dump(name: &str, m: &Matrix) -> String {
    format!("{name} = {:?}", m.as_slice())
}

/// Sublinear nondecreasing functions exercised by the perturbation checks.
pub fn sublinear_functions() -> Vec<(&'static str, IndexFunction)> {
    vec![
        ("t^0.25", IndexFunction::power(0.25)),
        ("t^0.5", IndexFunction::power(0.5)),
        ("t^0.75", IndexFunction::power(0.75)),
        ("t", IndexFunction::power(1.0)),
        ("t/(1+t)", IndexFunction::new(1.0, IndexShape::Saturating)),
        ("log(1+t)", IndexFunction::new(1.0, IndexShape::Log1p)),
    ]
}

/// `‖φ(A)φ(B)^{−1} − I‖_HS ≤ ‖AB^{−1} − I‖_HS` for random positive definite pairs,
/// and the scalar form `|φ(μ)/φ(ν) − 1| ≤ |μ/ν − 1|`.
pub fn check_sublinear_perturbation(trials: usize, dim: usize, seed: u64) -> Result<PropertyReport> {
    check_dimension(dim)?;
    let mut report = PropertyReport::new("sublinear_perturbation", trials, seed);
    let eye = Matrix::identity(dim);
    let funcs = sublinear_functions();
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let a = random_psd(dim, &mut rng);
        let b = random_psd(dim, &mut rng);
        let b_inv = matrix_function(&b, |t| 1.0 / t)?;
        let rhs = a.matmul(&b_inv).sub(&eye).frobenius_norm();
        let ea = symmetric_eigen(&a)?;
        let eb = symmetric_eigen(&b)?;
        for (name, phi) in &funcs {
            let pa = ea.apply(|t| phi.eval(t));
            let pb_inv = eb.apply(|t| 1.0 / phi.eval(t));
            let lhs = pa.matmul(&pb_inv).sub(&eye).frobenius_norm();
            report.observe(trial, lhs, rhs, || {
                format!("φ={name}; {}; {}", dump("A", &a), dump("B", &b))
            });
            let mu = libm::pow(10.0, 6.0 * rng.random::<f64>() - 3.0);
            let nu = libm::pow(10.0, 6.0 * rng.random::<f64>() - 3.0);
            let lhs = (phi.eval(mu) / phi.eval(nu) - 1.0).abs();
            let rhs = (mu / nu - 1.0).abs();
            report.observe(trial, lhs, rhs, || format!("scalar φ={name}, μ={mu:e}, ν={nu:e}"));
        }
    }
    report.into_result()
}

/// A standardized pair `S = B/λ`, `S_x = B_x/λ` with `B` random PSD and `B_x` a
/// random empirical second moment `(1/m) Σ v_i v_iᵀ` of vectors drawn around `B`.
fn random_standardized_pair<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> (Matrix, Matrix) {
    let b = random_psd(dim, rng);
    let root = matrix_function(&b, |t| libm::sqrt(t.max(0.0))).expect("PSD square root");
    let m = 2 + (rng.random::<u32>() % (4 * dim as u32)) as usize;
    let mut bx = Matrix::zeros(dim, dim);
    for _ in 0..m {
        let z = random_vector(dim, rng);
        let v = root.mul_vec(&z);
        for i in 0..dim {
            for j in 0..dim {
                bx[(i, j)] += v[i] * v[j] / m as f64;
            }
        }
    }
    bx.symmetrize();
    let lambda = libm::pow(10.0, -3.0 * rng.random::<f64>());
    (b.scale(1.0 / lambda), bx.scale(1.0 / lambda))
}

/// `Ψ_x = ‖(I+S)^{−1/2}(S − S_x)‖_HS`.
pub fn psi_x(s: &Matrix, s_x: &Matrix) -> Result<f64> {
    let dim = s.rows();
    let inv_root = matrix_function(&s.add(&Matrix::identity(dim)), |t| 1.0 / libm::sqrt(t))?;
    Ok(inv_root.matmul(&s.sub(s_x)).frobenius_norm())
}

/// `‖(I+S)(I+S_x)^{−1} − I‖_HS ≤ Ψ_x + Ψ_x²`.
pub fn check_zhou_decomposition(trials: usize, dim: usize, seed: u64) -> Result<PropertyReport> {
    check_dimension(dim)?;
    let mut report = PropertyReport::new("zhou_decomposition", trials, seed);
    let eye = Matrix::identity(dim);
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let (s, s_x) = random_standardized_pair(dim, &mut rng);
        let psi = psi_x(&s, &s_x)?;
        let inv = matrix_function(&s_x.add(&eye), |t| 1.0 / t)?;
        let lhs = s.add(&eye).matmul(&inv).sub(&eye).frobenius_norm();
        report.observe(trial, lhs, psi + psi * psi, || {
            format!("{}; {}", dump("S", &s), dump("S_x", &s_x))
        });
    }
    report.into_result()
}

/// `‖φ(I+S)φ(I+S_x)^{−1}‖ ≤ (Ψ_x+1)²` for sublinear `φ` and
/// `‖(I+S)^r(I+S_x)^{−r}‖ ≤ (Ψ_x+1)^{2r}` for `r ∈ {0, ¼, ½, ¾, 1}`.
pub fn check_cordes_style(trials: usize, dim: usize, seed: u64) -> Result<PropertyReport> {
    check_dimension(dim)?;
    let mut report = PropertyReport::new("cordes_style", trials, seed);
    let eye = Matrix::identity(dim);
    let funcs = sublinear_functions();
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let (s, s_x) = random_standardized_pair(dim, &mut rng);
        let psi = psi_x(&s, &s_x)?;
        let e = symmetric_eigen(&s.add(&eye))?;
        let ex = symmetric_eigen(&s_x.add(&eye))?;
        for (name, phi) in &funcs {
            let lhs = operator_norm(&e.apply(|t| phi.eval(t)).matmul(&ex.apply(|t| 1.0 / phi.eval(t))))?;
            let rhs = (psi + 1.0) * (psi + 1.0);
            report.observe(trial, lhs, rhs, || {
                format!("φ={name}; {}; {}", dump("S", &s), dump("S_x", &s_x))
            });
        }
        for &r in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            let lhs = operator_norm(&e.apply(|t| libm::pow(t, r)).matmul(&ex.apply(|t| libm::pow(t, -r))))?;
            let rhs = libm::pow(psi + 1.0, 2.0 * r);
            report.observe(trial, lhs, rhs, || {
                format!("r={r}; {}; {}", dump("S", &s), dump("S_x", &s_x))
            });
        }
    }
    report.into_result()
}

/// For random PSD `A`, `h` and `λ`, with `F = ‖(A+λ)^{1/2}h‖/√λ`:
/// `‖A^s h‖ ≤ λ^s F` for `s ∈ {0, ¼, ½}`.
pub fn check_interpolation_tool(trials: usize, dim: usize, seed: u64) -> Result<PropertyReport> {
    check_dimension(dim)?;
    let mut report = PropertyReport::new("interpolation_tool", trials, seed);
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let a = random_psd(dim, &mut rng);
        let h = random_vector(dim, &mut rng);
        let lambda = libm::pow(10.0, -4.0 * rng.random::<f64>());
        let e = symmetric_eigen(&a)?;
        let shifted = e.apply(|t| libm::sqrt(t.max(0.0) + lambda)).mul_vec(&h);
        let f = crate::linalg::norm2(&shifted) / libm::sqrt(lambda);
        for &s in &[0.0, 0.25, 0.5] {
            let lhs = crate::linalg::norm2(&e.apply(|t| libm::pow(t.max(0.0), s)).mul_vec(&h));
            let rhs = libm::pow(lambda, s) * f;
            report.observe(trial, lhs, rhs, || format!("s={s}, λ={lambda:e}; {}", dump("A", &a)));
        }
    }
    report.into_result()
}

/// `‖A^θ f‖ ≤ ‖Af‖^θ ‖f‖^{1−θ}` for `θ ∈ {0, ¼, ½, ¾, 1}`.
pub fn check_moment_inequality(trials: usize, dim: usize, seed: u64) -> Result<PropertyReport> {
    check_dimension(dim)?;
    let mut report = PropertyReport::new("moment_inequality", trials, seed);
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let a = random_psd(dim, &mut rng);
        let f = random_vector(dim, &mut rng);
        let e = symmetric_eigen(&a)?;
        let af = crate::linalg::norm2(&a.mul_vec(&f));
        let nf = crate::linalg::norm2(&f);
        for &theta in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            let lhs = crate::linalg::norm2(&e.apply(|t| libm::pow(t.max(0.0), theta)).mul_vec(&f));
            let rhs = libm::pow(af, theta) * libm::pow(nf, 1.0 - theta);
            report.observe(trial, lhs, rhs, || format!("θ={theta}; {}", dump("A", &a)));
        }
    }
    report.into_result()
}

/// `φ(s+t) ≤ φ(s) + φ(t)` for the sublinear test functions.
pub fn check_subadditivity(trials: usize, seed: u64) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("subadditivity", trials, seed);
    let funcs = sublinear_functions();
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let s = libm::pow(10.0, 8.0 * rng.random::<f64>() - 6.0);
        let t = libm::pow(10.0, 8.0 * rng.random::<f64>() - 6.0);
        for (name, phi) in &funcs {
            let lhs = phi.eval(s + t);
            let rhs = phi.eval(s) + phi.eval(t) + 1e-12;
            report.observe(trial, lhs, rhs, || format!("φ={name}, s={s:e}, t={t:e}"));
        }
    }
    report.into_result()
}

/// Norm identities of the spectral engine on random small instances: the empirical
/// isometry, the weighted difference norm against its kernel-expansion form,
/// `N_x(λ/q) ≤ q N_x(λ)`, and monotonicity of `N_x`.
pub fn check_norm_identities(trials: usize, max_n: usize, seed: u64) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("norm_identities", trials, seed);
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let n = 2 + (rng.random::<u32>() as usize) % (max_n.max(3) - 1);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let kernel = if rng.random::<bool>() {
            KernelSpec::gaussian(libm::pow(10.0, rng.random::<f64>() * 2.0 - 1.5))?
        } else {
            let d = 1 + (rng.random::<u32>() as usize) % 40;
            let b = 0.2 + 0.7 * rng.random::<f64>();
            KernelSpec::mercer(SpectralModel::power_law(b, d)?)
        };
        let kappa2 = crate::kernels::kernel_sup_bound(&kernel);
        let g = gram_matrix(&kernel, &x)?;
        let y = random_vector(n, &mut rng);
        let dec = decompose(&g, &y, kappa2)?;
        let nf = n as f64;

        // Empirical isometry for g = (1/n) Σ c_i K(x_i, ·) written as α = c.
        let c = random_vector(n, &mut rng);
        let u = dec.eigenvectors();
        let beta = u.tr_mul_vec(&c);
        let direct: f64 = g.mul_vec(&c).iter().map(|v| (v / nf) * (v / nf)).sum::<f64>() / nf;
        let spectral = empirical_norm_squared(&dec, &beta);
        // Eigenvalues below the clamp are dropped by the engine; allow for them.
        let clamp = crate::kernels::PSD_TOLERANCE * kappa2;
        let slack = clamp * clamp * crate::linalg::dot(&c, &c) / nf + 1e-12 * direct;
        report.observe(trial, (direct - spectral).abs(), slack, || format!("isometry n={n}"));

        // Weighted difference norm against ((1/n)Σ Δf(x_k)² + λ′ (1/n²) Δαᵀ G Δα)^{1/2}.
        let grid = [kappa2, kappa2 * 0.3, kappa2 * 0.05, kappa2 * 0.004];
        let filter = FilterFamily::tikhonov(kappa2);
        let path = fit_path(&dec, &filter, &grid)?;
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                let engine = weighted_diff_norm(&dec, &path, grid[i], grid[j])?;
                let da: Vec<f64> = dec
                    .alpha(&path.beta[i])
                    .iter()
                    .zip(dec.alpha(&path.beta[j]))
                    .map(|(a, b)| a - b)
                    .collect();
                let gda = g.mul_vec(&da);
                let emp: f64 = gda.iter().map(|v| (v / nf) * (v / nf)).sum::<f64>() / nf;
                let rkhs = crate::linalg::dot(&da, &gda) / (nf * nf);
                let dense = libm::sqrt(emp + grid[j] * rkhs);
                let tol = 1e-10 * dense
                    + libm::sqrt((grid[j] + clamp) * clamp / nf) * crate::linalg::norm2(&da);
                report.observe(trial, (engine - dense).abs(), tol, || {
                    format!("weighted norm n={n}, λ={:e}, λ′={:e}", grid[i], grid[j])
                });
            }
        }

        // Effective dimension: ratio bound and monotonicity.
        let q = 1.0 + 4.0 * rng.random::<f64>();
        let mut prev = 0.0;
        for k in 0..30 {
            let lambda = kappa2 * libm::pow(10.0, 1.0 - 0.3 * k as f64);
            let nx = empirical_effective_dimension(&dec, lambda);
            let nq = empirical_effective_dimension(&dec, lambda / q);
            report.observe(trial, nq, q * nx + 1e-12, || format!("N_x ratio n={n}, λ={lambda:e}, q={q}"));
            // λ decreases along the loop, so N_x must not.
            report.observe(trial, prev, nx, || format!("N_x monotone n={n}, λ={lambda:e}"));
            let bound = nf.min(dec.sigma().iter().sum::<f64>() / lambda);
            report.observe(trial, nx, bound * (1.0 + 1e-12), || format!("N_x bound n={n}"));
            prev = nx;
        }
    }
    report.into_result()
}

/// Parameters of one instance of the diagonal abstract model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbstractInstance {
    /// `A(λ) = λ^p`
    pub p: f64,
    /// `S(λ) = c/√(λn)`
    pub c: f64,
    pub n: f64,
    pub q: f64,
    pub steps: usize,
    /// Constant of the error assumption.
    pub constant: f64,
    pub dim: usize,
    pub seed: u64,
}

/// Outcome of the abstract oracle theorem on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AbstractOracleCheck {
    pub lambda_hat: f64,
    pub lambda_star: f64,
    /// `‖(A+λ̂)^{1/2}(f° − f^λ̂)‖`
    pub error_at_hat: f64,
    /// `‖(A+λ*)^{1/2}(f° − f^λ̂)‖`
    pub error_at_star: f64,
    /// `6C√λ* max(S, A)(λ*)`
    pub error_bound: f64,
    /// Largest `S(λ_k)/S(λ_{k−1})` on the grid.
    pub c_s: f64,
    /// `(s, λ*^s max(S,A)(λ*), C_S · min_λ λ^s(A+S))` with the minimum over a dense
    /// continuous range `[λ_min, λ_0]` and over the grid, whichever is smaller.
    pub oracle: Vec<(f64, f64, f64)>,
}

impl AbstractOracleCheck {
    pub fn hat_dominates_star(&self) -> bool {
        self.lambda_hat >= self.lambda_star
    }

    pub fn error_bound_holds(&self) -> bool {
        self.error_at_star <= self.error_bound * (1.0 + INEQUALITY_TOLERANCE)
    }

    pub fn stated_error_bound_holds(&self) -> bool {
        self.error_at_hat <= self.error_bound * (1.0 + INEQUALITY_TOLERANCE)
    }

    pub fn oracle_bound_holds(&self) -> bool {
        self.oracle.iter().all(|&(_, l, r)| l <= r * (1.0 + INEQUALITY_TOLERANCE))
    }
}

/// Builds `f^λ = f° + e(λ)` in a diagonal model `A = diag(a)` where every `e(λ)` has
/// a random direction and `‖(A+λ)^{1/2}e(λ)‖ = u·C√λ(A(λ)+S(λ))` with `u` uniform
/// on `[0,1]`, then runs the abstract rule with `pair_norm` computed exactly.
pub fn abstract_oracle_check(inst: &AbstractInstance) -> Result<AbstractOracleCheck> {
    let mut rng = trial_rng(inst.seed, 0);
    let grid: Vec<f64> = (0..=inst.steps).map(|i| libm::pow(inst.q, -(i as f64))).collect();
    let a_fn = |l: f64| libm::pow(l, inst.p);
    let s_fn = |l: f64| inst.c / libm::sqrt(l * inst.n);
    let spectrum: Vec<f64> = (0..inst.dim).map(|_| libm::pow(10.0, -6.0 * rng.random::<f64>())).collect();
    let weighted = |v: &[f64], l: f64| -> f64 {
        libm::sqrt(v.iter().zip(&spectrum).map(|(x, a)| (a + l) * x * x).sum())
    };
    let errors: Vec<Vec<f64>> = grid
        .iter()
        .map(|&l| {
            let mut v = random_vector(inst.dim, &mut rng);
            // Some instances share directions across λ to probe aligned errors.
            if rng.random::<f64>() < 0.2 {
                v = vec![0.0; inst.dim];
                v[0] = 1.0;
            }
            let target = rng.random::<f64>() * inst.constant * libm::sqrt(l) * (a_fn(l) + s_fn(l));
            let scale = target / weighted(&v, l);
            v.iter().map(|x| x * scale).collect()
        })
        .collect();
    let position = |l: f64| grid.iter().position(|&g| g == l).unwrap();
    let sel = crate::balancing::abstract_select(
        &grid,
        |l, lp| {
            let d: Vec<f64> = errors[position(l)]
                .iter()
                .zip(&errors[position(lp)])
                .map(|(x, y)| x - y)
                .collect();
            weighted(&d, lp)
        },
        s_fn,
        inst.constant,
    )?;
    let lambda_star = crate::balancing::lambda_star(&grid, a_fn, s_fn)?;
    let s_tilde = s_fn(lambda_star).max(a_fn(lambda_star));
    let c_s = grid
        .windows(2)
        .map(|w| s_fn(w[1]) / s_fn(w[0]))
        .fold(1.0f64, f64::max);
    let lo = *grid.last().unwrap();
    let dense = crate::filters::log_grid(lo, grid[0], 20_000);
    let oracle = [0.0, 0.25, 0.5]
        .iter()
        .map(|&s| {
            let value = |l: f64| libm::pow(l, s) * (a_fn(l) + s_fn(l));
            let min = dense.iter().chain(&grid).map(|&l| value(l)).fold(f64::INFINITY, f64::min);
            (s, libm::pow(lambda_star, s) * s_tilde, c_s * min)
        })
        .collect();
    Ok(AbstractOracleCheck {
        lambda_hat: sel.lambda_hat,
        lambda_star,
        error_at_hat: weighted(&errors[sel.index], sel.lambda_hat),
        error_at_star: weighted(&errors[sel.index], lambda_star),
        error_bound: 6.0 * inst.constant * libm::sqrt(lambda_star) * s_tilde,
        c_s,
        oracle,
    })
}

/// Deviation quantities of one sample at one `λ`, computed exactly in the model ONB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationSample {
    pub lambda: f64,
    /// `‖B − B_x‖_HS`
    pub gamma: f64,
    /// `‖(λ+B)^{−1/2}(B − B_x)‖_HS`
    pub psi: f64,
    /// `‖(λ+B)^{−1/2}(B_x f_ρ − T_x* y)‖`
    pub theta: f64,
    pub effective_dimension: f64,
    pub empirical_effective_dimension: f64,
    pub kappa: f64,
    pub n: usize,
}

impl DeviationSample {
    pub fn effdim_gap(&self) -> f64 {
        (self.effective_dimension - self.empirical_effective_dimension).abs()
    }

    /// `B_{n,λ}(a,b) = λ^{−1/2}(a·2κ/(√λ n) + b√(N(λ)/n))`.
    pub fn bnl(&self, a: f64, b: f64) -> f64 {
        let nf = self.n as f64;
        let sl = libm::sqrt(self.lambda);
        (a * 2.0 * self.kappa / (sl * nf) + b * libm::sqrt(self.effective_dimension / nf)) / sl
    }
}

/// Per-sample precomputation shared across `λ`: `B_x − B` and `(1/n) Wᵀ ε`.
#[derive(Debug, Clone)]
pub struct DeviationContext {
    mu: Vec<f64>,
    diff: Matrix,
    noise_embedding: Vec<f64>,
    bx_eigenvalues: Vec<f64>,
    kappa: f64,
    n: usize,
}

impl DeviationContext {
    pub fn new(model: &SpectralModel, data: &Dataset) -> Result<Self> {
        let n = data.len();
        if n == 0 {
            return Err(Error::Parameter("deviations need a nonempty sample".into()));
        }
        let w = crate::kernels::feature_matrix(model, &data.x)?;
        let bx = w.gram_of_columns(1.0 / n as f64);
        let mu = model.eigenvalues().to_vec();
        let mut diff = bx.clone();
        for (k, m) in mu.iter().enumerate() {
            diff[(k, k)] -= m;
        }
        let residuals = data.residuals();
        let noise_embedding = w.tr_mul_vec(&residuals).iter().map(|v| v / n as f64).collect();
        let bx_eigenvalues = symmetric_eigen(&bx)?.values.iter().map(|v| v.max(0.0)).collect();
        Ok(Self {
            mu,
            diff,
            noise_embedding,
            bx_eigenvalues,
            kappa: libm::sqrt(model.kappa2()),
            n,
        })
    }

    pub fn at(&self, lambda: f64) -> DeviationSample {
        let d = self.mu.len();
        let mut psi2 = 0.0;
        for i in 0..d {
            let w = 1.0 / (lambda + self.mu[i]);
            let row = self.diff.row(i);
            psi2 += w * row.iter().map(|v| v * v).sum::<f64>();
        }
        let theta2: f64 = self
            .noise_embedding
            .iter()
            .zip(&self.mu)
            .map(|(e, m)| e * e / (lambda + m))
            .sum();
        DeviationSample {
            lambda,
            gamma: self.diff.frobenius_norm(),
            psi: libm::sqrt(psi2),
            theta: libm::sqrt(theta2),
            effective_dimension: self.mu.iter().map(|m| m / (m + lambda)).sum(),
            empirical_effective_dimension: self.bx_eigenvalues.iter().map(|s| s / (s + lambda)).sum(),
            kappa: self.kappa,
            n: self.n,
        }
    }
}

pub fn compute_deviations(model: &SpectralModel, data: &Dataset, lambda: f64) -> Result<DeviationSample> {
    Ok(DeviationContext::new(model, data)?.at(lambda))
}

/// The probabilistic bounds whose marginal coverage is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviationBound {
    /// `Γ ≤ L κ²/√n`
    HilbertSchmidt,
    /// `Ψ ≤ L √λ B_{n,λ}(κ, κ)`
    Standardized,
    /// `Θ ≤ L √λ B_{n,λ}(M, σ)`
    Noise,
    /// `|N − N_x| ≤ L (1 + √N_x) B_{n,λ}(κ, κ)`
    EffectiveDimension,
    /// `max((N∨1)/(N_x∨1), (N_x∨1)/(N∨1)) ≤ (1 + 4κL/√(λn))²`, for `λ ≥ 4κ²/n`.
    RelativeEffectiveDimension,
}

impl DeviationBound {
    pub const ALL: [DeviationBound; 5] = [
        DeviationBound::HilbertSchmidt,
        DeviationBound::Standardized,
        DeviationBound::Noise,
        DeviationBound::EffectiveDimension,
        DeviationBound::RelativeEffectiveDimension,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DeviationBound::HilbertSchmidt => "gamma_hs",
            DeviationBound::Standardized => "psi_hs",
            DeviationBound::Noise => "theta",
            DeviationBound::EffectiveDimension => "effdim_abs",
            DeviationBound::RelativeEffectiveDimension => "effdim_rel",
        }
    }

    /// `(observed, bound)`, or `None` when the precondition fails.
    pub fn evaluate(&self, d: &DeviationSample, eta: f64, sigma: f64, m: f64) -> Option<(f64, f64)> {
        let l = 2.0 * libm::log(8.0 / eta);
        let nf = d.n as f64;
        let k2 = d.kappa * d.kappa;
        let sl = libm::sqrt(d.lambda);
        Some(match self {
            DeviationBound::HilbertSchmidt => (d.gamma, l * k2 / libm::sqrt(nf)),
            DeviationBound::Standardized => (d.psi, l * sl * d.bnl(d.kappa, d.kappa)),
            DeviationBound::Noise => (d.theta, l * sl * d.bnl(m, sigma)),
            DeviationBound::EffectiveDimension => (
                d.effdim_gap(),
                l * (1.0 + libm::sqrt(d.empirical_effective_dimension)) * d.bnl(d.kappa, d.kappa),
            ),
            DeviationBound::RelativeEffectiveDimension => {
                if d.lambda < 4.0 * k2 / nf {
                    return None;
                }
                let a = d.effective_dimension.max(1.0);
                let b = d.empirical_effective_dimension.max(1.0);
                let f = 1.0 + 4.0 * d.kappa * l / libm::sqrt(d.lambda * nf);
                ((a / b).max(b / a), f * f)
            }
        })
    }
}

/// Violation counts of one bound at one `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCell {
    pub bound: DeviationBound,
    pub lambda: f64,
    /// Replicates where the precondition held.
    pub applicable: usize,
    pub violations: usize,
    /// Largest `observed/bound` seen.
    pub max_ratio: f64,
}

impl CoverageCell {
    pub fn frequency(&self) -> Option<f64> {
        (self.applicable > 0).then(|| self.violations as f64 / self.applicable as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub n: usize,
    pub replicates: usize,
    pub eta: f64,
    pub cells: Vec<CoverageCell>,
}

impl CoverageReport {
    /// Worst violation frequency of `bound` over the applicable `λ`.
    pub fn max_frequency(&self, bound: DeviationBound) -> Option<f64> {
        self.cells
            .iter()
            .filter(|c| c.bound == bound)
            .filter_map(|c| c.frequency())
            .fold(None, |acc, f| Some(acc.map_or(f, |a: f64| a.max(f))))
    }
}

/// Samples `replicates` datasets of size `n` and counts, for every bound and grid
/// `λ`, the replicates that violate it.
#[allow(clippy::too_many_arguments)]
pub fn coverage_study(
    model: &SpectralModel,
    target: &SourceConditionTarget,
    noise: &NoiseModel,
    lambdas: &[f64],
    n: usize,
    replicates: usize,
    eta: f64,
    seed: u64,
) -> Result<CoverageReport> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Parameter(format!("η must lie in (0,1), got {eta}")));
    }
    let (sigma, m) = noise.bernstein_constants();
    let mut cells: Vec<CoverageCell> = DeviationBound::ALL
        .iter()
        .flat_map(|&bound| {
            lambdas.iter().map(move |&lambda| CoverageCell {
                bound,
                lambda,
                applicable: 0,
                violations: 0,
                max_ratio: 0.0,
            })
        })
        .collect();
    let mut gen = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..replicates {
        let data = sample_dataset(model, target, noise, n, gen.random())?;
        let ctx = DeviationContext::new(model, &data)?;
        let samples: Vec<DeviationSample> = lambdas.iter().map(|&l| ctx.at(l)).collect();
        for cell in cells.iter_mut() {
            let k = lambdas.iter().position(|&l| l == cell.lambda).unwrap();
            if let Some((obs, bound)) = cell.bound.evaluate(&samples[k], eta, sigma, m) {
                cell.applicable += 1;
                if obs > bound {
                    cell.violations += 1;
                }
                let ratio = if bound > 0.0 { obs / bound } else if obs > 0.0 { f64::INFINITY } else { 0.0 };
                cell.max_ratio = cell.max_ratio.max(ratio);
            }
        }
    }
    Ok(CoverageReport {
        n,
        replicates,
        eta,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zhou_on_a_commuting_diagonal_pair() {
        // S = diag(1, 3), S_x = diag(2, 1):
        // (I+S)(I+S_x)^{-1} − I = diag(2/3 − 1, 4/2 − 1) = diag(−1/3, 1)
        // Ψ = ‖diag(1/√2, 1/2)·diag(−1, 2)‖ = √(1/2 + 1)
        let s = Matrix::from_diagonal(&[1.0, 3.0]);
        let sx = Matrix::from_diagonal(&[2.0, 1.0]);
        let psi = psi_x(&s, &sx).unwrap();
        assert!((psi - libm::sqrt(1.5)).abs() < 1e-14);
        let eye = Matrix::identity(2);
        let lhs = s
            .add(&eye)
            .matmul(&matrix_function(&sx.add(&eye), |t| 1.0 / t).unwrap())
            .sub(&eye)
            .frobenius_norm();
        assert!((lhs - libm::sqrt(1.0 / 9.0 + 1.0)).abs() < 1e-14);
        assert!(lhs <= psi + psi * psi);
    }

    #[test]
    fn equal_pairs_give_zero() {
        let s = Matrix::from_diagonal(&[0.5, 2.0, 7.0]);
        assert_eq!(psi_x(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_checks_hold() {
        for dim in [1, 2, 5, 12] {
            check_sublinear_perturbation(30, dim, 1).unwrap();
            check_zhou_decomposition(30, dim, 2).unwrap();
            check_cordes_style(30, dim, 3).unwrap();
            check_interpolation_tool(30, dim, 4).unwrap();
            check_moment_inequality(30, dim, 5).unwrap();
        }
        check_subadditivity(500, 6).unwrap();
        check_norm_identities(50, 32, 7).unwrap();
        assert!(check_zhou_decomposition(1, 21, 0).is_err());
    }

    #[test]
    fn violation_is_reported_with_seed() {
        let mut r = PropertyReport::new("demo", 3, 42);
        r.observe(2, 2.0, 1.0, || "x".into());
        match r.into_result() {
            Err(Error::PropertyViolation { seed, trial, .. }) => assert_eq!((seed, trial), (42, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rank_one_deviations_reduce_to_scalars() {
        // D = 1 with e_0 ≡ 1: B = B_x = μ, so Γ = Ψ = 0, N = N_x = μ/(μ+λ) and
        // Θ = |mean residual|·√μ/√(λ+μ).
        let model = SpectralModel::new(vec![0.7], 0).unwrap();
        let data = Dataset {
            x: vec![0.1, 0.5, 0.9],
            y: vec![1.0, 2.0, 4.0],
            f_true: vec![1.0, 1.0, 1.0],
        };
        let d = compute_deviations(&model, &data, 0.3).unwrap();
        assert!(d.gamma.abs() < 1e-15 && d.psi.abs() < 1e-15);
        assert!((d.effective_dimension - 0.7).abs() < 1e-15);
        assert!((d.empirical_effective_dimension - 0.7).abs() < 1e-14);
        let want = (4.0 / 3.0) * libm::sqrt(0.7) / 1.0;
        assert!((d.theta - want).abs() < 1e-14);
    }

    #[test]
    fn noiseless_theta_vanishes_and_gamma_is_bounded() {
        let model = SpectralModel::power_law(0.5, 16).unwrap();
        let target = SourceConditionTarget::default_source(&model, IndexFunction::power(0.5), None).unwrap();
        let data = sample_dataset(&model, &target, &NoiseModel::Gaussian { std: 0.0 }, 4096, 1).unwrap();
        let d = compute_deviations(&model, &data, 0.01).unwrap();
        assert_eq!(d.theta, 0.0);
        let b_hs: f64 = libm::sqrt(model.eigenvalues().iter().map(|m| m * m).sum());
        assert!(d.gamma >= 0.0 && d.gamma <= b_hs + b_hs + 1.0);
        assert!(d.gamma < 0.1);
    }

    #[test]
    fn relative_bound_is_gated() {
        let model = SpectralModel::power_law(0.5, 8).unwrap();
        let target = SourceConditionTarget::default_source(&model, IndexFunction::power(0.5), None).unwrap();
        let data = sample_dataset(&model, &target, &NoiseModel::Gaussian { std: 0.1 }, 64, 1).unwrap();
        let small = compute_deviations(&model, &data, 1e-3).unwrap();
        assert!(DeviationBound::RelativeEffectiveDimension
            .evaluate(&small, 0.05, 0.1, 0.1)
            .is_none());
    }

    #[test]
    fn abstract_example_instance() {
        let inst = AbstractInstance {
            p: 1.0,
            c: 0.01,
            n: 1.0,
            q: 2.0,
            steps: 10,
            constant: 1.0,
            dim: 8,
            seed: 3,
        };
        let r = abstract_oracle_check(&inst).unwrap();
        assert_eq!(r.lambda_star, 0.03125);
        assert!(r.hat_dominates_star());
        assert!(r.error_bound_holds());
        assert!(r.oracle_bound_holds());
        // S(λ/2)/S(λ) = √2 on a halving grid.
        assert!((r.c_s - core::f64::consts::SQRT_2).abs() < 1e-12);
    }
}

//! Explicit Mercer ground truth: spectrum, cosine basis, source-condition targets,
//! Bernstein noise, seeded sampling, and exact population error norms.
//!
//! Index convention: the model keeps `D` eigenvalues `mu[k]` attached to basis
//! functions `e_{offset+k}`. Coefficients of elements of `H` are taken in the
//! orthonormal basis `{√μ_k e_{offset+k}}` of `H`, where `B = diag(μ)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::filters::{log_grid, IndexFunction};
use crate::kernels::mercer_sup_bound;
use crate::spectral::{EstimatorPath, SpectralDecomposition};

/// Default truncation order.
pub const DEFAULT_TRUNCATION: usize = 512;
/// Default `‖h‖`, strictly inside the unit ball.
pub const DEFAULT_SOURCE_NORM: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    mu: Vec<f64>,
    offset: usize,
    kappa2: f64,
    /// `b` when `μ_j = j^{−1/b}`.
    decay: Option<f64>,
}

impl SpectralModel {
    /// Arbitrary positive descending spectrum on `e_offset, e_{offset+1}, …`.
    pub fn new(mu: Vec<f64>, offset: usize) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::Parameter("spectral model needs at least one eigenvalue".into()));
        }
        if mu.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::Parameter("model eigenvalues must be positive and finite".into()));
        }
        if mu.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Parameter("model eigenvalues must be descending".into()));
        }
        let mut model = Self {
            mu,
            offset,
            kappa2: 0.0,
            decay: None,
        };
        model.kappa2 = mercer_sup_bound(&model);
        Ok(model)
    }

    /// `μ_j = j^{−1/b}` for `j = 1..=D`, attached to `e_1, …, e_D`, so that
    /// `N(λ) ≍ λ^{−b}`.
    pub fn power_law(b: f64, truncation: usize) -> Result<Self> {
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::Parameter(format!("decay exponent b must lie in (0,1), got {b}")));
        }
        if truncation == 0 {
            return Err(Error::Parameter("truncation order must be positive".into()));
        }
        let mu = (1..=truncation)
            .map(|j| libm::pow(j as f64, -1.0 / b))
            .collect();
        let mut model = Self::new(mu, 1)?;
        model.decay = Some(b);
        Ok(model)
    }

    pub fn dimension(&self) -> usize {
        self.mu.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.mu
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }

    pub fn decay(&self) -> Option<f64> {
        self.decay
    }

    pub fn trace(&self) -> f64 {
        self.mu.iter().sum()
    }

    /// Fills `out[k] = e_{offset+k}(x)`.
    pub fn basis_values(&self, x: f64, out: &mut [f64]) {
        cosine_basis(x, self.offset, out);
    }

    /// Fills `out[k] = √μ_k e_{offset+k}(x)`, the feature vector `v(x)`.
    pub fn feature_values(&self, x: f64, out: &mut [f64]) {
        self.basis_values(x, out);
        for (o, &m) in out.iter_mut().zip(&self.mu) {
            *o *= libm::sqrt(m);
        }
    }

    /// `K(x, y) = Σ μ_k e_k(x) e_k(y)`.
    pub fn kernel(&self, x: f64, y: f64) -> f64 {
        let d = self.dimension();
        let mut ex = vec![0.0; d];
        let mut ey = vec![0.0; d];
        self.basis_values(x, &mut ex);
        self.basis_values(y, &mut ey);
        self.mu
            .iter()
            .zip(ex.iter().zip(&ey))
            .map(|(m, (a, b))| m * a * b)
            .sum()
    }

    /// `Σ_{j>D} μ_j` for the power law, bounded by `∫_D^∞ x^{−1/b} dx`; `None`
    /// for spectra without a known tail.
    pub fn tail_mass(&self) -> Option<f64> {
        self.decay.map(|b| {
            let p = 1.0 / b;
            libm::pow(self.dimension() as f64, 1.0 - p) / (p - 1.0)
        })
    }

    /// Population effective dimension `N(λ) = Σ μ_k/(μ_k + λ)`.
    pub fn effective_dimension(&self, lambda: f64) -> f64 {
        population_effective_dimension(self, lambda)
    }
}

/// Cosine family on `[0,1]`: `e_0 ≡ 1`, `e_j = √2 cos(πjx)`, by the Chebyshev
/// recurrence `cos((j+1)θ) = 2cosθ cos(jθ) − cos((j−1)θ)`.
pub fn cosine_basis(x: f64, offset: usize, out: &mut [f64]) {
    let c1 = libm::cos(PI * x);
    let two_c1 = 2.0 * c1;
    // cos(jθ) and cos((j−1)θ), starting at j = 0 with cos(−θ) = cos θ.
    let (mut cur, mut prev) = (1.0, c1);
    for j in 0..offset + out.len() {
        if j >= offset {
            out[j - offset] = if j == 0 { 1.0 } else { SQRT_2 * cur };
        }
        let next = two_c1 * cur - prev;
        prev = cur;
        cur = next;
    }
}

/// `N(λ) = Σ_k μ_k/(μ_k + λ)` over the truncated spectrum.
pub fn population_effective_dimension(model: &SpectralModel, lambda: f64) -> f64 {
    model.mu.iter().map(|&m| m / (m + lambda)).sum()
}

/// `f_ρ = φ(B) h` with `h_k` the coefficients of `h` in the ONB of `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceConditionTarget {
    pub phi: IndexFunction,
    pub h: Vec<f64>,
    /// ONB coefficients `a_k = φ(μ_k) h_k` of `f_ρ`.
    coefficients: Vec<f64>,
    /// Function coefficients `c_k = √μ_k a_k`, so `f_ρ(x) = Σ c_k e_k(x)`.
    function_coefficients: Vec<f64>,
}

impl SourceConditionTarget {
    pub fn new(model: &SpectralModel, phi: IndexFunction, h: Vec<f64>) -> Result<Self> {
        if h.len() != model.dimension() {
            return Err(Error::Parameter(format!(
                "source element has {} coefficients, model has {}",
                h.len(),
                model.dimension()
            )));
        }
        let norm = libm::sqrt(h.iter().map(|v| v * v).sum::<f64>());
        if !(norm <= 1.0 + 1e-12) {
            return Err(Error::Parameter(format!("source element must satisfy ‖h‖ ≤ 1, got {norm}")));
        }
        let coefficients: Vec<f64> = model
            .mu
            .iter()
            .zip(&h)
            .map(|(&m, &hk)| phi.eval(m) * hk)
            .collect();
        let function_coefficients = coefficients
            .iter()
            .zip(&model.mu)
            .map(|(a, m)| a * libm::sqrt(*m))
            .collect();
        Ok(Self {
            phi,
            h,
            coefficients,
            function_coefficients,
        })
    }

    /// Default source element `h_k ∝ (k+1)^{−1}` scaled to `‖h‖ = 0.99`,
    /// optionally with seeded random signs.
    pub fn default_source(model: &SpectralModel, phi: IndexFunction, sign_seed: Option<u64>) -> Result<Self> {
        let mut h: Vec<f64> = (1..=model.dimension()).map(|k| 1.0 / k as f64).collect();
        let norm = libm::sqrt(h.iter().map(|v| v * v).sum::<f64>());
        h.iter_mut().for_each(|v| *v *= DEFAULT_SOURCE_NORM / norm);
        if let Some(seed) = sign_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in h.iter_mut() {
                if rng.random::<bool>() {
                    *v = -*v;
                }
            }
        }
        Self::new(model, phi, h)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn function_coefficients(&self) -> &[f64] {
        &self.function_coefficients
    }

    /// `f_ρ(x)`; `scratch` must have length `D`.
    pub fn eval_with(&self, model: &SpectralModel, x: f64, scratch: &mut [f64]) -> f64 {
        model.basis_values(x, scratch);
        scratch
            .iter()
            .zip(&self.function_coefficients)
            .map(|(e, c)| e * c)
            .sum()
    }

    pub fn eval(&self, model: &SpectralModel, x: f64) -> f64 {
        let mut scratch = vec![0.0; model.dimension()];
        self.eval_with(model, x, &mut scratch)
    }

    /// `‖f_ρ‖_H`.
    pub fn rkhs_norm(&self) -> f64 {
        libm::sqrt(self.coefficients.iter().map(|a| a * a).sum())
    }
}

/// Noise distributions with their Bernstein pair `(σ, M)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Gaussian { std: f64 },
    BoundedUniform { half_width: f64 },
    Rademacher { scale: f64 },
}

impl NoiseModel {
    /// Constants with `E|ε|^k ≤ (k!/2) σ² M^{k−2}` for all `k ≥ 2`.
    pub fn bernstein_constants(&self) -> (f64, f64) {
        bernstein_constants(self)
    }

    pub fn scale(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { std } => std,
            NoiseModel::BoundedUniform { half_width } => half_width,
            NoiseModel::Rademacher { scale } => scale,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::Gaussian { std } => {
                let z: f64 = rng.sample(StandardNormal);
                std * z
            }
            NoiseModel::BoundedUniform { half_width } => {
                half_width * (2.0 * rng.random::<f64>() - 1.0)
            }
            NoiseModel::Rademacher { scale } => {
                if rng.random::<bool>() {
                    scale
                } else {
                    -scale
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseModel::Gaussian { .. } => "gaussian",
            NoiseModel::BoundedUniform { .. } => "bounded_uniform",
            NoiseModel::Rademacher { .. } => "rademacher",
        }
    }
}

pub fn bernstein_constants(noise: &NoiseModel) -> (f64, f64) {
    match *noise {
        NoiseModel::Gaussian { std } => (std, std),
        NoiseModel::BoundedUniform { half_width } => (half_width / libm::sqrt(3.0), half_width),
        NoiseModel::Rademacher { scale } => (scale, scale),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub f_true: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `y_i − f_ρ(x_i)`.
    pub fn residuals(&self) -> Vec<f64> {
        self.y.iter().zip(&self.f_true).map(|(y, f)| y - f).collect()
    }
}

/// Seed of replicate `replicate` at sample size `n` under `master`: word
/// `2·replicate` of the ChaCha8 stream `n`, so every `(n, replicate)` pair owns an
/// independent generator regardless of execution order.
pub fn replicate_seed(master: u64, n: usize, replicate: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(n as u64);
    rng.set_word_pos(2 * replicate as u128);
    rng.next_u64()
}

/// `x_i ~ Uniform[0,1]` i.i.d., `y_i = f_ρ(x_i) + ε_i`, deterministic in `seed`.
pub fn sample_dataset(
    model: &SpectralModel,
    target: &SourceConditionTarget,
    noise: &NoiseModel,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Parameter("sample size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mut scratch = vec![0.0; model.dimension()];
    let f_true: Vec<f64> = x
        .iter()
        .map(|&xi| target.eval_with(model, xi, &mut scratch))
        .collect();
    let y = f_true.iter().map(|&f| f + noise.sample(&mut rng)).collect();
    Ok(Dataset { x, y, f_true })
}

/// `‖f_ρ − f‖_H` and `‖B^{1/2}(f_ρ − f)‖_H = ‖f_ρ − f‖_{L²}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub rkhs: f64,
    pub l2: f64,
}

impl ErrorNorms {
    /// `s = 0` gives the RKHS error, `s = ½` the `L²` error.
    pub fn at(&self, s: f64) -> f64 {
        if s == 0.0 {
            self.rkhs
        } else {
            self.l2
        }
    }
}

/// Error norms of an estimator given by its ONB coefficients `theta`.
pub fn error_norms_from_coefficients(
    model: &SpectralModel,
    target: &SourceConditionTarget,
    theta: &[f64],
) -> Result<ErrorNorms> {
    if theta.len() != model.dimension() {
        return Err(Error::Representation(format!(
            "estimator has {} coefficients, model has {}",
            theta.len(),
            model.dimension()
        )));
    }
    let (mut h2, mut l2) = (0.0, 0.0);
    for ((a, t), m) in target.coefficients.iter().zip(theta).zip(&model.mu) {
        let d = a - t;
        h2 += d * d;
        l2 += m * d * d;
    }
    Ok(ErrorNorms {
        rkhs: libm::sqrt(h2),
        l2: libm::sqrt(l2),
    })
}

/// Exact population errors of `f_z^λ`. Needs the decomposition to be built from the
/// model's feature matrix.
pub fn exact_error_norms(
    model: &SpectralModel,
    target: &SourceConditionTarget,
    dec: &SpectralDecomposition,
    path: &EstimatorPath,
    lambda: f64,
) -> Result<ErrorNorms> {
    let beta = path.beta_at(lambda)?;
    let theta = dec.onb_coefficients(beta)?;
    error_norms_from_coefficients(model, target, &theta)
}

/// Predicted `n`-exponent `(r+s)/(2r+1+b)` of `‖B^s(f_ρ − f̂)‖` for Hölder `φ(t) = t^r`
/// and a power-law spectrum with exponent `b`.
pub fn rate_oracle(model: &SpectralModel, target: &SourceConditionTarget, s: f64) -> Result<f64> {
    let r = target
        .phi
        .holder_exponent()
        .ok_or_else(|| Error::Unsupported("rate prediction needs a Hölder index function".into()))?;
    let b = model
        .decay()
        .ok_or_else(|| Error::Unsupported("rate prediction needs a power-law spectrum".into()))?;
    Ok(rate_exponent(r, b, s))
}

pub fn rate_exponent(r: f64, b: f64, s: f64) -> f64 {
    (r + s) / (2.0 * r + 1.0 + b)
}

/// `Δ(λ) = λ φ(λ)² / N(λ)`.
pub fn balance_function(model: &SpectralModel, phi: &IndexFunction, lambda: f64) -> f64 {
    let p = phi.eval(lambda);
    lambda * p * p / population_effective_dimension(model, lambda)
}

/// Solves `Δ(λ) = value` by bisection in `log λ` on `(κ²·1e−16, κ²]`.
pub fn balance_inverse(model: &SpectralModel, phi: &IndexFunction, value: f64) -> Result<f64> {
    let hi0 = model.kappa2();
    let lo0 = hi0 * 1e-16;
    if !(value > balance_function(model, phi, lo0) && value <= balance_function(model, phi, hi0)) {
        return Err(Error::Parameter(format!(
            "Δ⁻¹({value:e}) lies outside the searched range"
        )));
    }
    let (mut lo, mut hi) = (libm::log(lo0), libm::log(hi0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance_function(model, phi, libm::exp(mid)) < value {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(libm::exp(0.5 * (lo + hi)))
}

/// Checks that `Δ` is strictly increasing on a log grid over `(0, κ²]`.
pub fn balance_function_is_increasing(model: &SpectralModel, phi: &IndexFunction, points: usize) -> bool {
    let grid = log_grid(model.kappa2() * 1e-10, model.kappa2(), points);
    grid.windows(2)
        .all(|w| balance_function(model, phi, w[1]) > balance_function(model, phi, w[0]))
}

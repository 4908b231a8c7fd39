//! Spectral filters `g_λ`, their residuals `r_λ(t) = 1 − t·g_λ(t)`, index functions,
//! and grid verification of the constants each filter declares.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Relative slack allowed when checking a declared constant on a grid.
pub const CONSTANT_SLACK: f64 = 1e-9;
/// Relative tolerance for the monotonicity test in [`covers`].
pub const COVER_TOLERANCE: f64 = 1e-12;
/// Decades spanned by the default log grids below `κ²`.
pub const GRID_DECADES: f64 = 8.0;

/// Elementary shapes of index functions.
#[derive(Debug, Clone, PartialEq)]
pub enum IndexShape {
    /// `t^a`
    Power { exponent: f64 },
    /// `t^a · ln(1 + t)`
    PowerLog { exponent: f64 },
    /// `t / (1 + t)`
    Saturating,
    /// `ln(1 + t)`
    Log1p,
}

/// A factorisation `φ = φ₁·φ₂` with `φ₁` Lipschitz (constant `lipschitz`) and
/// `φ₂` sublinear.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSplit {
    pub lipschitz_part: Box<IndexFunction>,
    pub sublinear_part: Box<IndexFunction>,
    pub lipschitz: f64,
}

/// Continuous nondecreasing `φ: [0, κ²] → ℝ₊` with `φ(0) = 0`, scaled by `coefficient`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexFunction {
    pub coefficient: f64,
    pub shape: IndexShape,
    pub split: Option<IndexSplit>,
}

impl IndexFunction {
    pub fn new(coefficient: f64, shape: IndexShape) -> Self {
        Self {
            coefficient,
            shape,
            split: None,
        }
    }

    pub fn power(exponent: f64) -> Self {
        Self::new(1.0, IndexShape::Power { exponent })
    }

    /// Hölder index function `c·t^r` together with its Lipschitz × sublinear
    /// split on `[0, κ²]`.
    ///
    /// * `r ≤ 1`: `φ₁ ≡ c` (ℓ = 0), `φ₂ = t^r`.
    /// * `1 < r ≤ 2`: `φ₁ = c·t` (ℓ = c), `φ₂ = t^{r−1}`.
    /// * `r > 2`: `φ₁ = c·t^{r−1}` (ℓ = c(r−1)κ^{2(r−2)}), `φ₂ = t`.
    pub fn holder(coefficient: f64, r: f64, kappa2: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) || !(coefficient > 0.0) {
            return Err(Error::Parameter(format!(
                "Hölder index function needs r > 0 and c > 0, got r={r}, c={coefficient}"
            )));
        }
        let (lip_exp, sub_exp, lipschitz) = if r <= 1.0 {
            (0.0, r, 0.0)
        } else if r <= 2.0 {
            (1.0, r - 1.0, coefficient)
        } else {
            (
                r - 1.0,
                1.0,
                coefficient * (r - 1.0) * libm::pow(kappa2, r - 2.0),
            )
        };
        Ok(Self {
            coefficient,
            shape: IndexShape::Power { exponent: r },
            split: Some(IndexSplit {
                lipschitz_part: Box::new(Self::new(
                    coefficient,
                    IndexShape::Power { exponent: lip_exp },
                )),
                sublinear_part: Box::new(Self::power(sub_exp)),
                lipschitz,
            }),
        })
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let base = match self.shape {
            IndexShape::Power { exponent } => {
                if exponent == 0.0 {
                    1.0
                } else if t <= 0.0 {
                    0.0
                } else {
                    libm::pow(t, exponent)
                }
            }
            IndexShape::PowerLog { exponent } => {
                if t <= 0.0 {
                    0.0
                } else {
                    libm::pow(t, exponent) * libm::log1p(t)
                }
            }
            IndexShape::Saturating => t / (1.0 + t),
            IndexShape::Log1p => libm::log1p(t),
        };
        self.coefficient * base
    }

    /// Exponent `r` if this is a Hölder function `c·t^r`.
    pub fn holder_exponent(&self) -> Option<f64> {
        match self.shape {
            IndexShape::Power { exponent } => Some(exponent),
            _ => None,
        }
    }

    /// `φ₂(κ²)` of the split (1 if no split is declared).
    pub fn sublinear_at(&self, t: f64) -> f64 {
        self.split
            .as_ref()
            .map(|s| s.sublinear_part.eval(t))
            .unwrap_or(1.0)
    }

    /// Lipschitz constant `ℓ` of the split (0 if no split is declared).
    pub fn lipschitz(&self) -> f64 {
        self.split.as_ref().map(|s| s.lipschitz).unwrap_or(0.0)
    }

    /// Checks the index-function axioms on a grid: `φ(0) = 0`, nondecreasing,
    /// and (if a split is declared) the split properties.
    pub fn verify_on_grid(&self, grid: &[f64]) -> Result<()> {
        let at_zero = self.eval(0.0);
        if at_zero != 0.0 && self.holder_exponent() != Some(0.0) {
            return Err(Error::Parameter(format!(
                "index function has φ(0) = {at_zero}"
            )));
        }
        for w in grid.windows(2) {
            let (a, b) = (self.eval(w[0]), self.eval(w[1]));
            if !(b >= a * (1.0 - COVER_TOLERANCE)) {
                return Err(Error::Parameter(format!(
                    "index function decreases between t={:e} and t={:e}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(split) = &self.split {
            for &t in grid {
                let prod = split.lipschitz_part.eval(t) * split.sublinear_part.eval(t);
                let phi = self.eval(t);
                if (prod - phi).abs() > 1e-12 * phi.abs().max(1e-300) {
                    return Err(Error::Parameter(format!(
                        "split does not reproduce φ at t={t:e}: {prod} vs {phi}"
                    )));
                }
            }
            for w in grid.windows(2) {
                let r0 = split.sublinear_part.eval(w[0]) / w[0];
                let r1 = split.sublinear_part.eval(w[1]) / w[1];
                if r1 > r0 * (1.0 + COVER_TOLERANCE) {
                    return Err(Error::Parameter(format!(
                        "φ₂(t)/t increases between t={:e} and t={:e}",
                        w[0], w[1]
                    )));
                }
            }
            for (i, &a) in grid.iter().enumerate() {
                for &b in &grid[i + 1..] {
                    let d = (split.lipschitz_part.eval(a) - split.lipschitz_part.eval(b)).abs();
                    if d > split.lipschitz * (a - b).abs() * (1.0 + CONSTANT_SLACK) + 1e-15 {
                        return Err(Error::Parameter(format!(
                            "φ₁ violates its Lipschitz constant {} between {a:e} and {b:e}",
                            split.lipschitz
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![hi],
        _ => {
            let (a, b) = (libm::log(lo), libm::log(hi));
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        libm::exp(a + (b - a) * i as f64 / (n - 1) as f64)
                    }
                })
                .collect()
        }
    }
}

/// Default verification grid over `(0, κ²]`.
pub fn default_grid(kappa2: f64, n: usize) -> Vec<f64> {
    log_grid(kappa2 * libm::pow(10.0, -GRID_DECADES), kappa2, n)
}

/// Whether `ψ` covers `φ`, i.e. `ψ/φ` is nondecreasing on the (ascending) grid.
pub fn covers(phi: &IndexFunction, psi: &IndexFunction, grid: &[f64]) -> Result<bool> {
    let mut prev: Option<f64> = None;
    for &t in grid {
        let denom = phi.eval(t);
        if denom == 0.0 {
            return Err(Error::InputDomain(format!(
                "φ vanishes at interior grid point t={t:e}"
            )));
        }
        let ratio = psi.eval(t) / denom;
        if let Some(p) = prev {
            if ratio < p * (1.0 - COVER_TOLERANCE) {
                return Ok(false);
            }
        }
        prev = Some(ratio);
    }
    Ok(true)
}

/// The implemented regularization families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterKind {
    Tikhonov,
    IteratedTikhonov { m: u32 },
    SpectralCutoff,
    /// Step `1/κ²`, `k(λ) = ⌈κ²/λ⌉` iterations.
    Landweber,
}

/// A regularization function with its declared constants.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterFamily {
    pub kind: FilterKind,
    /// Upper end of the spectrum; fixes the Landweber step.
    pub kappa2: f64,
    pub qualification: IndexFunction,
    pub gamma_minus1: f64,
    pub gamma_0: f64,
    pub gamma_psi: f64,
}

impl FilterFamily {
    pub fn tikhonov(kappa2: f64) -> Self {
        Self {
            kind: FilterKind::Tikhonov,
            kappa2,
            qualification: IndexFunction::power(1.0),
            gamma_minus1: 1.0,
            gamma_0: 1.0,
            gamma_psi: 1.0,
        }
    }

    pub fn iterated_tikhonov(kappa2: f64, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::Parameter(
                "iterated Tikhonov needs at least one iteration".into(),
            ));
        }
        Ok(Self {
            kind: FilterKind::IteratedTikhonov { m },
            kappa2,
            qualification: IndexFunction::power(m as f64),
            gamma_minus1: m as f64,
            gamma_0: 1.0,
            gamma_psi: 1.0,
        })
    }

    /// Spectral cut-off has every index function as qualification with `γ_ψ = 1`;
    /// `qualification_exponent` picks the power `t^p` that gets declared and verified.
    pub fn spectral_cutoff(kappa2: f64, qualification_exponent: f64) -> Result<Self> {
        check_exponent(qualification_exponent)?;
        Ok(Self {
            kind: FilterKind::SpectralCutoff,
            kappa2,
            qualification: IndexFunction::power(qualification_exponent),
            gamma_minus1: 1.0,
            gamma_0: 1.0,
            gamma_psi: 1.0,
        })
    }

    /// Landweber with qualification `t^p`, `γ_ψ = (p/e)^p`. Because the iteration
    /// count is rounded up, `λ·g_λ(0) = λ⌈κ²/λ⌉/κ² < 2`, so `γ₋₁ = 2`.
    pub fn landweber(kappa2: f64, qualification_exponent: f64) -> Result<Self> {
        check_exponent(qualification_exponent)?;
        if !(kappa2 > 0.0) {
            return Err(Error::Parameter(format!(
                "Landweber needs κ² > 0, got {kappa2}"
            )));
        }
        let p = qualification_exponent;
        Ok(Self {
            kind: FilterKind::Landweber,
            kappa2,
            qualification: IndexFunction::power(p),
            gamma_minus1: 2.0,
            gamma_0: 1.0,
            gamma_psi: libm::pow(p / core::f64::consts::E, p),
        })
    }

    /// `γ̄_ψ = max(γ₀ + 1, γ₋₁, γ_ψ)`.
    pub fn gamma_bar(&self) -> f64 {
        (self.gamma_0 + 1.0).max(self.gamma_minus1).max(self.gamma_psi)
    }

    /// Number of Landweber iterations associated with `λ`.
    pub fn landweber_iterations(&self, lambda: f64) -> f64 {
        let ratio = self.kappa2 / lambda;
        // Grid values κ²q^{-i} with integer q^i must not round up one step too far.
        libm::ceil(ratio * (1.0 - 4.0 * f64::EPSILON)).max(1.0)
    }

    /// `g_λ(t)`; at `t = 0` the finite limit `lim_{t↓0} g_λ(t)`.
    #[inline]
    pub fn g(&self, lambda: f64, t: f64) -> f64 {
        match self.kind {
            FilterKind::Tikhonov => iterated_tikhonov_g(lambda, t, 1),
            FilterKind::IteratedTikhonov { m } => iterated_tikhonov_g(lambda, t, m),
            FilterKind::SpectralCutoff => {
                if t >= lambda && t > 0.0 {
                    1.0 / t
                } else {
                    0.0
                }
            }
            FilterKind::Landweber => {
                let k = self.landweber_iterations(lambda);
                if t <= 0.0 {
                    k / self.kappa2
                } else {
                    let u = (t / self.kappa2).min(1.0);
                    -libm::expm1(k * libm::log1p(-u)) / t
                }
            }
        }
    }

    /// `r_λ(t) = 1 − t·g_λ(t)`, evaluated in closed form.
    #[inline]
    pub fn r(&self, lambda: f64, t: f64) -> f64 {
        match self.kind {
            FilterKind::Tikhonov => iterated_tikhonov_r(lambda, t, 1),
            FilterKind::IteratedTikhonov { m } => iterated_tikhonov_r(lambda, t, m),
            FilterKind::SpectralCutoff => {
                if t >= lambda && t > 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
            FilterKind::Landweber => {
                let k = self.landweber_iterations(lambda);
                let u = (t.max(0.0) / self.kappa2).min(1.0);
                if u >= 1.0 {
                    0.0
                } else {
                    libm::exp(k * libm::log1p(-u))
                }
            }
        }
    }

    /// Elementwise `g_λ(σ_i)`.
    pub fn apply_filter(&self, lambda: f64, eigenvalues: &[f64]) -> Result<Vec<f64>> {
        check_lambda(lambda)?;
        Ok(eigenvalues.iter().map(|&t| self.g(lambda, t)).collect())
    }

    /// Elementwise `r_λ(σ_i)`.
    pub fn residual(&self, lambda: f64, eigenvalues: &[f64]) -> Result<Vec<f64>> {
        check_lambda(lambda)?;
        Ok(eigenvalues.iter().map(|&t| self.r(lambda, t)).collect())
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FilterKind::Tikhonov => "tikhonov",
            FilterKind::IteratedTikhonov { .. } => "iterated_tikhonov",
            FilterKind::SpectralCutoff => "spectral_cutoff",
            FilterKind::Landweber => "landweber",
        }
    }
}

#[inline]
fn iterated_tikhonov_g(lambda: f64, t: f64, m: u32) -> f64 {
    // (1 − a^m)/t = (1/(λ+t)) Σ_{k<m} a^k with a = λ/(λ+t); no cancellation near t = 0.
    let denom = lambda + t.max(0.0);
    let a = lambda / denom;
    let mut acc = 0.0;
    let mut pow = 1.0;
    for _ in 0..m {
        acc += pow;
        pow *= a;
    }
    acc / denom
}

#[inline]
fn iterated_tikhonov_r(lambda: f64, t: f64, m: u32) -> f64 {
    let a = lambda / (lambda + t.max(0.0));
    libm::pow(a, m as f64)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!(
            "regularization parameter must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Parameter(format!(
            "qualification exponent must be positive, got {p}"
        )));
    }
    Ok(())
}

/// Exponents at which the interpolation bound `|g_λ(t)| t^r ≤ γ̄ λ^{r−1}` is checked.
pub const INTERPOLATION_EXPONENTS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Observed maxima on the verification grid, each paired with its declared bound
/// and the `(λ, t)` where it is attained.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantCheck {
    pub name: &'static str,
    pub observed: f64,
    pub declared: f64,
    pub lambda: f64,
    pub t: f64,
}

impl ConstantCheck {
    fn new(name: &'static str, declared: f64) -> Self {
        Self {
            name,
            observed: 0.0,
            declared,
            lambda: f64::NAN,
            t: f64::NAN,
        }
    }

    #[inline]
    fn observe(&mut self, value: f64, lambda: f64, t: f64) {
        if !(value <= self.observed) {
            self.observed = value;
            self.lambda = lambda;
            self.t = t;
        }
    }

    pub fn holds(&self) -> bool {
        self.observed <= self.declared * (1.0 + CONSTANT_SLACK)
    }

    /// `observed/declared − 1`, positive when the declaration fails.
    pub fn relative_excess(&self) -> f64 {
        self.observed / self.declared - 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub filter: &'static str,
    /// sup λ|g_λ(t)| against γ₋₁.
    pub supg: ConstantCheck,
    /// sup |r_λ(t)| against γ₀.
    pub residual: ConstantCheck,
    /// sup |r_λ(t)|ψ(t)/ψ(λ) against γ_ψ.
    pub qualification: ConstantCheck,
    /// sup |g_λ(t)| t^r λ^{1−r} against γ̄_ψ, one per exponent in
    /// [`INTERPOLATION_EXPONENTS`].
    pub interpolation: Vec<(f64, ConstantCheck)>,
}

impl FilterReport {
    pub fn checks(&self) -> impl Iterator<Item = &ConstantCheck> {
        [&self.supg, &self.residual, &self.qualification]
            .into_iter()
            .chain(self.interpolation.iter().map(|(_, c)| c))
    }

    pub fn first_violation(&self) -> Option<&ConstantCheck> {
        self.checks().find(|c| !c.holds())
    }

    pub fn max_relative_excess(&self) -> f64 {
        self.checks()
            .map(|c| c.relative_excess())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Computes the grid maxima for all declared constants without failing.
pub fn filter_constant_report(
    filter: &FilterFamily,
    kappa2: f64,
    n_lambda: usize,
    n_t: usize,
) -> FilterReport {
    let lambdas = default_grid(kappa2, n_lambda);
    let ts = default_grid(kappa2, n_t);
    let gbar = filter.gamma_bar();
    let mut supg = ConstantCheck::new("gamma_minus1", filter.gamma_minus1);
    let mut residual = ConstantCheck::new("gamma_0", filter.gamma_0);
    let mut qualification = ConstantCheck::new("gamma_psi", filter.gamma_psi);
    let mut interpolation: Vec<(f64, ConstantCheck)> = INTERPOLATION_EXPONENTS
        .iter()
        .map(|&r| (r, ConstantCheck::new("gamma_bar", gbar)))
        .collect();
    for &lambda in &lambdas {
        let psi_lambda = filter.qualification.eval(lambda);
        for &t in &ts {
            let g = filter.g(lambda, t).abs();
            let r = filter.r(lambda, t).abs();
            supg.observe(g * lambda, lambda, t);
            residual.observe(r, lambda, t);
            qualification.observe(r * filter.qualification.eval(t) / psi_lambda, lambda, t);
            for (exp, check) in interpolation.iter_mut() {
                let v = g * libm::pow(t, *exp) * libm::pow(lambda, 1.0 - *exp);
                check.observe(v, lambda, t);
            }
        }
    }
    FilterReport {
        filter: filter.name(),
        supg,
        residual,
        qualification,
        interpolation,
    }
}

/// Verifies every declared constant of `filter` on an `n_lambda × n_t` log grid
/// over `(0, κ²]²`, failing on the first violation.
pub fn verify_filter_constants(
    filter: &FilterFamily,
    kappa2: f64,
    n_lambda: usize,
    n_t: usize,
) -> Result<FilterReport> {
    let report = filter_constant_report(filter, kappa2, n_lambda, n_t);
    if let Some(bad) = report.first_violation() {
        return Err(Error::ConstantDeclaration {
            constant: bad.name,
            lambda: bad.lambda,
            t: bad.t,
            observed: bad.observed,
            declared: bad.declared,
        });
    }
    Ok(report)
}

/// sup over the grid of `|r_λ(t)|φ(t)/φ(λ)`; bounded by `γ̄_ψ` whenever the
/// filter's qualification covers `φ`.
pub fn residual_interpolation_sup(
    filter: &FilterFamily,
    phi: &IndexFunction,
    kappa2: f64,
    n_lambda: usize,
    n_t: usize,
) -> f64 {
    let lambdas = default_grid(kappa2, n_lambda);
    let ts = default_grid(kappa2, n_t);
    let mut worst = 0.0f64;
    for &lambda in &lambdas {
        let pl = phi.eval(lambda);
        for &t in &ts {
            worst = worst.max(filter.r(lambda, t).abs() * phi.eval(t) / pl);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tikhonov_values() {
        let f = FilterFamily::tikhonov(1.0);
        assert_eq!(f.apply_filter(1.0, &[1.0]).unwrap(), [0.5]);
        assert_eq!(f.residual(1.0, &[1.0]).unwrap(), [0.5]);
        assert_eq!(f.g(0.25, 0.0), 4.0);
    }

    #[test]
    fn cutoff_values() {
        let f = FilterFamily::spectral_cutoff(1.0, 2.0).unwrap();
        assert_eq!(f.apply_filter(0.5, &[1.0, 0.25]).unwrap(), [1.0, 0.0]);
        assert_eq!(f.residual(0.5, &[1.0]).unwrap(), [0.0]);
    }

    #[test]
    fn landweber_matches_explicit_iteration() {
        let f = FilterFamily::landweber(1.0, 2.0).unwrap();
        assert_eq!(f.landweber_iterations(0.25), 4.0);
        // Σ_{i<4} (1 − 0.5)^i = 1 + 0.5 + 0.25 + 0.125
        let explicit: f64 = (0..4).map(|i| libm::pow(0.5, i as f64)).sum();
        assert!((explicit - 1.875).abs() < 1e-15);
        let g = f.apply_filter(0.25, &[0.5]).unwrap()[0];
        assert!((g - explicit).abs() < 1e-14, "{g}");
        // Landweber recursion x_{k+1} = x_k + (1 − t x_k)/κ², starting from 0.
        for &t in &[0.01, 0.3, 0.99, 1.0] {
            let mut x = 0.0;
            for _ in 0..4 {
                x += 1.0 - t * x;
            }
            assert!((f.g(0.25, t) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn iterated_tikhonov_residual_is_power() {
        let f = FilterFamily::iterated_tikhonov(1.0, 2).unwrap();
        assert!((f.residual(1.0, &[1.0]).unwrap()[0] - 0.25).abs() < 1e-15);
        // r = 1 − t g  within rounding
        for &t in &[1e-6, 0.1, 0.7, 1.0] {
            let lhs = 1.0 - t * f.g(0.3, t);
            assert!((lhs - f.r(0.3, t)).abs() < 1e-14);
        }
        assert_eq!(f.g(0.5, 0.0), 4.0);
    }

    #[test]
    fn tikhonov_is_iterated_tikhonov_with_one_step() {
        let a = FilterFamily::tikhonov(2.0);
        let b = FilterFamily::iterated_tikhonov(2.0, 1).unwrap();
        for &l in &default_grid(2.0, 37) {
            for &t in &default_grid(2.0, 41) {
                assert_eq!(a.g(l, t).to_bits(), b.g(l, t).to_bits());
                assert_eq!(a.r(l, t).to_bits(), b.r(l, t).to_bits());
            }
        }
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let f = FilterFamily::tikhonov(1.0);
        assert!(matches!(f.apply_filter(0.0, &[1.0]), Err(Error::Parameter(_))));
        assert!(matches!(f.residual(-1.0, &[1.0]), Err(Error::Parameter(_))));
    }

    #[test]
    fn declared_constants_hold_for_all_filters() {
        let kappa2 = 1.0;
        let filters = [
            FilterFamily::tikhonov(kappa2),
            FilterFamily::iterated_tikhonov(kappa2, 3).unwrap(),
            FilterFamily::spectral_cutoff(kappa2, 4.0).unwrap(),
            FilterFamily::landweber(kappa2, 2.0).unwrap(),
        ];
        for f in &filters {
            let report = verify_filter_constants(f, kappa2, 60, 60).unwrap();
            assert!(report.max_relative_excess() <= CONSTANT_SLACK, "{}", f.name());
        }
        let tik = verify_filter_constants(&filters[0], kappa2, 60, 60).unwrap();
        assert!(tik.supg.observed <= 1.0 && tik.supg.observed > 0.99);
    }

    #[test]
    fn wrong_declaration_is_reported_with_location() {
        let mut f = FilterFamily::landweber(1.0, 2.0).unwrap();
        f.gamma_minus1 = 1.0;
        match verify_filter_constants(&f, 1.0, 50, 50) {
            Err(Error::ConstantDeclaration {
                constant, lambda, ..
            }) => {
                assert_eq!(constant, "gamma_minus1");
                assert!(lambda > 0.0);
            }
            other => panic!("expected a declaration error, got {other:?}"),
        }
    }

    #[test]
    fn covers_examples() {
        let grid = default_grid(1.0, 200);
        let t = IndexFunction::power(1.0);
        assert!(covers(&IndexFunction::power(0.3), &t, &grid).unwrap());
        assert!(!covers(&t, &IndexFunction::power(0.5), &grid).unwrap());
        // t / (√t log(1+t)) = √t / log(1+t) is decreasing near 0 and increasing
        // beyond t ≈ 2.5; on (0, 1] the dense scan below decides.
        let sqrt_log = IndexFunction::new(1.0, IndexShape::PowerLog { exponent: 0.5 });
        let dense: Vec<f64> = log_grid(1e-8, 1.0, 20_000);
        let oracle = dense
            .windows(2)
            .all(|w| libm::sqrt(w[1]) / libm::log1p(w[1]) >= libm::sqrt(w[0]) / libm::log1p(w[0]) * (1.0 - 1e-12));
        assert_eq!(covers(&sqrt_log, &t, &grid).unwrap(), oracle);
        assert!(!oracle);
    }

    #[test]
    fn covers_rejects_vanishing_phi() {
        let zero = IndexFunction::new(0.0, IndexShape::Power { exponent: 1.0 });
        assert!(matches!(
            covers(&zero, &IndexFunction::power(1.0), &[0.5, 1.0]),
            Err(Error::InputDomain(_))
        ));
    }

    #[test]
    fn holder_split_is_valid() {
        for &r in &[0.25, 0.5, 1.0, 1.5, 2.0, 3.0] {
            let phi = IndexFunction::holder(1.3, r, 2.0).unwrap();
            phi.verify_on_grid(&default_grid(2.0, 80)).unwrap();
        }
    }

    #[test]
    fn residual_interpolation_for_covered_phi() {
        let f = FilterFamily::tikhonov(1.0);
        for &r in &[0.1, 0.5, 1.0] {
            let sup = residual_interpolation_sup(&f, &IndexFunction::power(r), 1.0, 80, 80);
            assert!(sup <= f.gamma_bar() * (1.0 + CONSTANT_SLACK));
        }
    }
}

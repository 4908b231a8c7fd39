//! The balancing principle: the abstract deterministic selection rule and its fully
//! data-driven instance on the random grid `Λ_x`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::filters::FilterFamily;
use crate::spectral::{
    empirical_effective_dimension, fit_path, weighted_norm_between, EstimatorPath, SpectralDecomposition,
};

/// Safety bound on the number of geometric grid steps ever enumerated.
pub const MAX_GRID_STEPS: usize = 10_000;

/// `ℓ_{η,n} = 2 log(8 log n / (η log q))`.
pub fn ell_eta_n(n: f64, eta: f64, q: f64) -> Result<f64> {
    let inner = 8.0 * libm::log(n) / (eta * libm::log(q));
    if !(inner > 0.0) || !inner.is_finite() {
        return Err(Error::Parameter(format!(
            "ℓ_(η,n) undefined for n={n}, η={eta}, q={q}"
        )));
    }
    Ok(2.0 * libm::log(inner))
}

/// `S(λ) = (σ √(2 (N ∨ 1)) + M/5) / √(λ n)` for a given effective dimension `N`.
pub fn estimation_term(effective_dimension: f64, lambda: f64, n: usize, sigma: f64, m: f64) -> f64 {
    (sigma * libm::sqrt(2.0 * effective_dimension.max(1.0)) + m / 5.0) / libm::sqrt(lambda * n as f64)
}

/// `S_x(n, λ)` using the empirical effective dimension of `dec`.
pub fn estimation_term_empirical(dec: &SpectralDecomposition, lambda: f64, n: usize, sigma: f64, m: f64) -> f64 {
    estimation_term(empirical_effective_dimension(dec, lambda), lambda, n, sigma, m)
}

/// How the threshold constant of the data-driven rule is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstantMode {
    /// `64 γ̄_ψ ℓ_{η,n}` and the grid constraints `100κ²ℓ²/n`, `3κ²(N_x∨1)/n`.
    Theory,
    /// Threshold constant `c_user`; the grid constraints are set by
    /// [`BalancingConfig::grid_floor`] and [`BalancingConfig::grid_dimension_factor`].
    Scaled(f64),
}

/// Lower constraints of the data grid: `λ ≥ floor·κ²/n` and
/// `λ ≥ dimension_factor·κ²(N_x(λ)∨1)/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConstraints {
    pub floor: f64,
    pub dimension_factor: f64,
}

impl GridConstraints {
    pub fn theory(ell: f64) -> Self {
        Self {
            floor: 100.0 * ell * ell,
            dimension_factor: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancingConfig {
    pub q: f64,
    pub eta: f64,
    pub sigma: f64,
    pub m: f64,
    pub gamma_bar: f64,
    pub constant_mode: ConstantMode,
    /// `κ²`, the top of the grid.
    pub lambda_max: f64,
    /// Floor factor of the grid in scaled mode (theory mode uses `100ℓ²`).
    pub grid_floor: f64,
    /// Effective-dimension factor of the grid in scaled mode (theory mode uses 3).
    pub grid_dimension_factor: f64,
}

/// Scaled-mode grid defaults: `λ ≥ κ²/n` and `λ ≥ 0.1κ²(N_x∨1)/n`.
pub const SCALED_GRID_FLOOR: f64 = 1.0;
pub const SCALED_GRID_DIMENSION_FACTOR: f64 = 0.1;

impl BalancingConfig {
    pub fn new(q: f64, eta: f64, sigma: f64, m: f64, filter: &FilterFamily, constant_mode: ConstantMode, kappa2: f64) -> Self {
        Self {
            q,
            eta,
            sigma,
            m,
            gamma_bar: filter.gamma_bar(),
            constant_mode,
            lambda_max: kappa2,
            grid_floor: SCALED_GRID_FLOOR,
            grid_dimension_factor: SCALED_GRID_DIMENSION_FACTOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 1.0) || !self.q.is_finite() {
            return Err(Error::Parameter(format!("grid ratio q must exceed 1, got {}", self.q)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Parameter(format!("η must lie in (0,1), got {}", self.eta)));
        }
        if !(self.sigma > 0.0 && self.m > 0.0) {
            return Err(Error::Parameter(format!(
                "Bernstein constants must be positive, got σ={}, M={}",
                self.sigma, self.m
            )));
        }
        if !(self.lambda_max > 0.0) {
            return Err(Error::Parameter("κ² must be positive".into()));
        }
        if !(self.grid_floor > 0.0 && self.grid_dimension_factor > 0.0) {
            return Err(Error::Parameter("grid constraint factors must be positive".into()));
        }
        if let ConstantMode::Scaled(c) = self.constant_mode {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::Parameter(format!("c_user must be positive, got {c}")));
            }
        }
        Ok(())
    }

    pub fn ell(&self, n: usize) -> Result<f64> {
        ell_eta_n(n as f64, self.eta, self.q)
    }

    /// Constant `K` in the rule `‖·‖ ≤ K √λ′ S_x(λ′)`.
    pub fn threshold_constant(&self, n: usize) -> Result<f64> {
        Ok(match self.constant_mode {
            ConstantMode::Theory => 64.0 * self.gamma_bar * self.ell(n)?,
            ConstantMode::Scaled(c) => c,
        })
    }

    pub fn grid_constraints(&self, n: usize) -> Result<GridConstraints> {
        Ok(match self.constant_mode {
            ConstantMode::Theory => GridConstraints::theory(self.ell(n)?),
            ConstantMode::Scaled(_) => GridConstraints {
                floor: self.grid_floor,
                dimension_factor: self.grid_dimension_factor,
            },
        })
    }
}

/// `{κ²q^{−i}}` restricted to `λ ≥ floor·κ²/n` and `λ ≥ factor·κ²(N(λ)∨1)/n`,
/// descending. Both constraints are monotone in `λ`, so enumeration stops at the
/// first violation of either.
pub fn geometric_grid_with(
    kappa2: f64,
    q: f64,
    n: usize,
    constraints: GridConstraints,
    effective_dimension: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let nf = n as f64;
    let floor = constraints.floor * kappa2 / nf;
    let mut grid = Vec::new();
    for i in 0..MAX_GRID_STEPS {
        let lambda = kappa2 * libm::pow(q, -(i as f64));
        if lambda < floor {
            break;
        }
        if lambda < constraints.dimension_factor * kappa2 * effective_dimension(lambda).max(1.0) / nf {
            break;
        }
        grid.push(lambda);
    }
    grid
}

/// The data grid `Λ_x`.
pub fn build_data_grid(dec: &SpectralDecomposition, kappa2: f64, n: usize, config: &BalancingConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let constraints = config.grid_constraints(n)?;
    Ok(geometric_grid_with(kappa2, config.q, n, constraints, |l| {
        empirical_effective_dimension(dec, l)
    }))
}

/// One pairwise check `lhs ≤ rhs` of the rule, for `λ′ ≤ λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub lambda: f64,
    pub lambda_prime: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub lambda_hat: f64,
    pub index: usize,
    /// Member grid values, descending.
    pub member_set: Vec<f64>,
    pub comparisons: Vec<Comparison>,
}

/// Balancing selection over a descending grid with pairwise distances
/// `pair_norm(i, j)` (grid indices, `λ_j ≤ λ_i`) and thresholds `threshold(j)`.
/// Every pair is evaluated; membership is the definitional check, without any
/// assumption of downward closure.
pub fn select_by_index(
    grid: &[f64],
    mut pair_norm: impl FnMut(usize, usize) -> f64,
    mut threshold: impl FnMut(usize) -> f64,
) -> Result<Selection> {
    if grid.is_empty() {
        return Err(Error::Parameter("balancing needs a nonempty grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Parameter("balancing grid must be strictly descending".into()));
    }
    let m = grid.len();
    let rhs: Vec<f64> = (0..m).map(&mut threshold).collect();
    let mut comparisons = Vec::with_capacity(m * (m + 1) / 2);
    let mut member = alloc::vec![true; m];
    for i in 0..m {
        for j in i..m {
            let lhs = if i == j { 0.0 } else { pair_norm(i, j) };
            let pass = lhs <= rhs[j];
            member[i] &= pass;
            comparisons.push(Comparison {
                lambda: grid[i],
                lambda_prime: grid[j],
                lhs,
                rhs: rhs[j],
                pass,
            });
        }
    }
    let index = member.iter().position(|&b| b).unwrap_or(m - 1);
    let member_set = (0..m).filter(|&i| member[i]).map(|i| grid[i]).collect();
    Ok(Selection {
        lambda_hat: grid[index],
        index,
        member_set,
        comparisons,
    })
}

/// Abstract rule: members are the `λ` with `pair_norm(λ, λ′) ≤ 4C√λ′ S(λ′)` for all
/// grid `λ′ ≤ λ`; `λ̂` is the largest member.
pub fn abstract_select(
    grid: &[f64],
    mut pair_norm: impl FnMut(f64, f64) -> f64,
    mut s: impl FnMut(f64) -> f64,
    c: f64,
) -> Result<Selection> {
    select_by_index(
        grid,
        |i, j| pair_norm(grid[i], grid[j]),
        |j| 4.0 * c * libm::sqrt(grid[j]) * s(grid[j]),
    )
}

/// `λ* = max({λ ∈ grid : A(λ) ≤ S(λ)} ∪ {λ_min})`.
pub fn lambda_star(grid: &[f64], mut a: impl FnMut(f64) -> f64, mut s: impl FnMut(f64) -> f64) -> Result<f64> {
    let last = *grid
        .last()
        .ok_or_else(|| Error::Parameter("λ* needs a nonempty grid".into()))?;
    Ok(grid
        .iter()
        .copied()
        .filter(|&l| a(l) <= s(l))
        .fold(last, f64::max))
}

/// `λ_min = q·min{λ ∈ Λ^(q) : λ ≥ 100κ²ℓ²/n and λ ≥ 6κ²(N(λ)∨1)/n}`.
pub fn theoretical_lambda_min(
    effective_dimension: impl Fn(f64) -> f64,
    kappa2: f64,
    n: usize,
    q: f64,
    eta: f64,
) -> Result<f64> {
    let ell = ell_eta_n(n as f64, eta, q)?;
    let need = (100.0 * ell * ell).max(6.0);
    if (n as f64) < need {
        return Err(Error::Parameter(format!(
            "λ_min needs n ≥ max(100ℓ², 6) = {need:.1}, got n = {n}"
        )));
    }
    let grid = geometric_grid_with(
        kappa2,
        q,
        n,
        GridConstraints {
            floor: 100.0 * ell * ell,
            dimension_factor: 6.0,
        },
        effective_dimension,
    );
    let smallest = grid
        .last()
        .copied()
        .ok_or_else(|| Error::Numerical("no grid value satisfies the λ_min constraints".into()))?;
    Ok(q * smallest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancingOutcome {
    pub lambda_hat: f64,
    pub grid: Vec<f64>,
    pub member_set: Vec<f64>,
    pub comparisons: Vec<Comparison>,
    pub empty_grid_flag: bool,
    /// `K` in `‖·‖ ≤ K√λ′S_x(λ′)`.
    pub threshold_constant: f64,
    pub ell: f64,
    /// `S_x` on the grid.
    pub estimation_terms: Vec<f64>,
}

impl BalancingOutcome {
    /// `λ̂` is a grid element, or the `κ²` sentinel with the flag set.
    pub fn is_consistent(&self, kappa2: f64) -> bool {
        if self.empty_grid_flag {
            self.grid.is_empty() && self.lambda_hat == kappa2
        } else {
            self.grid.contains(&self.lambda_hat)
                && self.member_set.contains(self.grid.last().unwrap())
                && self.member_set.iter().all(|&l| l <= self.lambda_hat)
        }
    }
}

/// Data-driven `λ̂_z` on `Λ_x`. The path must contain every element of `Λ_x`.
pub fn select_data_driven(
    dec: &SpectralDecomposition,
    path: &EstimatorPath,
    kappa2: f64,
    n: usize,
    config: &BalancingConfig,
) -> Result<BalancingOutcome> {
    let grid = build_data_grid(dec, kappa2, n, config)?;
    select_on_grid(dec, path, grid, n, config)
}

fn select_on_grid(
    dec: &SpectralDecomposition,
    path: &EstimatorPath,
    grid: Vec<f64>,
    n: usize,
    config: &BalancingConfig,
) -> Result<BalancingOutcome> {
    let ell = config.ell(n)?;
    let k = config.threshold_constant(n)?;
    if grid.is_empty() {
        return Ok(BalancingOutcome {
            lambda_hat: config.lambda_max,
            grid,
            member_set: Vec::new(),
            comparisons: Vec::new(),
            empty_grid_flag: true,
            threshold_constant: k,
            ell,
            estimation_terms: Vec::new(),
        });
    }
    let idx: Vec<usize> = grid
        .iter()
        .map(|&l| path.index_of(l))
        .collect::<Result<_>>()?;
    let s: Vec<f64> = grid
        .iter()
        .map(|&l| estimation_term_empirical(dec, l, n, config.sigma, config.m))
        .collect();
    for w in 1..s.len() {
        if s[w] > config.q * s[w - 1] * (1.0 + 1e-12) {
            return Err(Error::Numerical(format!(
                "grid ratio contract S_x(λ_i) ≤ q·S_x(λ_(i−1)) fails at λ={:e}",
                grid[w]
            )));
        }
    }
    let sel = select_by_index(
        &grid,
        |i, j| weighted_norm_between(dec, &path.beta[idx[i]], &path.beta[idx[j]], grid[j]),
        |j| k * libm::sqrt(grid[j]) * s[j],
    )?;
    Ok(BalancingOutcome {
        lambda_hat: sel.lambda_hat,
        grid,
        member_set: sel.member_set,
        comparisons: sel.comparisons,
        empty_grid_flag: false,
        threshold_constant: k,
        ell,
        estimation_terms: s,
    })
}

/// Builds `Λ_x`, fits the path on it, and selects `λ̂_z`.
pub fn balance(
    dec: &SpectralDecomposition,
    filter: &FilterFamily,
    config: &BalancingConfig,
) -> Result<(BalancingOutcome, Option<EstimatorPath>)> {
    let n = dec.n();
    let kappa2 = config.lambda_max;
    let grid = build_data_grid(dec, kappa2, n, config)?;
    if grid.is_empty() {
        return Ok((select_on_grid(dec, &empty_path(filter), grid, n, config)?, None));
    }
    let path = fit_path(dec, filter, &grid)?;
    let outcome = select_on_grid(dec, &path, grid, n, config)?;
    Ok((outcome, Some(path)))
}

fn empty_path(filter: &FilterFamily) -> EstimatorPath {
    EstimatorPath {
        grid: Vec::new(),
        beta: Vec::new(),
        filter: filter.clone(),
    }
}

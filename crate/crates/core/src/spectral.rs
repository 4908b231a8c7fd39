//! Eigendecomposition of the empirical operator `B_x` (through `G/n`), estimator
//! paths `β^λ = g_λ(σ)·ŷ`, the weighted norms used by the balancing rule, and the
//! empirical effective dimension.
//!
//! Two routes produce the same decomposition. The dense route diagonalises `G/n`
//! directly. The feature route, available when `G = W Wᵀ` with `W` an `n×D`
//! feature matrix, diagonalises the `D×D` matrix `WᵀW/n` instead and recovers the
//! nonzero part of the spectrum of `G/n` from it.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::filters::FilterFamily;
use crate::kernels::{KernelSpec, PSD_TOLERANCE};
use crate::linalg::{symmetric_eigen, Matrix};

/// How the eigenvectors of `G/n` are stored.
#[derive(Debug, Clone)]
pub enum EigenBasis {
    /// `U` (n×n), columns are eigenvectors of `G/n`.
    Dense(Matrix),
    /// `W` (n×D) and the eigenvectors `V` (D×r) of `WᵀW/n` for the `r` retained
    /// eigenvalues; `u_k = W v_k / ‖W v_k‖` with `‖W v_k‖ = √(nσ_k)` stored in
    /// `norms`.
    Features { w: Matrix, v: Matrix, norms: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    n: usize,
    kappa2: f64,
    /// Eigenvalues of `G/n`, descending, clamped to `[0, κ²]`. The feature route
    /// keeps only the positive ones; the omitted null space does not affect any
    /// estimator.
    sigma: Vec<f64>,
    basis: EigenBasis,
    y_hat: Vec<f64>,
}

fn clamp_eigenvalue(s: f64, kappa2: f64) -> f64 {
    if s <= PSD_TOLERANCE * kappa2 {
        0.0
    } else {
        s.min(kappa2)
    }
}

impl SpectralDecomposition {
    /// Dense route from the Gram matrix `G` (not yet divided by `n`).
    pub fn from_gram(g: &Matrix, y: &[f64], kappa2: f64) -> Result<Self> {
        let n = g.rows();
        if g.cols() != n || y.len() != n || n == 0 {
            return Err(Error::Parameter(format!(
                "decomposition needs a square Gram matrix and matching outputs, got {}x{} and {}",
                g.rows(),
                g.cols(),
                y.len()
            )));
        }
        if !(kappa2 > 0.0) {
            return Err(Error::Parameter(format!("κ² must be positive, got {kappa2}")));
        }
        let scaled = g.scale(1.0 / n as f64);
        let eig = symmetric_eigen(&scaled).map_err(|e| {
            Error::Numerical(format!(
                "{e}; asymmetry {:e}, max |G/n| {:e}",
                scaled.asymmetry(),
                scaled.max_abs()
            ))
        })?;
        let sigma = eig.values.iter().map(|&s| clamp_eigenvalue(s, kappa2)).collect();
        let y_hat = eig.vectors.tr_mul_vec(y);
        Ok(Self {
            n,
            kappa2,
            sigma,
            basis: EigenBasis::Dense(eig.vectors),
            y_hat,
        })
    }

    /// Feature route from `W` with `G = W Wᵀ`.
    pub fn from_features(w: Matrix, y: &[f64], kappa2: f64) -> Result<Self> {
        let n = w.rows();
        if y.len() != n || n == 0 {
            return Err(Error::Parameter(format!(
                "feature matrix has {n} rows but {} outputs were given",
                y.len()
            )));
        }
        if !(kappa2 > 0.0) {
            return Err(Error::Parameter(format!("κ² must be positive, got {kappa2}")));
        }
        let d = w.cols();
        let nf = n as f64;
        let (sigma, v, norms, y_hat) = if n < d {
            // Smaller side: diagonalise G/n = WWᵀ/n and map u_k to v_k = Wᵀu_k/√(nσ_k).
            let mut g = w.matmul(&w.transpose()).scale(1.0 / nf);
            g.symmetrize();
            let eig = symmetric_eigen(&g)
                .map_err(|e| Error::Numerical(format!("{e}; max |G/n| {:e}", g.max_abs())))?;
            let keep: Vec<usize> = (0..n)
                .filter(|&k| clamp_eigenvalue(eig.values[k], kappa2) > 0.0)
                .collect();
            let sigma: Vec<f64> = keep.iter().map(|&k| clamp_eigenvalue(eig.values[k], kappa2)).collect();
            let norms: Vec<f64> = keep.iter().map(|&k| libm::sqrt(nf * eig.values[k])).collect();
            let u = Matrix::from_fn(n, keep.len(), |i, k| eig.vectors[(i, keep[k])]);
            let mut v = w.transpose().matmul(&u);
            for i in 0..d {
                for (x, s) in v.row_mut(i).iter_mut().zip(&norms) {
                    *x /= s;
                }
            }
            let y_hat = u.tr_mul_vec(y);
            (sigma, v, norms, y_hat)
        } else {
            let c = w.gram_of_columns(1.0 / nf);
            let eig = symmetric_eigen(&c)
                .map_err(|e| Error::Numerical(format!("{e}; max |WᵀW/n| {:e}", c.max_abs())))?;
            let keep: Vec<usize> = (0..d)
                .filter(|&k| clamp_eigenvalue(eig.values[k], kappa2) > 0.0)
                .collect();
            let sigma: Vec<f64> = keep.iter().map(|&k| clamp_eigenvalue(eig.values[k], kappa2)).collect();
            let v = Matrix::from_fn(d, keep.len(), |i, k| eig.vectors[(i, keep[k])]);
            // ŷ_k = u_kᵀ y = v_kᵀ Wᵀ y / √(n σ_k), with the unclamped eigenvalue so
            // that u_k stays a unit vector.
            let norms: Vec<f64> = keep.iter().map(|&k| libm::sqrt(nf * eig.values[k])).collect();
            let projected = v.tr_mul_vec(&w.tr_mul_vec(y));
            let y_hat = projected.iter().zip(&norms).map(|(p, s)| p / s).collect();
            (sigma, v, norms, y_hat)
        };
        Ok(Self {
            n,
            kappa2,
            sigma,
            basis: EigenBasis::Features { w, v, norms },
            y_hat,
        })
    }

    /// Decomposition for `kernel` at `points`, picking the feature route for
    /// Mercer kernels.
    pub fn for_kernel(kernel: &KernelSpec, points: &[f64], y: &[f64]) -> Result<Self> {
        let kappa2 = crate::kernels::kernel_sup_bound(kernel);
        match kernel {
            KernelSpec::Mercer(model) => {
                let w = crate::kernels::feature_matrix(model, points)?;
                Self::from_features(w, y, kappa2)
            }
            KernelSpec::Gaussian { .. } => {
                let g = crate::kernels::gram_matrix(kernel, points)?;
                Self::from_gram(&g, y, kappa2)
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn y_hat(&self) -> &[f64] {
        &self.y_hat
    }

    pub fn basis(&self) -> &EigenBasis {
        &self.basis
    }

    /// Eigenvectors of `G/n` for the stored eigenvalues, as columns of an
    /// `n × len(sigma)` matrix.
    pub fn eigenvectors(&self) -> Matrix {
        match &self.basis {
            EigenBasis::Dense(u) => u.clone(),
            EigenBasis::Features { w, v, norms } => {
                let mut u = w.matmul(v);
                for i in 0..self.n {
                    for (x, s) in u.row_mut(i).iter_mut().zip(norms) {
                        *x /= s;
                    }
                }
                u
            }
        }
    }

    /// `α = U β`, the representer coefficients with `f = (1/n) Σ α_i K(x_i, ·)`.
    pub fn alpha(&self, beta: &[f64]) -> Vec<f64> {
        match &self.basis {
            EigenBasis::Dense(u) => u.mul_vec(beta),
            EigenBasis::Features { w, v, norms } => {
                let scaled: Vec<f64> = beta.iter().zip(norms).map(|(b, s)| b / s).collect();
                w.mul_vec(&v.mul_vec(&scaled))
            }
        }
    }

    /// Coefficients `θ = (1/n) Wᵀ α = n^{−1/2} V diag(√σ) β` of `f` in the ONB of
    /// the feature space; only available on the feature route.
    pub fn onb_coefficients(&self, beta: &[f64]) -> Result<Vec<f64>> {
        match &self.basis {
            EigenBasis::Features { v, norms, .. } => {
                let inv_n = 1.0 / self.n as f64;
                let scaled: Vec<f64> = beta.iter().zip(norms).map(|(b, s)| b * s * inv_n).collect();
                Ok(v.mul_vec(&scaled))
            }
            EigenBasis::Dense(_) => Err(Error::Representation(
                "basis coefficients need a decomposition built from model features".into(),
            )),
        }
    }

    /// `N_x(λ) = Σ σ_i/(σ_i + λ)`.
    pub fn effective_dimension(&self, lambda: f64) -> f64 {
        empirical_effective_dimension(self, lambda)
    }
}

pub fn decompose(g: &Matrix, y: &[f64], kappa2: f64) -> Result<SpectralDecomposition> {
    SpectralDecomposition::from_gram(g, y, kappa2)
}

/// Estimator coefficients `β^λ_i = g_λ(σ_i) ŷ_i` for every `λ` of a descending grid.
#[derive(Debug, Clone)]
pub struct EstimatorPath {
    pub grid: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub filter: FilterFamily,
}

impl EstimatorPath {
    pub fn index_of(&self, lambda: f64) -> Result<usize> {
        self.grid
            .iter()
            .position(|&l| l == lambda)
            .ok_or(Error::Lookup(lambda))
    }

    pub fn beta_at(&self, lambda: f64) -> Result<&[f64]> {
        Ok(&self.beta[self.index_of(lambda)?])
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

pub fn fit_path(dec: &SpectralDecomposition, filter: &FilterFamily, grid: &[f64]) -> Result<EstimatorPath> {
    if grid.is_empty() {
        return Err(Error::Parameter("estimator path needs a nonempty grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Parameter("estimator grid must be strictly descending".into()));
    }
    let mut beta = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let g = filter.apply_filter(lambda, &dec.sigma)?;
        beta.push(g.iter().zip(&dec.y_hat).map(|(g, y)| g * y).collect());
    }
    Ok(EstimatorPath {
        grid: grid.to_vec(),
        beta,
        filter: filter.clone(),
    })
}

/// `f_z^λ(x) = (1/n) Σ α_i K(x_i, x)` at each query point.
pub fn predict(
    path: &EstimatorPath,
    dec: &SpectralDecomposition,
    kernel: &KernelSpec,
    train: &[f64],
    query: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    let beta = path.beta_at(lambda)?;
    if train.len() != dec.n {
        return Err(Error::Parameter(format!(
            "decomposition has {} samples but {} training points were given",
            dec.n,
            train.len()
        )));
    }
    let alpha = dec.alpha(beta);
    let inv_n = 1.0 / dec.n as f64;
    Ok(query
        .iter()
        .map(|&x| {
            train
                .iter()
                .zip(&alpha)
                .map(|(&xi, a)| a * kernel.eval(xi, x))
                .sum::<f64>()
                * inv_n
        })
        .collect())
}

/// `((1/n) Σ (σ_i² + λ′σ_i) (β_i − β′_i)²)^{1/2}`.
pub fn weighted_norm_between(dec: &SpectralDecomposition, beta: &[f64], beta_prime: &[f64], lambda_prime: f64) -> f64 {
    let s: f64 = dec
        .sigma
        .iter()
        .zip(beta.iter().zip(beta_prime))
        .map(|(&s, (a, b))| {
            let d = a - b;
            (s * s + lambda_prime * s) * d * d
        })
        .sum();
    libm::sqrt(s / dec.n as f64)
}

/// `‖(B_x + λ′)^{1/2}(f_z^λ − f_z^{λ′})‖_H`.
pub fn weighted_diff_norm(dec: &SpectralDecomposition, path: &EstimatorPath, lambda: f64, lambda_prime: f64) -> Result<f64> {
    let a = path.beta_at(lambda)?;
    let b = path.beta_at(lambda_prime)?;
    Ok(weighted_norm_between(dec, a, b, lambda_prime))
}

/// `‖f‖_H² = (1/n) Σ σ_i β_i²`.
pub fn rkhs_norm_squared(dec: &SpectralDecomposition, beta: &[f64]) -> f64 {
    dec.sigma.iter().zip(beta).map(|(s, b)| s * b * b).sum::<f64>() / dec.n as f64
}

/// `(1/n) Σ f(x_k)²` for `f` with coefficients `β`.
pub fn empirical_norm_squared(dec: &SpectralDecomposition, beta: &[f64]) -> f64 {
    dec.sigma.iter().zip(beta).map(|(s, b)| s * s * b * b).sum::<f64>() / dec.n as f64
}

/// Values `f(x_k)` at the training points: `U diag(σ) β`.
pub fn fitted_values(dec: &SpectralDecomposition, beta: &[f64]) -> Vec<f64> {
    let sb: Vec<f64> = dec.sigma.iter().zip(beta).map(|(s, b)| s * b).collect();
    dec.alpha(&sb)
}

pub fn empirical_effective_dimension(dec: &SpectralDecomposition, lambda: f64) -> f64 {
    dec.sigma.iter().map(|&s| s / (s + lambda)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::filters::FilterFamily;
    use crate::kernels::{feature_matrix, gram_matrix};
    use crate::synthetic::SpectralModel;

    #[test]
    fn identity_gram() {
        let dec = decompose(&Matrix::identity(2), &[1.0, 2.0], 1.0).unwrap();
        assert_eq!(dec.sigma(), &[0.5, 0.5]);
    }

    #[test]
    fn rank_one_two_by_two() {
        let g = Matrix::from_row_major(2, 2, vec![1.0, 1.0, 1.0, 1.0]);
        let dec = decompose(&g, &[1.0, 1.0], 1.0).unwrap();
        assert!((dec.sigma()[0] - 1.0).abs() < 1e-15);
        assert_eq!(dec.sigma()[1], 0.0);
        assert!((dec.y_hat()[0].abs() - libm::sqrt(2.0)).abs() < 1e-14);
        assert!(dec.y_hat()[1].abs() < 1e-14);
        let path = fit_path(&dec, &FilterFamily::tikhonov(1.0), &[0.5]).unwrap();
        let b = &path.beta[0];
        assert!((b[0].abs() - libm::sqrt(2.0) / 1.5).abs() < 1e-14);
        // (G/n + λ)^{-1} y evaluated densely: α = y/1.5
        let alpha = dec.alpha(b);
        for a in alpha {
            assert!((a - 1.0 / 1.5).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_fit_examples() {
        let g = Matrix::from_row_major(1, 1, vec![1.0]);
        let dec = decompose(&g, &[2.0], 1.0).unwrap();
        let path = fit_path(&dec, &FilterFamily::tikhonov(1.0), &[1.0]).unwrap();
        assert_eq!(path.beta[0], [1.0]);
        let cut = decompose(&Matrix::from_row_major(1, 1, vec![0.4]), &[1.0], 1.0).unwrap();
        let path = fit_path(&cut, &FilterFamily::spectral_cutoff(1.0, 1.0).unwrap(), &[0.5]).unwrap();
        assert_eq!(path.beta[0], [0.0]);
        assert!(fit_path(&cut, &FilterFamily::tikhonov(1.0), &[]).is_err());
        assert!(matches!(path.beta_at(0.3), Err(Error::Lookup(_))));
    }

    #[test]
    fn effective_dimension_example() {
        let dec = decompose(&Matrix::from_diagonal(&[2.0, 1.0]), &[0.0, 0.0], 1.0).unwrap();
        assert!((dec.effective_dimension(0.5) - 7.0 / 6.0).abs() < 1e-15);
        let zero = decompose(&Matrix::zeros(3, 3), &[1.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(zero.effective_dimension(0.1), 0.0);
    }

    #[test]
    fn feature_route_agrees_with_dense_route() {
        for &(d, n) in &[(12usize, 20usize), (30, 10)] {
            check_routes(d, n);
        }
    }

    fn check_routes(d: usize, n: usize) {
        let model = SpectralModel::power_law(0.5, d).unwrap();
        let kappa2 = model.kappa2();
        let pts: Vec<f64> = (0..n).map(|i| libm::fmod(0.618 * i as f64 + 0.1, 1.0)).collect();
        let y: Vec<f64> = pts.iter().map(|x| libm::sin(3.0 * x)).collect();
        let kernel = KernelSpec::mercer(model.clone());
        let g = gram_matrix(&kernel, &pts).unwrap();
        let dense = decompose(&g, &y, kappa2).unwrap();
        let w = feature_matrix(&model, &pts).unwrap();
        let feat = SpectralDecomposition::from_features(w.clone(), &y, kappa2).unwrap();
        let rank = d.min(n);
        assert_eq!(feat.sigma().len(), rank);
        for (a, b) in feat.sigma().iter().zip(dense.sigma()) {
            assert!((a - b).abs() < 1e-12);
        }
        let filter = FilterFamily::tikhonov(kappa2);
        let grid = [1.0, 0.1, 0.01];
        let pd = fit_path(&dense, &filter, &grid).unwrap();
        let pf = fit_path(&feat, &filter, &grid).unwrap();
        for k in 0..3 {
            // α differs on the null space of G; the fitted function does not.
            let ad = fitted_values(&dense, &pd.beta[k]);
            let af = fitted_values(&feat, &pf.beta[k]);
            for (a, b) in ad.iter().zip(&af) {
                assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()));
            }
            let nd = rkhs_norm_squared(&dense, &pd.beta[k]);
            let nf = rkhs_norm_squared(&feat, &pf.beta[k]);
            assert!((nd - nf).abs() < 1e-10 * (1.0 + nd));
            // θ = (1/n) Wᵀ α from the dense route.
            let alpha = dense.alpha(&pd.beta[k]);
            let want: Vec<f64> = w.tr_mul_vec(&alpha).iter().map(|t| t / n as f64).collect();
            let theta = feat.onb_coefficients(&pf.beta[k]).unwrap();
            for (a, b) in theta.iter().zip(&want) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }
        let u = feat.eigenvectors();
        for k in 0..rank {
            let uk = u.column(k);
            let gu = g.mul_vec(&uk);
            for i in 0..n {
                assert!((gu[i] / n as f64 - feat.sigma()[k] * uk[i]).abs() < 1e-10);
            }
        }
    }
}

//! Kernels on `[0,1]`, Gram matrices, feature matrices and the sup bound `κ²`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::synthetic::SpectralModel;

/// Absolute slack on the smallest Gram eigenvalue, relative to `κ²`.
pub const PSD_TOLERANCE: f64 = 1e-8;
/// Points of the uniform search grid behind the Mercer sup bound.
pub const SUP_GRID_POINTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `exp(−(x−y)²/(2w²))`.
    Gaussian { width: f64 },
    /// Truncated Mercer expansion of a spectral model.
    Mercer(Arc<SpectralModel>),
}

impl KernelSpec {
    pub fn gaussian(width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::Parameter(format!("Gaussian width must be positive, got {width}")));
        }
        Ok(Self::Gaussian { width })
    }

    pub fn mercer(model: SpectralModel) -> Self {
        Self::Mercer(Arc::new(model))
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            KernelSpec::Gaussian { width } => {
                let d = (x - y) / width;
                libm::exp(-0.5 * d * d)
            }
            KernelSpec::Mercer(model) => model.kernel(x, y),
        }
    }

    pub fn model(&self) -> Option<&SpectralModel> {
        match self {
            KernelSpec::Mercer(m) => Some(m),
            KernelSpec::Gaussian { .. } => None,
        }
    }

    fn check_domain(&self, points: &[f64]) -> Result<()> {
        if let KernelSpec::Mercer(_) = self {
            if let Some(bad) = points.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::InputDomain(format!(
                    "Mercer kernel is defined on [0,1], got x={bad}"
                )));
            }
        } else if let Some(bad) = points.iter().find(|x| !x.is_finite()) {
            return Err(Error::InputDomain(format!("non-finite design point {bad}")));
        }
        Ok(())
    }
}

/// `G_ij = K(x_i, x_j)`, exactly symmetric.
pub fn gram_matrix(kernel: &KernelSpec, points: &[f64]) -> Result<Matrix> {
    if points.is_empty() {
        return Err(Error::Parameter("Gram matrix needs at least one point".into()));
    }
    kernel.check_domain(points)?;
    let n = points.len();
    let g = match kernel {
        KernelSpec::Mercer(model) => {
            let w = feature_matrix(model, points)?;
            let mut g = w.matmul(&w.transpose());
            g.symmetrize();
            g
        }
        KernelSpec::Gaussian { .. } => {
            let mut g = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v = kernel.eval(points[i], points[j]);
                    g[(i, j)] = v;
                    g[(j, i)] = v;
                }
            }
            g
        }
    };
    if !g.is_finite() {
        return Err(Error::InputDomain("kernel produced a non-finite value".into()));
    }
    Ok(g)
}

/// `W_ik = √μ_k e_k(x_i)`, so that `G = W Wᵀ`.
pub fn feature_matrix(model: &SpectralModel, points: &[f64]) -> Result<Matrix> {
    if let Some(bad) = points.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InputDomain(format!(
            "Mercer features are defined on [0,1], got x={bad}"
        )));
    }
    let d = model.dimension();
    let mut w = Matrix::zeros(points.len(), d);
    for (i, &x) in points.iter().enumerate() {
        model.feature_values(x, w.row_mut(i));
    }
    Ok(w)
}

/// `κ² = sup_x K(x, x)`.
pub fn kernel_sup_bound(kernel: &KernelSpec) -> f64 {
    match kernel {
        KernelSpec::Gaussian { .. } => 1.0,
        KernelSpec::Mercer(model) => model.kappa2(),
    }
}

/// `sup_{x∈[0,1]} Σ μ_k e_k(x)²` by a uniform grid search followed by
/// golden-section refinement around the best grid point.
pub fn mercer_sup_bound(model: &SpectralModel) -> f64 {
    let mut e = vec![0.0; model.dimension()];
    let mut diag = |x: f64| -> f64 {
        model.basis_values(x, &mut e);
        e.iter().zip(model.eigenvalues()).map(|(v, m)| m * v * v).sum()
    };
    let last = SUP_GRID_POINTS - 1;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..SUP_GRID_POINTS {
        let v = diag(i as f64 / last as f64);
        if v > best.1 {
            best = (i, v);
        }
    }
    let h = 1.0 / last as f64;
    let center = best.0 as f64 * h;
    let (mut a, mut b) = ((center - h).max(0.0), (center + h).min(1.0));
    let ratio = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (diag(c), diag(d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = diag(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = diag(d);
        }
    }
    best.1.max(fc).max(fd).max(diag(0.0)).max(diag(1.0))
}

/// Per-point diagonal `K(x_i, x_i)`.
pub fn kernel_diagonal(kernel: &KernelSpec, points: &[f64]) -> Vec<f64> {
    points.iter().map(|&x| kernel.eval(x, x)).collect()
}

//! Exact Gaussian-process regression with a squared-exponential kernel and a
//! zero prior mean.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::kernel::{cross_cov, gram_matrix, Dataset, KernelParams};
use crate::linalg::{chol_logdet, jittered_cholesky};

/// Gaussian predictive distribution at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPosterior {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianPosterior {
    pub fn std_dev(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// A fitted GP. Immutable once built.
#[derive(Debug, Clone)]
pub struct GPModel {
    params: KernelParams,
    xs: Vec<Vec<f64>>,
    targets: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// Factorizes `K + σ_n²I + jitter·I` and solves it against `targets`.
pub fn gp_fit(data: &Dataset, params: &KernelParams, targets: &[f64]) -> Result<GPModel> {
    params.validate()?;
    if targets.len() != data.len() {
        return Err(Error::invalid(format!(
            "{} targets for {} observations",
            targets.len(),
            data.len()
        )));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("regression targets must be finite"));
    }
    let xs = data.xs();
    let mut k = gram_matrix(params, &xs);
    for i in 0..k.nrows() {
        k[(i, i)] += params.noise_variance;
    }
    let (chol, jitter) = jittered_cholesky(&k, params.signal_variance)?;
    let targets = DVector::from_column_slice(targets);
    let alpha = chol.solve(&targets);
    Ok(GPModel {
        params: *params,
        xs,
        targets,
        chol,
        alpha,
        jitter,
    })
}

impl GPModel {
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Jitter that was needed for the factorization to succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Lower-triangular Cholesky factor.
    pub fn chol_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// The matrix that was factorized: `K + σ_n²I + jitter·I`.
    pub fn noisy_gram(&self) -> DMatrix<f64> {
        let mut k = gram_matrix(&self.params, &self.xs);
        for i in 0..k.nrows() {
            k[(i, i)] += self.params.noise_variance + self.jitter;
        }
        k
    }

    pub fn predict(&self, x_star: &[f64]) -> Result<GaussianPosterior> {
        if let Some(x0) = self.xs.first() {
            if x0.len() != x_star.len() {
                return Err(Error::invalid(format!(
                    "prediction point has dimension {}, model has {}",
                    x_star.len(),
                    x0.len()
                )));
            }
        }
        Ok(self.predict_unchecked(x_star))
    }

    pub(crate) fn predict_unchecked(&self, x_star: &[f64]) -> GaussianPosterior {
        let prior = self.params.signal_variance;
        if self.xs.is_empty() {
            return GaussianPosterior {
                mean: 0.0,
                variance: prior,
            };
        }
        let k_star = cross_cov(&self.params, &self.xs, x_star);
        let mean = k_star.dot(&self.alpha);
        let mut v = k_star;
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        let variance = (prior - v.norm_squared()).max(0.0);
        GaussianPosterior { mean, variance }
    }

    /// Log evidence of the stored targets.
    pub fn log_marginal(&self) -> f64 {
        let n = self.targets.len() as f64;
        -0.5 * self.targets.dot(&self.alpha)
            - 0.5 * chol_logdet(&self.chol)
            - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// `gp_predict` as a free function.
pub fn gp_predict(model: &GPModel, x_star: &[f64]) -> Result<GaussianPosterior> {
    model.predict(x_star)
}

/// `−½yᵀK_y⁻¹y − ½log|K_y| − (n/2)log 2π`, with `K_y` the factorized matrix.
pub fn gaussian_log_marginal(model: &GPModel, targets: &[f64]) -> Result<f64> {
    if targets.len() != model.len() {
        return Err(Error::invalid("target count does not match the model"));
    }
    let y = DVector::from_column_slice(targets);
    let alpha = model.chol.solve(&y);
    let n = y.len() as f64;
    Ok(-0.5 * y.dot(&alpha)
        - 0.5 * chol_logdet(&model.chol)
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

use nalgebra::DVector;

use super::TileFeatures;
use crate::{Error, Matrix, Result};

/// Regularised sample covariance with its cached inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    /// Σ with `ridge` already added to the diagonal.
    pub sigma: Matrix,
    pub sigma_inv: Matrix,
    pub ridge: f64,
}

/// 1e-6 times the mean feature variance (1e-6 when every variance is zero).
pub fn default_ridge(features: &Matrix) -> f64 {
    let cov = sample_covariance(features);
    let mean_diag = cov.diagonal().mean();
    if mean_diag > 0.0 {
        1e-6 * mean_diag
    } else {
        1e-6
    }
}

fn sample_covariance(x: &Matrix) -> Matrix {
    let n = x.nrows();
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let denom = (n.max(2) - 1) as f64;
    (centered.transpose() * &centered) / denom
}

/// Unbiased covariance of the rows plus `ridge`·I. Fails when the result is
/// not positive definite.
pub fn covariance_matrix(features: &TileFeatures, ridge: f64) -> Result<CovarianceModel> {
    let x = &features.vectors;
    if x.nrows() < 2 {
        return Err(Error::invalid("covariance needs at least two feature vectors"));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::invalid("ridge must be finite and non-negative"));
    }
    let mut sigma = sample_covariance(x);
    // exact symmetry
    let sigma_t = sigma.transpose();
    sigma = (&sigma + sigma_t) * 0.5;
    for i in 0..sigma.nrows() {
        sigma[(i, i)] += ridge;
    }
    let chol = sigma.clone().cholesky().ok_or_else(|| {
        Error::Numeric(format!("covariance is singular with ridge {ridge}; increase the ridge"))
    })?;
    let sigma_inv = chol.inverse();
    Ok(CovarianceModel {
        sigma,
        sigma_inv,
        ridge,
    })
}

/// `sqrt((a − b)ᵀ Σ⁻¹ (a − b))`.
pub fn mahalanobis_distance(a: &[f64], b: &[f64], cov: &CovarianceModel) -> Result<f64> {
    let dim = cov.sigma_inv.nrows();
    if a.len() != dim || b.len() != dim {
        return Err(Error::dim(format!(
            "vectors of length {} and {} against a {dim}-dimensional covariance",
            a.len(),
            b.len()
        )));
    }
    let d = DVector::from_iterator(dim, a.iter().zip(b).map(|(x, y)| x - y));
    let q = d.dot(&(&cov.sigma_inv * &d));
    Ok(q.max(0.0).sqrt())
}

use nalgebra::{DVector, SymmetricEigen};

use crate::{Error, Matrix, Result};

/// A fitted principal-component projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// D × k, orthonormal columns ordered by descending variance.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl Pca {
    /// Fits via eigendecomposition of the sample covariance.
    ///
    /// Each component's largest-magnitude loading is made positive (earliest
    /// index wins ties) so results do not depend on the eigen-solver's sign.
    pub fn fit(x: &Matrix, n_components: usize) -> Result<Pca> {
        let (n, d) = x.shape();
        if n_components < 1 || n_components > n.min(d) {
            return Err(Error::invalid(format!(
                "n_components {n_components} outside [1, {}]",
                n.min(d)
            )));
        }
        let mean = x.row_mean().transpose();
        let centered = center(x, &mean);
        let denom = (n.max(2) - 1) as f64;
        let mut cov = (centered.transpose() * &centered) / denom;
        let cov_t = cov.transpose();
        cov = (&cov + cov_t) * 0.5;
        let total: f64 = cov.trace().max(0.0);

        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });

        let mut components = Matrix::zeros(d, n_components);
        let mut explained_variance = Vec::with_capacity(n_components);
        for (k, &idx) in order.iter().take(n_components).enumerate() {
            let mut v = eig.eigenvectors.column(idx).into_owned();
            let mut pivot = 0;
            for r in 1..d {
                if v[r].abs() > v[pivot].abs() {
                    pivot = r;
                }
            }
            if v[pivot] < 0.0 {
                v.neg_mut();
            }
            components.set_column(k, &v);
            explained_variance.push(eig.eigenvalues[idx].max(0.0));
        }
        let explained_variance_ratio = explained_variance
            .iter()
            .map(|&v| if total > 0.0 { v / total } else { 0.0 })
            .collect();
        Ok(Pca {
            mean,
            components,
            explained_variance,
            explained_variance_ratio,
        })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.mean.len() {
            return Err(Error::dim(format!(
                "PCA fitted on {} columns, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        Ok(center(x, &self.mean) * &self.components)
    }

    pub fn inverse_transform(&self, scores: &Matrix) -> Matrix {
        let mut back = scores * self.components.transpose();
        for mut row in back.row_iter_mut() {
            row += self.mean.transpose();
        }
        back
    }
}

fn center(x: &Matrix, mean: &DVector<f64>) -> Matrix {
    let mut c = x.clone();
    let mt = mean.transpose();
    for mut row in c.row_iter_mut() {
        row -= &mt;
    }
    c
}

/// Fits and projects in one step.
pub fn pca_fit_transform(x: &Matrix, n_components: usize) -> Result<(Matrix, Pca)> {
    let model = Pca::fit(x, n_components)?;
    let scores = model.transform(x)?;
    Ok((scores, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned_scores_are_centered_x() {
        let x = Matrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 5.0, 0.0]);
        let (s, m) = pca_fit_transform(&x, 1).unwrap();
        let mean = 2.0;
        for i in 0..4 {
            assert!((s[(i, 0)] - (x[(i, 0)] - mean)).abs() < 1e-12);
        }
        assert_eq!(m.components[(0, 0)], 1.0);
    }

    #[test]
    fn rejects_bad_component_counts() {
        let x = Matrix::zeros(3, 2);
        assert!(Pca::fit(&x, 0).is_err());
        assert!(Pca::fit(&x, 3).is_err());
    }

    #[test]
    fn sign_convention_is_positive_max_loading() {
        let x = Matrix::from_row_slice(5, 3, &[
            1.0, -2.0, 0.5, 2.0, -4.1, 0.7, 3.0, -6.2, 1.1, -1.0, 2.1, 0.0, 0.0, 0.3, -0.4,
        ]);
        let m = Pca::fit(&x, 3).unwrap();
        for k in 0..3 {
            let col = m.components.column(k);
            let max = col.iter().fold(0.0f64, |a, &v| if v.abs() > a.abs() { v } else { a });
            assert!(max > 0.0);
        }
    }

    #[test]
    fn inverse_transform_full_rank() {
        let x = Matrix::from_row_slice(4, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 3.0, 0.0, -2.0]);
        let (s, m) = pca_fit_transform(&x, 2).unwrap();
        let back = m.inverse_transform(&s);
        assert!((back - x).amax() < 1e-12);
    }
}

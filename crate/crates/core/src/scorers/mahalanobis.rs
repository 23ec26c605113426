use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Regularised matrices whose reciprocal condition number falls below this
/// are treated as singular.
const MIN_RCOND: f64 = 1e-12;

/// Class-conditional Gaussians with one shared covariance.
///
/// Scores are the squared Mahalanobis distance to the closest class mean.
#[derive(Debug, Clone)]
pub struct MahalanobisModel {
    class_means: DMatrix<f64>,
    precision: DMatrix<f64>,
    shrinkage: f64,
    condition_number: f64,
    // Upper Cholesky factor of the precision (P = U^T U): d^T P d = |U d|^2.
    whitener: DMatrix<f64>,
    whitened_means: Vec<DVector<f64>>,
}

impl MahalanobisModel {
    /// Fits class means and the shrunk shared covariance.
    ///
    /// `features` is n x m (one row per sample); `labels[i] < num_classes`
    /// and every class needs at least two samples. The covariance uses 1/n
    /// normalisation and is regularised with `shrinkage * trace / m` on the
    /// diagonal (plain `shrinkage` when the trace is zero).
    pub fn fit(
        features: &DMatrix<f64>,
        labels: &[usize],
        num_classes: usize,
        shrinkage: f64,
    ) -> Result<Self> {
        let (n, m) = features.shape();
        if labels.len() != n {
            return Err(Error::DimMismatch(format!(
                "{n} feature rows but {} labels",
                labels.len()
            )));
        }
        if !(shrinkage.is_finite() && shrinkage >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "shrinkage must be finite and non-negative, got {shrinkage}"
            )));
        }
        let mut counts = vec![0usize; num_classes];
        let mut sums = DMatrix::<f64>::zeros(num_classes, m);
        for (i, &y) in labels.iter().enumerate() {
            if y >= num_classes {
                return Err(Error::InvalidLabel(format!(
                    "label {y} outside 0..{num_classes}"
                )));
            }
            counts[y] += 1;
            let mut row = sums.row_mut(y);
            row += features.row(i);
        }
        if let Some((c, &k)) = counts.iter().enumerate().find(|(_, &k)| k < 2) {
            return Err(Error::InvalidLabel(format!(
                "class {c} has {k} training samples; at least 2 are required"
            )));
        }
        let mut class_means = sums;
        for (c, &k) in counts.iter().enumerate() {
            let mut row = class_means.row_mut(c);
            row /= k as f64;
        }

        let mut centered = features.clone();
        for (i, &y) in labels.iter().enumerate() {
            let mut row = centered.row_mut(i);
            row -= class_means.row(y);
        }
        let mut cov = centered.transpose() * &centered;
        cov /= n as f64;

        let trace = cov.trace();
        let ridge = if trace > 0.0 {
            shrinkage * trace / m as f64
        } else {
            shrinkage
        };
        for j in 0..m {
            cov[(j, j)] += ridge;
        }
        let cov = symmetrize(cov);

        let eig = SymmetricEigen::new(cov.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(max > 0.0) || min <= max * MIN_RCOND {
            return Err(Error::Singular(format!(
                "regularised covariance has eigenvalues in [{min:e}, {max:e}] \
                 (n={n}, m={m}, shrinkage={shrinkage}); raise the shrinkage"
            )));
        }
        let chol = Cholesky::new(cov).ok_or_else(|| {
            Error::Singular(format!(
                "covariance is not positive definite (shrinkage={shrinkage}); raise the shrinkage"
            ))
        })?;
        let precision = symmetrize(chol.inverse());

        Self::from_parts(class_means, precision, shrinkage, max / min)
    }

    /// Rebuilds a model from stored means and precision.
    pub fn from_parts(
        class_means: DMatrix<f64>,
        precision: DMatrix<f64>,
        shrinkage: f64,
        condition_number: f64,
    ) -> Result<Self> {
        let m = class_means.ncols();
        if precision.shape() != (m, m) {
            return Err(Error::DimMismatch(format!(
                "precision is {:?} but means have {m} columns",
                precision.shape()
            )));
        }
        let chol = Cholesky::new(precision.clone()).ok_or_else(|| {
            Error::Singular("stored precision matrix is not positive definite".into())
        })?;
        let whitener = chol.l().transpose();
        let whitened_means = class_means
            .row_iter()
            .map(|mu| &whitener * DVector::from_iterator(m, mu.iter().copied()))
            .collect();
        Ok(Self {
            class_means,
            precision,
            shrinkage,
            condition_number,
            whitener,
            whitened_means,
        })
    }

    pub fn class_means(&self) -> &DMatrix<f64> {
        &self.class_means
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    /// Condition number of the regularised covariance.
    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    pub fn feature_dim(&self) -> usize {
        self.class_means.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_means.nrows()
    }

    /// `min_c (x - mu_c)^T P (x - mu_c)`, never negative.
    pub fn score(&self, x: &[f64]) -> f64 {
        let wx = &self.whitener * DVector::from_column_slice(x);
        self.whitened_means
            .iter()
            .map(|wm| (&wx - wm).norm_squared())
            .fold(f64::INFINITY, f64::min)
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::logit::logsumexp;
use crate::error::{Error, Result};
use crate::pack::ClassifierHead;

/// Relative gap below which the eigenvalues on either side of the
/// principal/residual cut count as tied.
const TIE_TOL: f64 = 1e-10;

/// Default principal-subspace dimension: `min(m / 4, 256)`, at least 1.
pub fn default_subspace_dim(feature_dim: usize) -> usize {
    (feature_dim / 4).min(256).max(1)
}

/// Virtual-logit matching model.
///
/// The score of a sample is `alpha * |R^T (x - u)| - logsumexp(logits)`:
/// the norm of the feature residual outside the principal subspace, scaled
/// to the magnitude of the logits, minus the logit energy.
#[derive(Debug, Clone)]
pub struct VimModel {
    origin: DVector<f64>,
    residual_basis: DMatrix<f64>,
    alpha: f64,
    subspace_dim: usize,
    /// Eigenvalues of the feature covariance, ascending.
    eigenvalues: Vec<f64>,
    warnings: Vec<String>,
}

impl VimModel {
    /// Fits the origin `u = -W^+ b`, the residual basis (eigenvectors of the
    /// `m - D` smallest eigenvalues of `(1/n) sum (x - u)(x - u)^T`) and
    /// `alpha = sum_i max_c logit_ic / sum_i |R^T (x_i - u)|`.
    pub fn fit(
        features: &DMatrix<f64>,
        logits: &DMatrix<f64>,
        head: &ClassifierHead,
        subspace_dim: usize,
    ) -> Result<Self> {
        let (n, m) = features.shape();
        if logits.nrows() != n {
            return Err(Error::DimMismatch(format!(
                "{n} feature rows but {} logit rows",
                logits.nrows()
            )));
        }
        if head.feature_dim() != m || head.num_classes() != logits.ncols() {
            return Err(Error::DimMismatch(format!(
                "head is {}x{} but features have m={m} and logits C={}",
                head.num_classes(),
                head.feature_dim(),
                logits.ncols()
            )));
        }
        if subspace_dim == 0 || subspace_dim >= m {
            return Err(Error::InvalidParameter(format!(
                "subspace dimension must satisfy 1 <= D < m = {m}, got {subspace_dim}"
            )));
        }
        let mut warnings = Vec::new();
        if n <= m {
            warnings.push(format!(
                "only {n} training samples for {m} feature dimensions; covariance is rank-deficient"
            ));
        }

        let origin = origin_from_head(head);

        let mut centered = features.clone();
        for mut row in centered.row_iter_mut() {
            for (v, u) in row.iter_mut().zip(origin.iter()) {
                *v -= u;
            }
        }
        let mut cov = centered.transpose() * &centered;
        cov /= n as f64;
        let cov = (&cov + cov.transpose()) * 0.5;

        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .total_cmp(&eig.eigenvalues[b])
                .then(a.cmp(&b))
        });
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let residual_dim = m - subspace_dim;
        let below = eigenvalues[residual_dim - 1];
        let above = eigenvalues[residual_dim];
        let scale = below.abs().max(above.abs());
        if (above - below).abs() <= TIE_TOL * scale {
            warnings.push(format!(
                "eigenvalue tie at the subspace cut (D={subspace_dim}): {below:e} vs {above:e}; \
                 the residual subspace is not uniquely defined"
            ));
        }
        let residual_basis = DMatrix::from_fn(m, residual_dim, |r, c| {
            eig.eigenvectors[(r, order[c])]
        });

        let residual_norms = (&centered * &residual_basis)
            .row_iter()
            .map(|r| r.norm())
            .collect::<Vec<_>>();
        let residual_sum: f64 = residual_norms.iter().sum();
        let offset_sum: f64 = centered.row_iter().map(|r| r.norm()).sum();
        if !(residual_sum > TIE_TOL * offset_sum) {
            return Err(Error::RankDeficient(format!(
                "training residuals outside the {subspace_dim}-dimensional principal subspace \
                 sum to {residual_sum:e}: D too large / features rank-deficient"
            )));
        }
        let max_logit_sum: f64 = logits
            .row_iter()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .sum();
        let alpha = max_logit_sum / residual_sum;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::NonPositiveAlpha(alpha));
        }

        Ok(Self {
            origin,
            residual_basis,
            alpha,
            subspace_dim,
            eigenvalues,
            warnings,
        })
    }

    pub fn from_parts(
        origin: DVector<f64>,
        residual_basis: DMatrix<f64>,
        alpha: f64,
        subspace_dim: usize,
    ) -> Result<Self> {
        let m = origin.len();
        if residual_basis.nrows() != m || residual_basis.ncols() + subspace_dim != m {
            return Err(Error::DimMismatch(format!(
                "residual basis is {:?}, expected {m}x{}",
                residual_basis.shape(),
                m.saturating_sub(subspace_dim)
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::NonPositiveAlpha(alpha));
        }
        Ok(Self {
            origin,
            residual_basis,
            alpha,
            subspace_dim,
            eigenvalues: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn origin(&self) -> &DVector<f64> {
        &self.origin
    }

    pub fn residual_basis(&self) -> &DMatrix<f64> {
        &self.residual_basis
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn subspace_dim(&self) -> usize {
        self.subspace_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.origin.len()
    }

    /// Eigenvalues of the fitted covariance in ascending order (empty when
    /// the model was loaded from an archive).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `|R^T (x - u)|`.
    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x) - &self.origin;
        (self.residual_basis.transpose() * d).norm()
    }

    pub fn virtual_logit(&self, x: &[f64]) -> f64 {
        self.alpha * self.residual_norm(x)
    }

    pub fn score(&self, x: &[f64], logits: &[f64]) -> f64 {
        self.virtual_logit(x) - logsumexp(logits)
    }
}

/// `u = -W^+ b` with the Moore-Penrose pseudo-inverse of the head weights.
pub fn origin_from_head(head: &ClassifierHead) -> DVector<f64> {
    let (c, m) = (head.num_classes(), head.feature_dim());
    let w = DMatrix::from_row_iterator(
        c,
        m,
        head.weights.as_slice().iter().map(|&v| f64::from(v)),
    );
    let b = DVector::from_iterator(c, head.bias.iter().map(|&v| f64::from(v)));
    let svd = w.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = sigma_max * c.max(m) as f64 * f64::EPSILON;
    let pinv = svd
        .pseudo_inverse(tol)
        .expect("both singular vector sets were computed");
    -(pinv * b)
}

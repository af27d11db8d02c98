//! Multivariate Gaussian model of estimation residuals. A residual is an
//! anomaly when its density falls below the threshold ρ.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::check_dim;
use crate::error::{Error, Result};

pub const COV_EPS: f64 = 1e-6;
pub const DEFAULT_QUANTILE: f64 = 0.001;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianResidualModel {
    pub mean: Vec<f64>,
    /// Row-major `k × k`, regularized.
    pub covariance: Vec<f64>,
    pub threshold: f64,
    #[serde(skip)]
    cache: Option<Factor>,
}

impl PartialEq for GaussianResidualModel {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.covariance == other.covariance && self.threshold == other.threshold
    }
}

#[derive(Debug, Clone)]
struct Factor {
    /// Lower Cholesky factor of the covariance.
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl Factor {
    fn new(mean_len: usize, cov: &[f64]) -> Result<Self> {
        let k = mean_len;
        let m = DMatrix::from_row_slice(k, k, cov);
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("residual covariance is not positive definite".into()))?
            .l();
        let log_det: f64 = 2.0 * chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (k as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self { chol, log_norm })
    }
}

impl GaussianResidualModel {
    /// Model with a given mean and covariance and no threshold yet.
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let k = mean.len();
        check_dim(k * k, covariance.len())?;
        let cache = Some(Factor::new(k, &covariance)?);
        Ok(Self { mean, covariance, threshold: 0.0, cache })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn factor(&self) -> Result<std::borrow::Cow<'_, Factor>> {
        match &self.cache {
            Some(f) => Ok(std::borrow::Cow::Borrowed(f)),
            None => Ok(std::borrow::Cow::Owned(Factor::new(self.dim(), &self.covariance)?)),
        }
    }

    /// Restores the factorization after deserialization.
    pub fn prepare(&mut self) -> Result<()> {
        self.cache = Some(Factor::new(self.dim(), &self.covariance)?);
        Ok(())
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let f = self.factor()?;
        let d = DVector::from_iterator(self.dim(), x.iter().zip(&self.mean).map(|(a, m)| a - m));
        let z = f
            .chol
            .solve_lower_triangular(&d)
            .ok_or_else(|| Error::InvalidParameter("singular covariance factor".into()))?;
        Ok(f.log_norm - 0.5 * z.norm_squared())
    }

    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_pdf(x)?.exp())
    }

    /// `true` for an anomaly: density strictly below the threshold.
    pub fn classify(&self, x: &[f64]) -> Result<bool> {
        Ok(self.pdf(x)? < self.threshold)
    }
}

fn moments(errors: ArrayView2<'_, f64>) -> (Vec<f64>, Vec<f64>) {
    let (n, k) = errors.dim();
    let mean: Vec<f64> = (0..k).map(|j| errors.column(j).sum() / n as f64).collect();
    let mut cov = vec![0.0; k * k];
    for r in errors.rows() {
        for a in 0..k {
            for b in 0..k {
                cov[a * k + b] += (r[a] - mean[a]) * (r[b] - mean[b]);
            }
        }
    }
    for (i, c) in cov.iter_mut().enumerate() {
        *c /= (n - 1) as f64;
        if i / k == i % k {
            *c += COV_EPS;
        }
    }
    (mean, cov)
}

/// Fits μ and Σ on `errors`, then sets ρ to the `quantile` of densities on `holdout`.
pub fn residual_fit(errors: ArrayView2<'_, f64>, holdout: ArrayView2<'_, f64>, quantile: f64) -> Result<GaussianResidualModel> {
    let (n, k) = errors.dim();
    if n < k + 1 || n < 2 {
        return Err(Error::TooFewSamples { need: (k + 1).max(2), got: n });
    }
    if !(0.0..1.0).contains(&quantile) {
        return Err(Error::InvalidParameter(format!("quantile {quantile} outside [0, 1)")));
    }
    check_dim(k, holdout.ncols())?;
    if holdout.nrows() == 0 {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let (mean, cov) = moments(errors);
    let mut model = GaussianResidualModel::new(mean, cov)?;
    let mut dens = holdout
        .rows()
        .into_iter()
        .map(|r| model.pdf(&r.to_vec()))
        .collect::<Result<Vec<f64>>>()?;
    dens.sort_by(f64::total_cmp);
    let idx = ((quantile * dens.len() as f64).floor() as usize).min(dens.len() - 1);
    model.threshold = dens[idx];
    Ok(model)
}

pub fn residual_classify(model: &GaussianResidualModel, x: &[f64]) -> Result<bool> {
    model.classify(x)
}

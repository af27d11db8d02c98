//! Principal component analysis and the inverse-PCA reconstruction error.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_dim, check_finite};
use crate::error::{Error, Result};

pub const DEFAULT_COMPONENTS: usize = 5;
/// Eigenvalues below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `n_components × n_features`, orthonormal rows.
    pub components: Array2<f64>,
    pub n_components: usize,
    pub explained_variance: Vec<f64>,
    /// Sum of all eigenvalues of the sample covariance.
    pub total_variance: f64,
}

pub fn pca_fit(x: ArrayView2<'_, f64>, n_components: usize) -> Result<PcaModel> {
    let (n, d) = x.dim();
    if n_components == 0 {
        return Err(Error::InvalidParameter("n_components must be positive".into()));
    }
    if n < 2 || n < n_components {
        return Err(Error::TooFewSamples { need: n_components.max(2), got: n });
    }
    check_finite(x)?;
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).sum() / n as f64).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in x.rows() {
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > RANK_TOL * top && top > 0.0).count();
    let mut k = n_components.min(d);
    if k > rank {
        warn!("covariance has rank {rank}; reducing PCA from {n_components} to {} components", rank.max(1));
        k = rank.max(1);
    } else if n_components > d {
        warn!("only {d} features; reducing PCA from {n_components} components");
    }
    let mut components = Array2::zeros((k, d));
    for (c, &i) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(i);
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = (0..d).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[[c, j]] = sign * v[j];
        }
    }
    Ok(PcaModel {
        mean,
        components,
        n_components: k,
        explained_variance: order.iter().take(k).map(|&i| eig.eigenvalues[i].max(0.0)).collect(),
        total_variance: eig.eigenvalues.iter().sum(),
    })
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_features(), x.len())?;
        Ok(self
            .components
            .rows()
            .into_iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((w, v), m)| w * (v - m)).sum())
            .collect())
    }

    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_components, z.len())?;
        let mut out = self.mean.clone();
        for (c, zc) in self.components.rows().into_iter().zip(z) {
            for (o, w) in out.iter_mut().zip(c) {
                *o += zc * w;
            }
        }
        Ok(out)
    }

    pub fn project_matrix(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_dim(self.n_features(), x.ncols())?;
        let mut out = Array2::zeros((x.nrows(), self.n_components));
        for (i, r) in x.rows().into_iter().enumerate() {
            let z = self.project(&r.to_vec())?;
            out.row_mut(i).assign(&ndarray::Array1::from(z));
        }
        Ok(out)
    }

    /// Mean squared reconstruction error over channels.
    pub fn reconstruction_error(&self, x: &[f64]) -> Result<f64> {
        let back = self.reconstruct(&self.project(x)?)?;
        Ok(x.iter().zip(&back).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64)
    }

    pub fn error_matrix(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_dim(self.n_features(), x.ncols())?;
        x.rows().into_iter().map(|r| self.reconstruction_error(&r.to_vec())).collect()
    }
}

pub fn pca_project(model: &PcaModel, x: &[f64]) -> Result<Vec<f64>> {
    model.project(x)
}

pub fn ipca_score(model: &PcaModel, x: &[f64]) -> Result<f64> {
    model.reconstruction_error(x)
}

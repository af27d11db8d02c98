//! One-class SVM in the ν formulation, solved by SMO on the dual
//!
//! min ½ αᵀKα  s.t.  0 ≤ αᵢ ≤ 1/(νn),  Σαᵢ = 1
//!
//! with an RBF kernel. decision(x) = Σ αᵢ k(xᵢ, x) − ρ.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_dim, check_finite, sq_dist};
use crate::error::{Error, Result};

pub const DEFAULT_NU: f64 = 0.001;
pub const KKT_TOL: f64 = 1e-6;
pub const MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmModel {
    pub support_vectors: Array2<f64>,
    pub dual_coeffs: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub nu: f64,
    /// Number of training rows the dual was solved over.
    pub n_train: usize,
}

/// `1/n_f`, the default kernel width.
pub fn default_gamma(n_features: usize) -> f64 {
    1.0 / n_features.max(1) as f64
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    (-gamma * sq_dist(a, b)).exp()
}

pub fn ocsvm_fit(x: ArrayView2<'_, f64>, nu: f64, gamma: f64) -> Result<OcsvmModel> {
    ocsvm_fit_with(x, nu, gamma, KKT_TOL, MAX_ITER)
}

pub fn ocsvm_fit_with(x: ArrayView2<'_, f64>, nu: f64, gamma: f64, tol: f64, max_iter: usize) -> Result<OcsvmModel> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidParameter(format!("nu must lie in (0, 1], got {nu}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    check_finite(x)?;
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();

    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        kernel[i * n + i] = 1.0;
        for j in 0..i {
            let k = rbf(gamma, &rows[i], &rows[j]);
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }

    let c = 1.0 / (nu * n as f64);
    // Feasible start: fill the first coefficients to the box bound.
    let mut alpha = vec![0.0; n];
    let mut left = 1.0;
    for a in alpha.iter_mut() {
        if left <= 0.0 {
            break;
        }
        *a = c.min(left);
        left -= *a;
    }
    let mut grad = vec![0.0; n];
    for (j, &a) in alpha.iter().enumerate().filter(|(_, a)| **a > 0.0) {
        for i in 0..n {
            grad[i] += a * kernel[i * n + j];
        }
    }

    let mut converged = false;
    for _ in 0..max_iter {
        // i: may grow, smallest gradient. j: may shrink, largest gradient.
        let mut i_up = usize::MAX;
        let mut g_up = f64::INFINITY;
        let mut j_low = usize::MAX;
        let mut g_low = f64::NEG_INFINITY;
        for t in 0..n {
            if alpha[t] < c && grad[t] < g_up {
                g_up = grad[t];
                i_up = t;
            }
            if alpha[t] > 0.0 && grad[t] > g_low {
                g_low = grad[t];
                j_low = t;
            }
        }
        if i_up == usize::MAX || j_low == usize::MAX || g_low - g_up < tol {
            converged = true;
            break;
        }
        let (i, j) = (i_up, j_low);
        let eta = (kernel[i * n + i] + kernel[j * n + j] - 2.0 * kernel[i * n + j]).max(1e-12);
        let delta = ((g_low - g_up) / eta).min(c - alpha[i]).min(alpha[j]);
        alpha[i] += delta;
        alpha[j] -= delta;
        // Snap to the bounds so the active sets stay exact.
        if c - alpha[i] < 1e-15 * c {
            alpha[i] = c;
        }
        if alpha[j] < 1e-15 * c {
            alpha[j] = 0.0;
        }
        for t in 0..n {
            grad[t] += delta * (kernel[t * n + i] - kernel[t * n + j]);
        }
    }
    if !converged {
        return Err(Error::NonConvergence(max_iter));
    }

    let free: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0 && alpha[t] < c).collect();
    let rho = if free.is_empty() {
        let ub = (0..n).filter(|&t| alpha[t] == 0.0).map(|t| grad[t]).fold(f64::INFINITY, f64::min);
        let lb = (0..n).filter(|&t| alpha[t] >= c).map(|t| grad[t]).fold(f64::NEG_INFINITY, f64::max);
        match (ub.is_finite(), lb.is_finite()) {
            (true, true) => 0.5 * (ub + lb),
            (true, false) => ub,
            (false, true) => lb,
            (false, false) => 0.0,
        }
    } else {
        free.iter().map(|&t| grad[t]).sum::<f64>() / free.len() as f64
    };

    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let mut support_vectors = Array2::zeros((sv.len(), x.ncols()));
    for (r, &t) in sv.iter().enumerate() {
        support_vectors.row_mut(r).assign(&x.row(t));
    }
    Ok(OcsvmModel {
        support_vectors,
        dual_coeffs: sv.iter().map(|&t| alpha[t]).collect(),
        rho,
        gamma,
        nu,
        n_train: n,
    })
}

impl OcsvmModel {
    pub fn n_features(&self) -> usize {
        self.support_vectors.ncols()
    }

    /// Upper box bound `1/(νn)` of the dual.
    pub fn box_bound(&self) -> f64 {
        1.0 / (self.nu * self.n_train as f64)
    }

    /// Signed decision value: non-negative inside the envelope.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n_features(), x.len())?;
        let s: f64 = self
            .support_vectors
            .rows()
            .into_iter()
            .zip(&self.dual_coeffs)
            .map(|(sv, a)| a * rbf(self.gamma, sv.as_slice().expect("standard layout"), x))
            .sum();
        Ok(s - self.rho)
    }

    pub fn score_matrix(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_dim(self.n_features(), x.ncols())?;
        x.rows().into_iter().map(|r| self.decision(&r.to_vec())).collect()
    }
}

pub fn ocsvm_score(model: &OcsvmModel, x: &[f64]) -> Result<f64> {
    model.decision(x)
}

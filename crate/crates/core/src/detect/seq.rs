//! Sequence detectors: a one-step-ahead MLP state estimator and a denoising
//! autoencoder over sliding windows.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::nn::{train, Activation, Network, TrainConfig};
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: [usize; 3] = [64, 32, 16];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpEstimator {
    pub network: Network,
    pub window_len: usize,
    pub n_channels: usize,
    pub train_mse: f64,
    pub config: TrainConfig,
    pub seed: u64,
}

/// Flattened windows `[t-L, t)` and their targets `t`, for every `t` in `L..n`.
pub fn window_dataset(data: ArrayView2<'_, f64>, window_len: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    let (n, c) = data.dim();
    if window_len == 0 {
        return Err(Error::InvalidParameter("window_len must be at least 1".into()));
    }
    if n <= window_len {
        return Err(Error::FrameTooShort { len: n, window_len: window_len + 1 });
    }
    let m = n - window_len;
    let mut x = Array2::zeros((m, window_len * c));
    for t in window_len..n {
        let flat = data.slice(s![t - window_len..t, ..]);
        x.row_mut(t - window_len).assign(&ndarray::Array1::from_iter(flat.iter().copied()));
    }
    Ok((x, data.slice(s![window_len.., ..]).to_owned()))
}

/// Flattened windows ending at and including each `t` in `L-1..n`.
pub fn trailing_windows(data: ArrayView2<'_, f64>, window_len: usize) -> Result<Array2<f64>> {
    let (n, c) = data.dim();
    if window_len == 0 {
        return Err(Error::InvalidParameter("window_len must be at least 1".into()));
    }
    if n < window_len {
        return Err(Error::FrameTooShort { len: n, window_len });
    }
    let mut x = Array2::zeros((n + 1 - window_len, window_len * c));
    for t in window_len - 1..n {
        let flat = data.slice(s![t + 1 - window_len..=t, ..]);
        x.row_mut(t + 1 - window_len).assign(&ndarray::Array1::from_iter(flat.iter().copied()));
    }
    Ok(x)
}

pub fn mlp_fit(
    windows: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    window_len: usize,
    hidden: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<MlpEstimator> {
    let n_channels = targets.ncols();
    if windows.ncols() != window_len * n_channels {
        return Err(Error::DimensionMismatch { expected: window_len * n_channels, got: windows.ncols() });
    }
    let sizes: Vec<usize> = std::iter::once(windows.ncols())
        .chain(hidden.iter().copied())
        .chain(std::iter::once(n_channels))
        .collect();
    let (network, train_mse) = train(&sizes, Activation::Relu, windows, targets, cfg, seed)?;
    Ok(MlpEstimator { network, window_len, n_channels, train_mse, config: *cfg, seed })
}

impl MlpEstimator {
    pub fn predict(&self, windows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.network.forward(windows)
    }

    /// Target minus prediction for every row of a flattened-window matrix.
    pub fn residuals(&self, windows: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if windows.nrows() != targets.nrows() {
            return Err(Error::LengthMismatch(windows.nrows(), targets.nrows()));
        }
        Ok(&targets - &self.predict(windows)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DaeConfig {
    /// Encoder widths between the input and the code; mirrored in the decoder.
    pub hidden: Vec<usize>,
    pub code: usize,
    pub noise_std: f64,
    pub activation: Activation,
}

impl Default for DaeConfig {
    fn default() -> Self {
        Self { hidden: vec![32], code: 8, noise_std: 0.1, activation: Activation::Relu }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaeModel {
    pub network: Network,
    pub code_width: usize,
    pub noise_std: f64,
    pub train_mse: f64,
    pub seed: u64,
}

pub fn dae_layer_sizes(input: usize, cfg: &DaeConfig) -> Result<Vec<usize>> {
    if cfg.code == 0 || cfg.code >= input {
        return Err(Error::InvalidParameter(format!(
            "code width {} must be positive and below the input width {input}",
            cfg.code
        )));
    }
    Ok(std::iter::once(input)
        .chain(cfg.hidden.iter().copied())
        .chain(std::iter::once(cfg.code))
        .chain(cfg.hidden.iter().rev().copied())
        .chain(std::iter::once(input))
        .collect())
}

/// Trains on `x + N(0, noise_std)` against the clean `x`.
pub fn dae_fit(x: ArrayView2<'_, f64>, cfg: &DaeConfig, train_cfg: &TrainConfig, seed: u64) -> Result<DaeModel> {
    let sizes = dae_layer_sizes(x.ncols(), cfg)?;
    let tc = TrainConfig { input_noise: cfg.noise_std, ..*train_cfg };
    let (network, train_mse) = train(&sizes, cfg.activation, x, x, &tc, seed)?;
    Ok(DaeModel { network, code_width: cfg.code, noise_std: cfg.noise_std, train_mse, seed })
}

impl DaeModel {
    pub fn reconstruct(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.network.forward(x)
    }

    /// Mean squared reconstruction error per row.
    pub fn score(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let back = self.reconstruct(x)?;
        Ok(x.rows()
            .into_iter()
            .zip(back.rows())
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / a.len() as f64)
            .collect())
    }
}

pub fn dae_score(model: &DaeModel, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    model.score(x)
}

//! The seven anomaly detectors and the pieces they share.

pub mod forest;
pub mod hull;
pub mod iforest;
pub mod nn;
pub mod ocsvm;
pub mod pca;
pub mod residual;
pub mod seq;

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Nn,
    Dae,
    Ocsvm,
    Iforest,
    CorruptRf,
    PcaCh,
    Ipca,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 7] = [
        DetectorKind::Nn,
        DetectorKind::Dae,
        DetectorKind::Ocsvm,
        DetectorKind::Iforest,
        DetectorKind::CorruptRf,
        DetectorKind::PcaCh,
        DetectorKind::Ipca,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Nn => "nn",
            DetectorKind::Dae => "dae",
            DetectorKind::Ocsvm => "ocsvm",
            DetectorKind::Iforest => "iforest",
            DetectorKind::CorruptRf => "corrupt-rf",
            DetectorKind::PcaCh => "pca-ch",
            DetectorKind::Ipca => "ipca",
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            DetectorKind::Nn | DetectorKind::Dae | DetectorKind::Ocsvm | DetectorKind::Iforest => {
                Orientation::LowIsAnomalous
            }
            DetectorKind::CorruptRf | DetectorKind::PcaCh | DetectorKind::Ipca => Orientation::HighIsAnomalous,
        }
    }

    /// Whether the detector yields a graded score worth an ROC curve.
    pub fn has_roc(self) -> bool {
        !matches!(self, DetectorKind::Nn | DetectorKind::Dae)
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown detector `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    LowIsAnomalous,
    HighIsAnomalous,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn check_finite(x: ArrayView2<'_, f64>) -> Result<()> {
    if let Some((i, _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteValue { row: i.0 + 1, channel: format!("column {}", i.1) });
    }
    Ok(())
}

//! Score normalization, thresholds, and fusion of the three model scores.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::detect::{DetectorKind, Orientation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSlot {
    /// PV channels.
    M1,
    /// Meter channels.
    M2,
    /// Node phasor.
    M3,
}

impl ModelSlot {
    pub const ALL: [ModelSlot; 3] = [ModelSlot::M1, ModelSlot::M2, ModelSlot::M3];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub values: Vec<f64>,
    pub orientation: Orientation,
    pub source: (ModelSlot, DetectorKind),
    pub phase: Phase,
}

impl ScoreSeries {
    pub fn new(values: Vec<f64>, source: (ModelSlot, DetectorKind), phase: Phase) -> Self {
        Self { values, orientation: source.1.orientation(), source, phase }
    }

    /// Flips a high-is-anomalous series into low-is-anomalous form.
    pub fn to_low_is_anomalous(mut self) -> Self {
        if self.orientation == Orientation::HighIsAnomalous {
            self.values.iter_mut().for_each(|v| *v = -*v);
            self.orientation = Orientation::LowIsAnomalous;
        }
        self
    }
}

/// Divisor used by [`normalize_scores`]: the training maximum, its magnitude
/// when negative, or 1 when it is zero.
pub fn normalizer(train: &[f64]) -> f64 {
    let max = train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || max == 0.0 {
        warn!("maximum training score is zero; scores are left unnormalized");
        1.0
    } else {
        max.abs()
    }
}

/// Divides both series by the training maximum.
pub fn normalize_scores(train: &[f64], eval: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = normalizer(train);
    (train.iter().map(|v| v / d).collect(), eval.iter().map(|v| v / d).collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n − 1).
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn threshold_median_sigma(train: &[f64]) -> Result<f64> {
    if train.len() < 2 {
        return Err(Error::TooFewSamples { need: 2, got: train.len() });
    }
    Ok(median(train) - 3.0 * std_dev(train))
}

pub fn threshold_mean_sigma(train: &[f64]) -> Result<f64> {
    if train.len() < 2 {
        return Err(Error::TooFewSamples { need: 2, got: train.len() });
    }
    Ok(mean(train) + 3.0 * std_dev(train))
}

/// Order statistic at index `floor(q·n)` of the sorted training scores.
pub fn threshold_quantile(train: &[f64], q: f64) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let mut s = train.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s[((q * s.len() as f64).floor() as usize).min(s.len() - 1)])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdKind {
    MedianMinus3Sigma,
    MeanPlus3Sigma,
    FixedProbability { p: f64 },
    PdfQuantile { q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub kind: ThresholdKind,
    pub threshold: f64,
    pub orientation: Orientation,
}

impl ThresholdRule {
    /// Fits the rule on training scores. `slack` widens the normal region.
    pub fn fit(kind: ThresholdKind, series: &ScoreSeries, slack: f64) -> Result<Self> {
        assert_eq!(series.phase, Phase::Train, "thresholds are fitted on training scores only");
        let v = &series.values;
        let raw = match kind {
            ThresholdKind::MedianMinus3Sigma => threshold_median_sigma(v)?,
            ThresholdKind::MeanPlus3Sigma => threshold_mean_sigma(v)?,
            ThresholdKind::FixedProbability { p } => p,
            ThresholdKind::PdfQuantile { q } => threshold_quantile(v, q)?,
        };
        let threshold = match series.orientation {
            Orientation::LowIsAnomalous => raw - slack,
            Orientation::HighIsAnomalous => raw + slack,
        };
        Ok(Self { kind, threshold, orientation: series.orientation })
    }

    pub fn is_anomalous(&self, v: f64) -> bool {
        match self.orientation {
            Orientation::LowIsAnomalous => v < self.threshold,
            Orientation::HighIsAnomalous => v > self.threshold,
        }
    }
}

/// Threshold rule used for each detector kind.
pub fn threshold_kind(kind: DetectorKind, pdf_quantile: f64) -> ThresholdKind {
    match kind {
        DetectorKind::Ocsvm | DetectorKind::Iforest => ThresholdKind::MedianMinus3Sigma,
        DetectorKind::CorruptRf => ThresholdKind::FixedProbability { p: 0.5 },
        DetectorKind::PcaCh | DetectorKind::Ipca => ThresholdKind::MeanPlus3Sigma,
        DetectorKind::Nn | DetectorKind::Dae => ThresholdKind::PdfQuantile { q: pdf_quantile },
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum FusionMode {
    Linear { weights: [f64; 3] },
    #[default]
    MostAnomalous,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionMode::Linear { .. } => f.write_str("linear"),
            FusionMode::MostAnomalous => f.write_str("most-anomalous"),
        }
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(FusionMode::Linear { weights: [1.0 / 3.0; 3] }),
            "most-anomalous" => Ok(FusionMode::MostAnomalous),
            _ => Err(Error::Config(format!("unknown fusion `{s}`"))),
        }
    }
}

fn check_lengths(series: [&[f64]; 3]) -> Result<usize> {
    let n = series[0].len();
    for s in &series[1..] {
        if s.len() != n {
            return Err(Error::LengthMismatch(n, s.len()));
        }
    }
    Ok(n)
}

/// Element-wise `w₁m₁ + w₂m₂ + w₃m₃`.
pub fn fuse_linear(series: [&[f64]; 3], weights: [f64; 3]) -> Result<Vec<f64>> {
    let n = check_lengths(series)?;
    if weights.iter().all(|&w| w == 0.0) {
        warn!("all fusion weights are zero; the fused series is identically zero");
    }
    Ok((0..n)
        .map(|t| weights[0] * series[0][t] + weights[1] * series[1][t] + weights[2] * series[2][t])
        .collect())
}

/// Element-wise min for low-is-anomalous scores, max otherwise.
pub fn fuse_most_anomalous(series: [&[f64]; 3], orientation: Orientation) -> Result<Vec<f64>> {
    let n = check_lengths(series)?;
    let pick = match orientation {
        Orientation::LowIsAnomalous => f64::min,
        Orientation::HighIsAnomalous => f64::max,
    };
    Ok((0..n).map(|t| pick(pick(series[0][t], series[1][t]), series[2][t])).collect())
}

/// Fuses three like-oriented series; high-is-anomalous inputs are negated
/// first when orientations differ.
pub fn fuse(series: [&ScoreSeries; 3], mode: FusionMode) -> Result<ScoreSeries> {
    let phase = series[0].phase;
    let mixed = series.iter().any(|s| s.orientation != series[0].orientation);
    let aligned: Vec<ScoreSeries> = series
        .iter()
        .map(|s| if mixed { (*s).clone().to_low_is_anomalous() } else { (*s).clone() })
        .collect();
    let orientation = aligned[0].orientation;
    let views = [aligned[0].values.as_slice(), aligned[1].values.as_slice(), aligned[2].values.as_slice()];
    let values = match mode {
        FusionMode::Linear { weights } => fuse_linear(views, weights)?,
        FusionMode::MostAnomalous => {
            if mixed {
                return Err(Error::MixedOrientation);
            }
            fuse_most_anomalous(views, orientation)?
        }
    };
    Ok(ScoreSeries { values, orientation, source: series[0].source, phase })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(v: Vec<f64>, kind: DetectorKind, phase: Phase) -> ScoreSeries {
        ScoreSeries::new(v, (ModelSlot::M1, kind), phase)
    }

    #[test]
    fn normalization_examples() {
        let (n, e) = normalize_scores(&[2.0, 4.0, 8.0], &[16.0]);
        assert_eq!(n, vec![0.25, 0.5, 1.0]);
        assert_eq!(e, vec![2.0]);
        assert_eq!(normalize_scores(&[3.0, 3.0], &[]).0, vec![1.0, 1.0]);
        assert_eq!(normalize_scores(&[0.0, 0.0], &[5.0]).1, vec![5.0]);
        // A negative maximum keeps the ordering.
        let (n, _) = normalize_scores(&[-4.0, -2.0], &[]);
        assert!(n[0] < n[1]);
    }

    #[test]
    fn median_sigma_examples() {
        let t = threshold_median_sigma(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(t, 5.0);
        let v = [0.8, 0.9, 1.0, 0.9, 10.0];
        assert_eq!(median(&v), 0.9);
        let t = threshold_median_sigma(&v).unwrap();
        assert!((t - (0.9 - 3.0 * std_dev(&v))).abs() < 1e-15);
        assert!(threshold_median_sigma(&[1.0]).is_err());
    }

    #[test]
    fn rule_orientation() {
        let low = ThresholdRule::fit(
            ThresholdKind::MedianMinus3Sigma,
            &series(vec![1.0, 1.0, 1.0], DetectorKind::Ocsvm, Phase::Train),
            0.0,
        )
        .unwrap();
        assert!(low.is_anomalous(0.99) && !low.is_anomalous(1.0));
        let high = ThresholdRule::fit(
            ThresholdKind::FixedProbability { p: 0.5 },
            &series(vec![0.0], DetectorKind::CorruptRf, Phase::Train),
            0.0,
        )
        .unwrap();
        assert!(high.is_anomalous(0.51) && !high.is_anomalous(0.5));
    }

    #[test]
    #[should_panic(expected = "training scores only")]
    fn thresholds_refuse_eval_scores() {
        let s = series(vec![1.0, 2.0], DetectorKind::Ocsvm, Phase::Eval);
        let _ = ThresholdRule::fit(ThresholdKind::MedianMinus3Sigma, &s, 0.0);
    }

    #[test]
    fn linear_examples() {
        let a = [0.9, 0.1];
        let b = [0.6, 0.2];
        let c = [0.3, 0.3];
        assert_eq!(fuse_linear([&a, &b, &c], [1.0, 0.0, 0.0]).unwrap(), a.to_vec());
        let f = fuse_linear([&a, &b, &c], [1.0 / 3.0; 3]).unwrap();
        assert!((f[0] - 0.6).abs() < 1e-15);
        assert_eq!(fuse_linear([&a, &b, &c], [0.0; 3]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(fuse_linear([&a, &b, &c[..1]], [1.0; 3]), Err(Error::LengthMismatch(2, 1))));
    }

    #[test]
    fn most_anomalous_examples() {
        let v = ([0.2], [0.9], [0.8]);
        assert_eq!(fuse_most_anomalous([&v.0, &v.1, &v.2], Orientation::LowIsAnomalous).unwrap(), vec![0.2]);
        assert_eq!(fuse_most_anomalous([&v.0, &v.1, &v.2], Orientation::HighIsAnomalous).unwrap(), vec![0.9]);
    }

    #[test]
    fn mixed_orientation() {
        let a = series(vec![1.0], DetectorKind::Ocsvm, Phase::Eval);
        let b = series(vec![2.0], DetectorKind::Ipca, Phase::Eval);
        assert!(matches!(fuse([&a, &b, &a], FusionMode::MostAnomalous), Err(Error::MixedOrientation)));
        let f = fuse([&a, &b, &a], FusionMode::Linear { weights: [0.0, 1.0, 0.0] }).unwrap();
        assert_eq!(f.values, vec![-2.0]);
    }

    proptest! {
        #[test]
        fn most_anomalous_is_permutation_invariant(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0) {
            for o in [Orientation::LowIsAnomalous, Orientation::HighIsAnomalous] {
                let x = fuse_most_anomalous([&[a], &[b], &[c]], o).unwrap();
                let y = fuse_most_anomalous([&[c], &[a], &[b]], o).unwrap();
                prop_assert_eq!(x, y);
            }
        }

        #[test]
        fn decisions_invariant_under_scaling(
            train in proptest::collection::vec(0.01f64..10.0, 5..40),
            eval in proptest::collection::vec(-5.0f64..20.0, 1..20),
            c in 0.01f64..100.0,
        ) {
            let scaled_train: Vec<f64> = train.iter().map(|v| v * c).collect();
            let scaled_eval: Vec<f64> = eval.iter().map(|v| v * c).collect();
            for kind in [DetectorKind::Ocsvm, DetectorKind::Ipca] {
                let decide = |tr: &[f64], ev: &[f64]| {
                    let (n, e) = normalize_scores(tr, ev);
                    let rule = ThresholdRule::fit(threshold_kind(kind, 0.001), &series(n, kind, Phase::Train), 0.0).unwrap();
                    e.iter().map(|&v| rule.is_anomalous(v)).collect::<Vec<_>>()
                };
                prop_assert_eq!(decide(&train, &eval), decide(&scaled_train, &scaled_eval));
            }
        }
    }
}

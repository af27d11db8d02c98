//! Point-wise metrics, ROC-AUC, per-sample timing, and report files.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attack::{AttackKind, AttackLabels};
use crate::error::{Error, Result};
use crate::suite::Detections;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn from_decisions(decisions: &[bool], truth: &[bool]) -> Result<Self> {
        if decisions.len() != truth.len() {
            return Err(Error::LengthMismatch(decisions.len(), truth.len()));
        }
        let mut c = Self::default();
        for (&d, &t) in decisions.iter().zip(truth) {
            match (d, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Precision, recall, F1 and accuracy; zero when a denominator vanishes.
pub fn precision_recall_f1(c: &ConfusionCounts) -> Result<Metrics> {
    let total = c.total();
    if total == 0 {
        return Err(Error::AllZeroCounts);
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(Metrics { precision, recall, f1, accuracy: ratio(c.tp + c.tn, total) })
}

/// Area under the ROC curve via the Mann-Whitney statistic: the chance a
/// random positive outscores a random negative, ties counting one half.
/// Scores are high-is-anomalous.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 {
        return Err(Error::SingleClassLabels("positive"));
    }
    if n_neg == 0 {
        return Err(Error::SingleClassLabels("negative"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of mid-ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// ROC points `(fpr, tpr)` from the strictest threshold to the loosest.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::SingleClassLabels(if n_pos == 0.0 { "positive" } else { "negative" }));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push((fp / n_neg, tp / n_pos));
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportRow {
    Overall,
    Disconnect,
    ReversePowerFlow,
    Curtailment,
    Var,
}

impl ReportRow {
    pub const ALL: [ReportRow; 5] =
        [ReportRow::Overall, ReportRow::Disconnect, ReportRow::ReversePowerFlow, ReportRow::Curtailment, ReportRow::Var];

    pub fn kind(self) -> Option<AttackKind> {
        match self {
            ReportRow::Overall => None,
            ReportRow::Disconnect => Some(AttackKind::Disconnect),
            ReportRow::ReversePowerFlow => Some(AttackKind::ReversePowerFlow),
            ReportRow::Curtailment => Some(AttackKind::Curtailment),
            ReportRow::Var => Some(AttackKind::VoltVar),
        }
    }
}

impl fmt::Display for ReportRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportRow::Overall => "Overall",
            ReportRow::Disconnect => "Disconnect",
            ReportRow::ReversePowerFlow => "Reverse Power Flow",
            ReportRow::Curtailment => "Power Curtailment",
            ReportRow::Var => "VAR",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub row: ReportRow,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub roc_auc: Option<f64>,
}

/// Metrics for the pooled run and for each attack kind. A per-kind row
/// keeps that kind's attacked timesteps as positives and every unattacked
/// timestep as a negative.
pub fn evaluate_run(
    decisions: &[bool],
    graded: Option<&[f64]>,
    labels: &[Option<AttackKind>],
) -> Result<Vec<MetricsRow>> {
    if decisions.len() != labels.len() {
        return Err(Error::LengthMismatch(decisions.len(), labels.len()));
    }
    if let Some(g) = graded {
        if g.len() != labels.len() {
            return Err(Error::LengthMismatch(g.len(), labels.len()));
        }
    }
    if labels.iter().all(|l| l.is_none()) {
        return Err(Error::SingleClassLabels("attacked"));
    }
    if labels.iter().all(|l| l.is_some()) {
        return Err(Error::SingleClassLabels("normal"));
    }
    ReportRow::ALL
        .into_iter()
        .map(|row| {
            let keep: Vec<usize> = (0..labels.len())
                .filter(|&i| match (row.kind(), labels[i]) {
                    (None, _) | (_, None) => true,
                    (Some(k), Some(l)) => k == l,
                })
                .collect();
            let d: Vec<bool> = keep.iter().map(|&i| decisions[i]).collect();
            let t: Vec<bool> = keep.iter().map(|&i| labels[i].is_some()).collect();
            let counts = ConfusionCounts::from_decisions(&d, &t)?;
            let roc = match graded {
                Some(g) if counts.tp + counts.fn_ > 0 => {
                    let s: Vec<f64> = keep.iter().map(|&i| g[i]).collect();
                    Some(roc_auc(&s, &t)?)
                }
                _ => None,
            };
            Ok(MetricsRow { row, counts, metrics: precision_recall_f1(&counts)?, roc_auc: roc })
        })
        .collect()
}

/// Pools every monitored house of a detection run against its labels.
pub fn evaluate_detections(det: &Detections, labels: &AttackLabels, graded: bool) -> Result<Vec<MetricsRow>> {
    let (decisions, scores, truth) = pool(det, labels)?;
    evaluate_run(&decisions, graded.then_some(scores.as_slice()), &truth)
}

/// Concatenated decisions, high-is-anomalous fused scores and labels.
/// Decisions, high-is-anomalous scores and labels, pooled over houses.
pub type Pooled = (Vec<bool>, Vec<f64>, Vec<Option<AttackKind>>);

pub fn pool(det: &Detections, labels: &AttackLabels) -> Result<Pooled> {
    let end = det.start + det.len();
    if end > labels.steps() {
        return Err(Error::LengthMismatch(end, labels.steps()));
    }
    let mut decisions = Vec::new();
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    for (i, h) in det.houses.iter().enumerate() {
        if h.house_id >= labels.n_houses() {
            return Err(Error::LengthMismatch(h.house_id + 1, labels.n_houses()));
        }
        decisions.extend_from_slice(&h.decisions);
        scores.extend(det.graded(i));
        truth.extend_from_slice(&labels.house(h.house_id)[det.start..end]);
    }
    Ok((decisions, scores, truth))
}

/// `report.csv`: one row per attack class, six-decimal fixed point.
pub fn write_report<W: Write>(rows: &[MetricsRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["attack", "precision", "recall", "f1", "accuracy", "roc_auc"])?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.row.to_string(),
            format!("{:.6}", m.precision),
            format!("{:.6}", m.recall),
            format!("{:.6}", m.f1),
            format!("{:.6}", m.accuracy),
            r.roc_auc.map_or_else(|| "NA".to_string(), |a| format!("{a:.6}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_roc<W: Write>(points: &[(f64, f64)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["fpr", "tpr"])?;
    for (f, t) in points {
        w.write_record([format!("{f:.6}"), format!("{t:.6}")])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub detector: String,
    pub train_us_per_sample: f64,
    pub test_us_per_sample: f64,
}

/// Median wall-clock microseconds per sample of `fit` and `score` over `reps` runs.
pub fn time_detector<M>(
    name: &str,
    reps: usize,
    n_train: usize,
    n_test: usize,
    mut fit: impl FnMut() -> Result<M>,
    mut score: impl FnMut(&M) -> Result<()>,
) -> Result<TimingRow> {
    let reps = reps.max(3);
    let mut train = Vec::with_capacity(reps);
    let mut test = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        let model = fit()?;
        train.push(t0.elapsed().as_secs_f64() * 1e6 / n_train.max(1) as f64);
        let t1 = Instant::now();
        score(&model)?;
        test.push(t1.elapsed().as_secs_f64() * 1e6 / n_test.max(1) as f64);
    }
    Ok(TimingRow {
        detector: name.to_string(),
        train_us_per_sample: crate::fusion::median(&train).max(f64::MIN_POSITIVE),
        test_us_per_sample: crate::fusion::median(&test).max(f64::MIN_POSITIVE),
    })
}

pub fn write_timing<W: Write>(rows: &[TimingRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["detector", "train_us_per_sample", "test_us_per_sample"])?;
    for r in rows {
        w.write_record([r.detector.clone(), format!("{:.3}", r.train_us_per_sample), format!("{:.3}", r.test_us_per_sample)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Purpose};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    #[test]
    fn metric_examples() {
        let m = precision_recall_f1(&counts(5, 0, 0, 5)).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));
        let m = precision_recall_f1(&counts(2, 1, 3, 4)).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 0.4).abs() < 1e-15);
        assert!((m.f1 - 0.5).abs() < 1e-15);
        assert!((m.accuracy - 0.6).abs() < 1e-15);
        let m = precision_recall_f1(&counts(0, 0, 3, 4)).unwrap();
        assert_eq!((m.precision, m.f1), (0.0, 0.0));
        assert!(matches!(precision_recall_f1(&counts(0, 0, 0, 0)), Err(Error::AllZeroCounts)));
    }

    #[test]
    fn auc_examples() {
        let labels = [false, false, true, true];
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        // One flipped pair out of four positive-negative pairs.
        assert_eq!(roc_auc(&[0.1, 0.8, 0.2, 0.9], &labels).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.5; 4], &labels).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClassLabels("negative"))));
    }

    #[test]
    fn random_scores_near_half() {
        let mut rng = rng::stream(12, Purpose::Subsample, 0);
        let scores: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let mut labels: Vec<bool> = (0..10_000).map(|i| i % 2 == 0).collect();
        labels.shuffle(&mut rng);
        assert!((roc_auc(&scores, &labels).unwrap() - 0.5).abs() < 0.02);
    }

    #[test]
    fn per_kind_rows() {
        use AttackKind::*;
        let labels = vec![None, Some(Disconnect), Some(Curtailment), Some(VoltVar), Some(ReversePowerFlow), None];
        let decisions: Vec<bool> = labels.iter().map(|l| *l == Some(VoltVar)).collect();
        let rows = evaluate_run(&decisions, None, &labels).unwrap();
        let recall = |r: ReportRow| rows.iter().find(|x| x.row == r).unwrap().metrics.recall;
        assert_eq!(recall(ReportRow::Var), 1.0);
        assert_eq!(recall(ReportRow::Disconnect), 0.0);
        assert_eq!(recall(ReportRow::Curtailment), 0.0);
        assert_eq!(recall(ReportRow::Overall), 0.25);
        let zeros = vec![false; labels.len()];
        let rows = evaluate_run(&zeros, None, &labels).unwrap();
        assert_eq!(rows[0].metrics.recall, 0.0);
        assert!((rows[0].metrics.accuracy - 2.0 / 6.0).abs() < 1e-15);
        assert!(matches!(evaluate_run(&[false], None, &[None]), Err(Error::SingleClassLabels(_))));
    }

    #[test]
    fn report_shape() {
        let labels = vec![None, Some(AttackKind::Disconnect)];
        let rows = evaluate_run(&[false, true], Some(&[0.0, 1.0]), &labels).unwrap();
        let mut buf = Vec::new();
        write_report(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().nth(1).unwrap().starts_with("Overall,1.000000"));
    }

    fn trapezoid(scores: &[f64], labels: &[bool]) -> f64 {
        let pts = roc_curve(scores, labels).unwrap();
        pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
    }

    proptest! {
        #[test]
        fn rank_and_trapezoid_agree(
            data in proptest::collection::vec((0u8..6, any::<bool>()), 2..60)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let a = roc_auc(&scores, &labels).unwrap();
            prop_assert!((a - trapezoid(&scores, &labels)).abs() < 1e-12);
        }

        #[test]
        fn metrics_permutation_invariant(
            data in proptest::collection::vec((any::<bool>(), 0u8..5), 4..40), seed in 0u64..100
        ) {
            let decisions: Vec<bool> = data.iter().map(|d| d.0).collect();
            let labels: Vec<Option<AttackKind>> =
                data.iter().map(|d| if d.1 == 4 { None } else { Some(AttackKind::ALL[d.1 as usize]) }).collect();
            prop_assume!(labels.iter().any(|l| l.is_none()) && labels.iter().any(|l| l.is_some()));
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut rng::stream(seed, Purpose::Subsample, 0));
            let d2: Vec<bool> = idx.iter().map(|&i| decisions[i]).collect();
            let l2: Vec<Option<AttackKind>> = idx.iter().map(|&i| labels[i]).collect();
            let a = evaluate_run(&decisions, None, &labels).unwrap();
            let b = evaluate_run(&d2, None, &l2).unwrap();
            prop_assert_eq!(&a, &b);
            let per_kind: u64 = a[1..].iter().map(|r| r.counts.tp).sum();
            prop_assert_eq!(per_kind, a[0].counts.tp);
        }
    }
}

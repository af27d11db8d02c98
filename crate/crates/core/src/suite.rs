//! Per-house detection suite: m1 (PV) and m2 (meter) models for each
//! monitored house, one m3 (node phasor) model shared by all of them, and
//! the fused decision.

use std::io::Write;

use log::{info, warn};
use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::detect::forest::{corrupt_rf_fit, corrupt_rf_fit_about, CorruptRfModel, ForestParams};
use crate::detect::hull::{hull_fit, HullModel};
use crate::detect::iforest::{iforest_fit, IforestParams, IsolationForestModel};
use crate::detect::nn::TrainConfig;
use crate::detect::ocsvm::{default_gamma, ocsvm_fit, OcsvmModel, DEFAULT_NU};
use crate::detect::pca::{pca_fit, PcaModel};
use crate::detect::residual::{residual_fit, GaussianResidualModel, DEFAULT_QUANTILE};
use crate::detect::seq::{dae_fit, mlp_fit, trailing_windows, window_dataset, DaeConfig, DaeModel, MlpEstimator, DEFAULT_HIDDEN};
use crate::detect::{DetectorKind, Orientation};
use crate::error::{Error, Result};
use crate::feeder::SimOutput;
use crate::fusion::{fuse, normalizer, threshold_kind, FusionMode, ModelSlot, Phase, ScoreSeries, ThresholdRule};
use crate::rng::{self, Purpose};
use crate::timeseries::{ChannelGroup, GroupKind, Standardizer, TimeSeriesFrame, PV_ACTIVE_POWER};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub detector: DetectorKind,
    pub fusion: FusionMode,
    /// Flag a timestep when any single model crosses its own threshold,
    /// instead of thresholding the fused series.
    pub per_model_or: bool,
    /// Window length in samples for the sequence detectors.
    pub window_len: usize,
    pub pca_dims: usize,
    pub nu: f64,
    /// RBF width; `1/n_f` when absent.
    pub gamma: Option<f64>,
    /// Rows kept (seeded subsample) for the one-class SVM dual.
    pub ocsvm_max_rows: usize,
    pub iforest: IforestParams,
    pub forest: ForestParams,
    pub hidden: Vec<usize>,
    pub dae: DaeConfig,
    pub train: TrainConfig,
    pub pdf_quantile: f64,
    /// Trailing share of the training windows held out for the pdf threshold.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            detector: DetectorKind::PcaCh,
            fusion: FusionMode::MostAnomalous,
            per_model_or: false,
            window_len: 15,
            pca_dims: 5,
            nu: DEFAULT_NU,
            gamma: None,
            ocsvm_max_rows: 2000,
            iforest: IforestParams::default(),
            forest: ForestParams::default(),
            hidden: DEFAULT_HIDDEN.to_vec(),
            dae: DaeConfig::default(),
            train: TrainConfig::default(),
            pdf_quantile: DEFAULT_QUANTILE,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.window_len == 0 {
            return bad("window_len must be at least 1".into());
        }
        if self.pca_dims == 0 {
            return bad("pca_dims must be at least 1".into());
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return bad(format!("nu {} outside (0, 1]", self.nu));
        }
        if !(0.0..1.0).contains(&self.pdf_quantile) {
            return bad(format!("pdf_quantile {} outside [0, 1)", self.pdf_quantile));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad(format!("holdout_fraction {} outside (0, 1)", self.holdout_fraction));
        }
        if let FusionMode::Linear { weights } = self.fusion {
            if weights.iter().any(|w| !w.is_finite()) {
                return bad("fusion weights must be finite".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "detector", rename_all = "kebab-case")]
pub enum DetectorModel {
    Ocsvm(OcsvmModel),
    Iforest(IsolationForestModel),
    CorruptRf(CorruptRfModel),
    PcaCh { pca: PcaModel, hull: HullModel },
    Ipca(PcaModel),
    Nn { mlp: MlpEstimator, residual: GaussianResidualModel },
    Dae { dae: DaeModel, residual: GaussianResidualModel, window_len: usize },
}

impl DetectorModel {
    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorModel::Ocsvm(_) => DetectorKind::Ocsvm,
            DetectorModel::Iforest(_) => DetectorKind::Iforest,
            DetectorModel::CorruptRf(_) => DetectorKind::CorruptRf,
            DetectorModel::PcaCh { .. } => DetectorKind::PcaCh,
            DetectorModel::Ipca(_) => DetectorKind::Ipca,
            DetectorModel::Nn { .. } => DetectorKind::Nn,
            DetectorModel::Dae { .. } => DetectorKind::Dae,
        }
    }

    /// Rows of history a score needs before the first scored row.
    pub fn context_len(&self) -> usize {
        match self {
            DetectorModel::Nn { mlp, .. } => mlp.window_len,
            DetectorModel::Dae { window_len, .. } => window_len - 1,
            _ => 0,
        }
    }

    fn prepare(&mut self) -> Result<()> {
        match self {
            DetectorModel::Nn { residual, .. } | DetectorModel::Dae { residual, .. } => residual.prepare(),
            _ => Ok(()),
        }
    }
}

fn seeded_rows(n: usize, max_rows: usize, seed: u64) -> Option<Vec<usize>> {
    (n > max_rows).then(|| {
        let mut keep = index::sample(&mut rng::stream(seed, Purpose::Subsample, 2), n, max_rows).into_vec();
        keep.sort_unstable();
        keep
    })
}

fn pdf_series(model: &GaussianResidualModel, errors: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    errors.rows().into_iter().map(|r| model.pdf(&r.to_vec())).collect()
}

fn split_holdout(n: usize, fraction: f64) -> Result<usize> {
    let fit = ((1.0 - fraction) * n as f64).floor() as usize;
    if fit < 2 || fit >= n {
        return Err(Error::TooFewSamples { need: 3, got: n });
    }
    Ok(fit)
}

/// What [`fit_model`] may know about the data beyond the standardized rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitContext {
    /// Rows per calibration block (one day).
    pub fold_len: Option<usize>,
    /// Standardized image of the all-zero measurement; corruption shrinks toward it.
    pub origin: Option<Vec<f64>>,
}

/// Hull margins of each `fold_len` block against a hull of the other rows.
fn held_out_margins(projected: ArrayView2<'_, f64>, fold_len: usize) -> Result<Vec<f64>> {
    let n = projected.nrows();
    let mut margins = Vec::with_capacity(n);
    for start in (0..n).step_by(fold_len) {
        let end = (start + fold_len).min(n);
        let rest = concatenate![Axis(0), projected.slice(s![..start, ..]), projected.slice(s![end.., ..])];
        let hull = hull_fit(rest.view())?;
        margins.extend(hull.margin_matrix(projected.slice(s![start..end, ..]))?);
    }
    Ok(margins)
}

/// Fits one detector on standardized normal rows and returns it with its
/// training scores. Sequence detectors score every row with a full window
/// behind it.
///
/// Training points never fall outside their own hull, so PCA-CH scores each
/// block of `fold_len` rows (a day) against a hull of the remaining blocks
/// when at least two blocks exist.
pub fn fit_model(
    kind: DetectorKind,
    x: ArrayView2<'_, f64>,
    cfg: &SuiteConfig,
    seed: u64,
    fit: &FitContext,
) -> Result<(DetectorModel, Vec<f64>)> {
    let fold_len = fit.fold_len;
    let d = x.ncols();
    match kind {
        DetectorKind::Ocsvm => {
            let gamma = cfg.gamma.unwrap_or_else(|| default_gamma(d));
            let model = match seeded_rows(x.nrows(), cfg.ocsvm_max_rows, seed) {
                Some(rows) => ocsvm_fit(x.select(Axis(0), &rows).view(), cfg.nu, gamma)?,
                None => ocsvm_fit(x, cfg.nu, gamma)?,
            };
            let scores = model.score_matrix(x)?;
            Ok((DetectorModel::Ocsvm(model), scores))
        }
        DetectorKind::Iforest => {
            let model = iforest_fit(x, &cfg.iforest, seed)?;
            let scores = model.score_matrix(x)?;
            Ok((DetectorModel::Iforest(model), scores))
        }
        DetectorKind::CorruptRf => {
            let model = match &fit.origin {
                Some(origin) => corrupt_rf_fit_about(x, origin, &cfg.forest, seed)?,
                None => corrupt_rf_fit(x, &cfg.forest, seed)?,
            };
            let scores = model.score_matrix(x)?;
            Ok((DetectorModel::CorruptRf(model), scores))
        }
        DetectorKind::PcaCh => {
            let pca = pca_fit(x, cfg.pca_dims.min(d))?;
            let projected = pca.project_matrix(x)?;
            let hull = hull_fit(projected.view())?;
            let scores = match fold_len {
                Some(f) if f > 0 && projected.nrows() >= 2 * f => held_out_margins(projected.view(), f)?,
                _ => hull.margin_matrix(projected.view())?,
            };
            Ok((DetectorModel::PcaCh { pca, hull }, scores))
        }
        DetectorKind::Ipca => {
            // Keeping every dimension would reconstruct any input exactly.
            let k = cfg.pca_dims.min(d.saturating_sub(1)).max(1);
            let pca = pca_fit(x, k)?;
            let scores = pca.error_matrix(x)?;
            Ok((DetectorModel::Ipca(pca), scores))
        }
        DetectorKind::Nn => {
            let (windows, targets) = window_dataset(x, cfg.window_len)?;
            let fit = split_holdout(windows.nrows(), cfg.holdout_fraction)?;
            let mlp = mlp_fit(
                windows.slice(s![..fit, ..]),
                targets.slice(s![..fit, ..]),
                cfg.window_len,
                &cfg.hidden,
                &cfg.train,
                seed,
            )?;
            let res = mlp.residuals(windows.view(), targets.view())?;
            let residual = residual_fit(res.slice(s![..fit, ..]), res.slice(s![fit.., ..]), cfg.pdf_quantile)?;
            let scores = pdf_series(&residual, res.view())?;
            Ok((DetectorModel::Nn { mlp, residual }, scores))
        }
        DetectorKind::Dae => {
            let windows = trailing_windows(x, cfg.window_len)?;
            let fit = split_holdout(windows.nrows(), cfg.holdout_fraction)?;
            let dae = dae_fit(windows.slice(s![..fit, ..]), &cfg.dae, &cfg.train, seed)?;
            let err = Array2::from_shape_vec((windows.nrows(), 1), dae.score(windows.view())?)
                .map_err(|e| Error::InvalidFrame(e.to_string()))?;
            let residual = residual_fit(err.slice(s![..fit, ..]), err.slice(s![fit.., ..]), cfg.pdf_quantile)?;
            let scores = pdf_series(&residual, err.view())?;
            Ok((DetectorModel::Dae { dae, residual, window_len: cfg.window_len }, scores))
        }
    }
}

/// Scores every row of `x`. `context` holds the standardized rows just
/// before `x`; sequence detectors read their first windows from it.
pub fn score_model(model: &DetectorModel, context: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let with_context = |need: usize| -> Result<Array2<f64>> {
        if context.nrows() < need {
            return Err(Error::FrameTooShort { len: context.nrows(), window_len: need });
        }
        Ok(concatenate![Axis(0), context.slice(s![context.nrows() - need.., ..]), x])
    };
    match model {
        DetectorModel::Ocsvm(m) => m.score_matrix(x),
        DetectorModel::Iforest(m) => m.score_matrix(x),
        DetectorModel::CorruptRf(m) => m.score_matrix(x),
        DetectorModel::PcaCh { pca, hull } => hull.margin_matrix(pca.project_matrix(x)?.view()),
        DetectorModel::Ipca(pca) => pca.error_matrix(x),
        DetectorModel::Nn { mlp, residual } => {
            let data = with_context(mlp.window_len)?;
            let (windows, targets) = window_dataset(data.view(), mlp.window_len)?;
            pdf_series(residual, mlp.residuals(windows.view(), targets.view())?.view())
        }
        DetectorModel::Dae { dae, residual, window_len } => {
            let data = with_context(window_len - 1)?;
            let windows = trailing_windows(data.view(), *window_len)?;
            let err = Array2::from_shape_vec((windows.nrows(), 1), dae.score(windows.view())?)
                .map_err(|e| Error::InvalidFrame(e.to_string()))?;
            pdf_series(residual, err.view())
        }
    }
}

/// One fitted model on one channel group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotModel {
    pub slot: ModelSlot,
    pub channels: Vec<String>,
    pub standardizer: Standardizer,
    pub model: DetectorModel,
    /// Training maximum the raw scores are divided by.
    pub divisor: f64,
    pub rule: ThresholdRule,
    /// Last standardized training rows, the history for scoring a following day.
    pub context: Array2<f64>,
}

impl SlotModel {
    fn fit(slot: ModelSlot, group: &ChannelGroup, frame: &TimeSeriesFrame, cfg: &SuiteConfig, seed: u64) -> Result<(Self, Vec<f64>)> {

        let raw = frame.to_matrix(&group.channel_names)?;
        let standardizer = Standardizer::fit(raw.view())?;
        let x = standardizer.transform(raw.view())?;
        let fit = FitContext {
            fold_len: usize::try_from(86_400 / frame.step().max(1)).ok(),
            origin: Some((0..standardizer.dim()).map(|j| standardizer.transform_value(j, 0.0)).collect()),
        };
        let (model, scores) = fit_model(cfg.detector, x.view(), cfg, seed, &fit)?;
        // Attack probabilities keep their fixed 0.5 cut and are not rescaled.
        let divisor = if cfg.detector == DetectorKind::CorruptRf { 1.0 } else { normalizer(&scores) };
        let scaled: Vec<f64> = scores.iter().map(|v| v / divisor).collect();
        let series = ScoreSeries::new(scaled.clone(), (slot, cfg.detector), Phase::Train);
        let rule = ThresholdRule::fit(threshold_kind(cfg.detector, cfg.pdf_quantile), &series, slack(cfg))?;
        let keep = cfg.window_len.min(x.nrows());
        let context = x.slice(s![x.nrows() - keep.., ..]).to_owned();
        Ok((Self { slot, channels: group.channel_names.clone(), standardizer, model, divisor, rule, context }, scaled))
    }

    fn standardize(&self, frame: &TimeSeriesFrame, range: std::ops::Range<usize>) -> Result<Array2<f64>> {
        let raw = frame.to_matrix(&self.channels)?;
        self.standardizer.transform(raw.slice(s![range, ..]))
    }

    /// Normalized scores for `frame[start..]`; history comes from the frame
    /// when `start > 0`, otherwise from the stored training context.
    fn score(&self, frame: &TimeSeriesFrame, start: usize) -> Result<Vec<f64>> {
        let x = self.standardize(frame, start..frame.len())?;
        let need = self.model.context_len();
        let context = if start >= need && start > 0 {
            self.standardize(frame, start - need..start)?
        } else {
            self.context.clone()
        };
        Ok(score_model(&self.model, context.view(), x.view())?.into_iter().map(|v| v / self.divisor).collect())
    }
}

fn slack(cfg: &SuiteConfig) -> f64 {
    if cfg.detector == DetectorKind::Iforest {
        cfg.iforest.contamination
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseSuite {
    pub house_id: usize,
    pub m1: SlotModel,
    pub m2: SlotModel,
    pub fused_rule: ThresholdRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSuite {
    pub schema_version: u32,
    pub config: SuiteConfig,
    pub channel_schema: Vec<ChannelGroup>,
    pub m3: SlotModel,
    pub houses: Vec<HouseSuite>,
    pub train_len: usize,
    pub start_time: i64,
    pub step: i64,
}

fn fuse_values(kind: DetectorKind, mode: FusionMode, scores: [&[f64]; 3], phase: Phase) -> Result<ScoreSeries> {
    let series = ModelSlot::ALL.map(|slot| ScoreSeries::new(scores[slot.index()].to_vec(), (slot, kind), phase));
    fuse([&series[0], &series[1], &series[2]], mode)
}

/// Houses with PV output in the training rows; only these are monitored.
pub fn monitored_houses(sim: &SimOutput, train_len: usize) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, h) in sim.houses.iter().enumerate() {
        let p = h.frame.channel(PV_ACTIVE_POWER)?;
        if p[..train_len.min(p.len())].iter().any(|&v| v != 0.0) {
            out.push(i);
        }
    }
    Ok(out)
}

/// Trains the suite on the first `train_len` rows of a normal run.
pub fn train_suite(sim: &SimOutput, train_len: usize, cfg: &SuiteConfig) -> Result<TrainedSuite> {
    cfg.validate()?;
    let len = sim.node.len();
    if train_len < 2 || train_len > len {
        return Err(Error::Config(format!("training length {train_len} outside the {len}-row run")));
    }
    let node = sim.node.slice(0, train_len);
    info!("training {} on the node phasor", cfg.detector);
    let (m3, m3_train) = SlotModel::fit(ModelSlot::M3, &ChannelGroup::node(), &node, cfg, rng::derive(cfg.seed, 0))?;
    let monitored = monitored_houses(sim, train_len)?;
    if monitored.is_empty() {
        return Err(Error::Config("no house has PV output to monitor".into()));
    }
    let mut houses = Vec::with_capacity(monitored.len());
    for &i in &monitored {
        let house = &sim.houses[i];
        info!("training {} for house {}", cfg.detector, house.id);
        let frame = house.frame.slice(0, train_len);
        let base = 1 + 2 * house.id as u64;
        let (m1, s1) = SlotModel::fit(ModelSlot::M1, &ChannelGroup::pv(), &frame, cfg, rng::derive(cfg.seed, base))?;
        let (m2, s2) = SlotModel::fit(ModelSlot::M2, &ChannelGroup::load(), &frame, cfg, rng::derive(cfg.seed, base + 1))?;
        let fused = fuse_values(cfg.detector, cfg.fusion, [&s1, &s2, &m3_train], Phase::Train)?;
        let fused_rule = ThresholdRule::fit(threshold_kind(cfg.detector, cfg.pdf_quantile), &fused, slack(cfg))?;
        houses.push(HouseSuite { house_id: house.id, m1, m2, fused_rule });
    }
    Ok(TrainedSuite {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        channel_schema: vec![ChannelGroup::pv(), ChannelGroup::load(), ChannelGroup::node()],
        m3,
        houses,
        train_len,
        start_time: sim.node.start_time(),
        step: sim.node.step(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HouseDetections {
    pub house_id: usize,
    /// Normalized m1, m2, m3 scores.
    pub scores: [Vec<f64>; 3],
    pub fused: Vec<f64>,
    pub decisions: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detections {
    pub detector: DetectorKind,
    /// Row of the input run where scoring starts.
    pub start: usize,
    pub start_time: i64,
    pub step: i64,
    pub orientation: Orientation,
    pub houses: Vec<HouseDetections>,
}

impl Detections {
    pub fn len(&self) -> usize {
        self.houses.first().map_or(0, |h| h.decisions.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fused scores flipped so that larger means more anomalous.
    pub fn graded(&self, house: usize) -> Vec<f64> {
        let h = &self.houses[house];
        match self.orientation {
            Orientation::HighIsAnomalous => h.fused.clone(),
            Orientation::LowIsAnomalous => h.fused.iter().map(|v| -v).collect(),
        }
    }

    /// `timestamp,house_id,m1_score,m2_score,m3_score,fused_score,decision`,
    /// ordered by time then house.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "house_id", "m1_score", "m2_score", "m3_score", "fused_score", "decision"])?;
        for t in 0..self.len() {
            let ts = (self.start_time + self.step * t as i64).to_string();
            for h in &self.houses {
                w.write_record([
                    ts.clone(),
                    h.house_id.to_string(),
                    h.scores[0][t].to_string(),
                    h.scores[1][t].to_string(),
                    h.scores[2][t].to_string(),
                    h.fused[t].to_string(),
                    u8::from(h.decisions[t]).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl TrainedSuite {
    /// Rebuilds caches dropped by serialization.
    pub fn prepare(&mut self) -> Result<()> {
        self.m3.model.prepare()?;
        for h in &mut self.houses {
            h.m1.model.prepare()?;
            h.m2.model.prepare()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(SCHEMA_VERSION as u64) {
            return Err(Error::SchemaMismatch(format!(
                "model schema version {version:?}, expected {SCHEMA_VERSION}"
            )));
        }
        let mut suite: TrainedSuite =
            serde_json::from_value(value).map_err(|e| Error::SchemaMismatch(format!("model does not match schema: {e}")))?;
        suite.prepare()?;
        Ok(suite)
    }

    /// Thresholds per house: fused and per-model.
    pub fn thresholds_json(&self) -> serde_json::Value {
        let houses: Vec<serde_json::Value> = self
            .houses
            .iter()
            .map(|h| {
                serde_json::json!({
                    "house_id": h.house_id,
                    "fused": h.fused_rule,
                    "m1": h.m1.rule,
                    "m2": h.m2.rule,
                    "m1_divisor": h.m1.divisor,
                    "m2_divisor": h.m2.divisor,
                })
            })
            .collect();
        serde_json::json!({
            "detector": self.config.detector,
            "fusion": self.config.fusion,
            "per_model_or": self.config.per_model_or,
            "m3": self.m3.rule,
            "m3_divisor": self.m3.divisor,
            "houses": houses,
        })
    }

    fn check_schema(&self, sim: &SimOutput) -> Result<()> {
        for g in &self.channel_schema {
            let frame_has = |f: &TimeSeriesFrame| g.channel_names.iter().all(|c| f.has_channel(c));
            let ok = match g.kind {
                GroupKind::Node => frame_has(&sim.node),
                GroupKind::Pv | GroupKind::Load => sim.houses.iter().all(|h| frame_has(&h.frame)),
            };
            if !ok {
                return Err(Error::SchemaMismatch(format!("input lacks the {:?} channels the model was trained on", g.kind)));
            }
        }
        if sim.node.step() != self.step {
            return Err(Error::SchemaMismatch(format!("sampling step {} s, model expects {} s", sim.node.step(), self.step)));
        }
        Ok(())
    }

    /// Scores a run. A run longer than the training span is scored from the
    /// end of that span on, with history read from the run itself.
    pub fn detect(&self, sim: &SimOutput) -> Result<Detections> {
        self.check_schema(sim)?;
        let start = if sim.node.len() > self.train_len { self.train_len } else { 0 };
        let kind = self.config.detector;
        let m3 = self.m3.score(&sim.node, start)?;
        let m3_flags: Vec<bool> = m3.iter().map(|&v| self.m3.rule.is_anomalous(v)).collect();
        let mut houses = Vec::with_capacity(self.houses.len());
        for hs in &self.houses {
            let house = sim
                .houses
                .iter()
                .find(|h| h.id == hs.house_id)
                .ok_or_else(|| Error::SchemaMismatch(format!("house {} missing from input", hs.house_id)))?;
            if house.frame.len() != sim.node.len() {
                return Err(Error::LengthMismatch(house.frame.len(), sim.node.len()));
            }
            let m1 = hs.m1.score(&house.frame, start)?;
            let m2 = hs.m2.score(&house.frame, start)?;
            let fused = fuse_values(kind, self.config.fusion, [&m1, &m2, &m3], Phase::Eval)?;
            let decisions: Vec<bool> = if self.config.per_model_or {
                (0..m1.len())
                    .map(|t| hs.m1.rule.is_anomalous(m1[t]) || hs.m2.rule.is_anomalous(m2[t]) || m3_flags[t])
                    .collect()
            } else {
                fused.values.iter().map(|&v| hs.fused_rule.is_anomalous(v)).collect()
            };
            houses.push(HouseDetections { house_id: hs.house_id, scores: [m1, m2, m3.clone()], fused: fused.values, decisions });
        }
        if houses.is_empty() {
            warn!("suite monitors no houses");
        }
        Ok(Detections {
            detector: kind,
            start,
            start_time: sim.node.timestamp(start.min(sim.node.len().saturating_sub(1))),
            step: sim.node.step(),
            orientation: kind.orientation(),
            houses,
        })
    }
}

//! Run directories: each pipeline stage reads upstream directories and
//! writes its own, with a manifest that hashes every file it produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use ndarray::s;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{apply_attacks, four_attack_day, AttackLabels, AttackSpec};
use crate::detect::{DetectorKind, Orientation};
use crate::error::{Error, Result};
use crate::eval::{evaluate_run, Pooled, roc_curve, time_detector, write_report, write_roc, write_timing, MetricsRow, TimingRow};
use crate::feeder::{simulate, House, PvSystem, Scenario, SimOutput};
use crate::suite::{fit_model, monitored_houses, score_model, train_suite, FitContext, SuiteConfig, TrainedSuite};
use crate::svg;
use crate::timeseries::{read_csv, write_csv, ChannelGroup, IngestOptions, Standardizer};

pub const MANIFEST: &str = "manifest.json";
pub const TOOL: &str = "pvsentry";

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::InvalidScenario(_)
        | Error::InvalidParameter(_)
        | Error::InvalidPowerFactor(_)
        | Error::InvalidFactor(_)
        | Error::ZeroPeakLoad
        | Error::Json(_) => 2,
        Error::PowerFlowDivergence { .. } | Error::NonConvergence(_) | Error::NonFiniteLoss { .. } => 3,
        Error::IntervalOutOfRange { .. } | Error::LengthMismatch(..) | Error::InvalidSchedule(_) => 4,
        Error::SchemaMismatch(_) | Error::Manifest(_) | Error::MissingChannel(_) => 5,
        Error::SingleClassLabels(_) => 6,
        _ => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub stage: String,
    /// SHA-256 of the configuration that drove this stage.
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    /// Upstream run directories.
    pub parents: BTreeMap<String, PathBuf>,
    /// File name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
    /// First and last data timestamps covered, epoch seconds.
    pub time_span: Option<(i64, i64)>,
    #[serde(default)]
    pub params: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_context(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_context(path, e))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Accumulates the files of one stage and writes the manifest last.
struct RunWriter {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl RunWriter {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| io_context(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: BTreeMap::new() })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_context(&path, e))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn put_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.put(name, &buf)
    }

    fn finish(self, mut manifest: Manifest) -> Result<Manifest> {
        manifest.files = self.files;
        let path = self.dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text).map_err(|e| io_context(&path, e))?;
        Ok(manifest)
    }
}

fn manifest(stage: &str, config_bytes: &[u8]) -> Manifest {
    Manifest {
        tool: TOOL.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        stage: stage.to_string(),
        config_sha256: sha256_hex(config_bytes),
        seeds: BTreeMap::new(),
        parents: BTreeMap::new(),
        files: BTreeMap::new(),
        time_span: None,
        params: serde_json::Value::Null,
    }
}

/// Reads a manifest and checks every listed file against its hash.
pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|_| Error::Manifest(format!("no manifest in {}", dir.display())))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    if m.tool != TOOL {
        return Err(Error::Manifest(format!("{} was not written by {TOOL}", path.display())));
    }
    for (name, hash) in &m.files {
        let file = dir.join(name);
        let bytes = fs::read(&file).map_err(|_| Error::Manifest(format!("{} listed in manifest but missing", file.display())))?;
        if &sha256_hex(&bytes) != hash {
            return Err(Error::Manifest(format!("{} does not match its manifest hash", file.display())));
        }
    }
    Ok(m)
}

fn expect_stage(m: &Manifest, dir: &Path, stages: &[&str]) -> Result<()> {
    if !stages.contains(&m.stage.as_str()) {
        return Err(Error::Manifest(format!(
            "{} holds a `{}` run, expected {}",
            dir.display(),
            m.stage,
            stages.join(" or ")
        )));
    }
    Ok(())
}

fn absolute(dir: &Path) -> PathBuf {
    fs::canonicalize(dir).unwrap_or_else(|_| dir.to_path_buf())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HouseInfo {
    id: usize,
    pv: Option<PvSystem>,
}

/// A simulated (and possibly attacked) run loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub scenario: Scenario,
    pub sim: SimOutput,
    pub labels: AttackLabels,
    pub manifest: Manifest,
}

fn write_run(w: &mut RunWriter, scenario: &Scenario, sim: &SimOutput, labels: &AttackLabels) -> Result<()> {
    w.put("scenario.json", serde_json::to_string_pretty(scenario)?.as_bytes())?;
    let info: Vec<HouseInfo> = sim.houses.iter().map(|h| HouseInfo { id: h.id, pv: h.pv }).collect();
    w.put("houses.json", serde_json::to_string_pretty(&info)?.as_bytes())?;
    for h in &sim.houses {
        w.put_with(&format!("house_{}.csv", h.id), |b| write_csv(&h.frame, b))?;
    }
    w.put_with("node.csv", |b| write_csv(&sim.node, b))?;
    w.put_with("labels.csv", |b| labels.write_csv(sim.node.start_time(), sim.node.step(), b))
}

fn span(sim: &SimOutput) -> Option<(i64, i64)> {
    (!sim.node.is_empty()).then(|| (sim.node.start_time(), sim.node.timestamp(sim.node.len() - 1)))
}

/// Loads a `simulate` or `attack` run directory.
pub fn load_run(dir: &Path) -> Result<RunData> {
    let manifest = load_manifest(dir)?;
    expect_stage(&manifest, dir, &["simulate", "attack"])?;
    let sc_path = dir.join("scenario.json");
    let scenario: Scenario = parse_json(&sc_path, &read_text(&sc_path)?)?;
    let info_path = dir.join("houses.json");
    let info: Vec<HouseInfo> = parse_json(&info_path, &read_text(&info_path)?)?;
    let open = |name: &str| -> Result<fs::File> {
        let p = dir.join(name);
        fs::File::open(&p).map_err(|e| io_context(&p, e))
    };
    let node = read_csv(open("node.csv")?, &[ChannelGroup::node()], IngestOptions::default())?;
    let mut houses = Vec::with_capacity(info.len());
    for h in info {
        let frame = read_csv(open(&format!("house_{}.csv", h.id))?, &ChannelGroup::house(), IngestOptions::default())?;
        if frame.len() != node.len() || frame.start_time() != node.start_time() {
            return Err(Error::LengthMismatch(frame.len(), node.len()));
        }
        houses.push(House { id: h.id, pv: h.pv, frame });
    }
    let labels = AttackLabels::read_csv(open("labels.csv")?, houses.len(), node.len())?;
    Ok(RunData { scenario, sim: SimOutput { houses, node }, labels, manifest })
}

/// `simulate -c scenario.json -o dir`.
pub fn run_simulate(config: &Path, out: &Path) -> Result<Manifest> {
    let text = read_text(config)?;
    let scenario: Scenario = parse_json(config, &text)?;
    scenario.validate()?;
    info!("simulating {} houses for {} days", scenario.n_houses, scenario.days);
    let sim = simulate(&scenario)?;
    let labels = AttackLabels::new(sim.houses.len(), sim.node.len());
    let mut w = RunWriter::create(out)?;
    write_run(&mut w, &scenario, &sim, &labels)?;
    let mut m = manifest("simulate", text.as_bytes());
    m.seeds.insert("scenario".into(), scenario.seed);
    m.time_span = span(&sim);
    w.finish(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourAttackDay {
    pub day: usize,
    pub penetration: f64,
}

/// `attack.json`: explicit specs, the four-attack day, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub seed: u64,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
    #[serde(default)]
    pub four_attack_day: Option<FourAttackDay>,
}

impl AttackConfig {
    pub fn specs(&self, steps_per_day: usize) -> Vec<AttackSpec> {
        let mut specs = self.attacks.clone();
        if let Some(d) = &self.four_attack_day {
            specs.extend(four_attack_day(d.day, steps_per_day, d.penetration));
        }
        specs
    }
}

/// `attack -i normal -c attack.json -o dir [--penetration p]`.
pub fn run_attack(input: &Path, config: &Path, out: &Path, penetration: Option<f64>) -> Result<Manifest> {
    let run = load_run(input)?;
    let text = read_text(config)?;
    let cfg: AttackConfig = parse_json(config, &text)?;
    let mut specs = cfg.specs(run.scenario.steps_per_day());
    if specs.is_empty() {
        return Err(Error::Config(format!("{} defines no attacks", config.display())));
    }
    if let Some(p) = penetration {
        specs.iter_mut().for_each(|s| s.penetration = p);
    }
    let mut sim = run.sim;
    for s in &specs {
        s.validate(sim.node.len())?;
    }
    let new_labels = apply_attacks(&mut sim, &specs, &run.scenario.feeder, cfg.seed)?;
    let mut labels = run.labels;
    labels.merge(&new_labels)?;
    let mut w = RunWriter::create(out)?;
    write_run(&mut w, &run.scenario, &sim, &labels)?;
    w.put("attack.json", serde_json::to_string_pretty(&specs)?.as_bytes())?;
    let mut m = manifest("attack", text.as_bytes());
    m.seeds.insert("scenario".into(), run.scenario.seed);
    m.seeds.insert("attack".into(), cfg.seed);
    m.parents.insert("input".into(), absolute(input));
    m.time_span = span(&sim);
    m.params = serde_json::json!({ "penetration_override": penetration });
    w.finish(m)
}

/// `train -i normal -d detector --seed n -o dir`.
pub fn run_train(input: &Path, cfg: &SuiteConfig, train_days: Option<usize>, out: &Path) -> Result<Manifest> {
    let run = load_run(input)?;
    let spd = run.scenario.steps_per_day();
    let days = run.sim.node.len() / spd.max(1);
    // By default the last day of the run is left out for evaluation.
    let train_days = train_days.unwrap_or(if days > 1 { days - 1 } else { days });
    if train_days == 0 || train_days * spd > run.sim.node.len() {
        return Err(Error::Config(format!("cannot train on {train_days} days of a {days}-day run")));
    }
    let suite = train_suite(&run.sim, train_days * spd, cfg)?;
    let config_text = serde_json::to_string_pretty(cfg)?;
    let mut w = RunWriter::create(out)?;
    w.put("config.json", config_text.as_bytes())?;
    w.put("model.json", suite.to_json()?.as_bytes())?;
    w.put("thresholds.json", serde_json::to_string_pretty(&suite.thresholds_json())?.as_bytes())?;
    let mut m = manifest("train", config_text.as_bytes());
    m.seeds.insert("train".into(), cfg.seed);
    m.parents.insert("input".into(), absolute(input));
    m.params = serde_json::json!({
        "detector": cfg.detector,
        "train_days": train_days,
        "train_len": suite.train_len,
        "schema_version": suite.schema_version,
        "monitored_houses": suite.houses.iter().map(|h| h.house_id).collect::<Vec<_>>(),
    });
    w.finish(m)
}

pub fn load_model(dir: &Path) -> Result<(TrainedSuite, Manifest)> {
    let m = load_manifest(dir)?;
    expect_stage(&m, dir, &["train"])?;
    let suite = TrainedSuite::from_json(&read_text(&dir.join("model.json"))?)?;
    Ok((suite, m))
}

/// `detect -m model -i run -o dir`.
pub fn run_detect(model: &Path, input: &Path, out: &Path) -> Result<Manifest> {
    let (suite, model_manifest) = load_model(model)?;
    let run = load_run(input)?;
    let det = suite.detect(&run.sim)?;
    let mut w = RunWriter::create(out)?;
    w.put_with("scores.csv", |b| det.write_csv(b))?;
    w.put("thresholds.json", serde_json::to_string_pretty(&suite.thresholds_json())?.as_bytes())?;
    let mut m = manifest("detect", model_manifest.config_sha256.as_bytes());
    m.seeds = model_manifest.seeds.clone();
    m.parents.insert("model".into(), absolute(model));
    m.parents.insert("input".into(), absolute(input));
    m.time_span = (!det.is_empty()).then(|| (det.start_time, det.start_time + det.step * (det.len() as i64 - 1)));
    m.params = serde_json::json!({
        "detector": det.detector,
        "orientation": det.orientation,
        "start_row": det.start,
        "rows": det.len(),
    });
    w.finish(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRun {
    pub detector: DetectorKind,
    pub start: usize,
    /// Per house: (id, fused scores, decisions).
    pub houses: Vec<(usize, Vec<f64>, Vec<bool>)>,
    pub orientation: Orientation,
}

fn read_scores(dir: &Path, m: &Manifest) -> Result<ScoredRun> {
    let params = &m.params;
    let field = |k: &str| params.get(k).cloned().ok_or_else(|| Error::Manifest(format!("detect manifest lacks `{k}`")));
    let detector: DetectorKind = serde_json::from_value(field("detector")?)?;
    let orientation: Orientation = serde_json::from_value(field("orientation")?)?;
    let start: usize = serde_json::from_value(field("start_row")?)?;
    let path = dir.join("scores.csv");
    let mut rdr = csv::Reader::from_reader(fs::File::open(&path).map_err(|e| io_context(&path, e))?);
    let mut order: Vec<usize> = Vec::new();
    let mut by_house: BTreeMap<usize, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse_err = |c: &str| Error::InvalidFrame(format!("{}: bad `{c}` value", path.display()));
        let id: usize = rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| parse_err("house_id"))?;
        let fused: f64 = rec.get(5).and_then(|v| v.parse().ok()).ok_or_else(|| parse_err("fused_score"))?;
        let decision = rec.get(6).ok_or_else(|| parse_err("decision"))? == "1";
        let entry = by_house.entry(id).or_insert_with(|| {
            order.push(id);
            (Vec::new(), Vec::new())
        });
        entry.0.push(fused);
        entry.1.push(decision);
    }
    let houses = order
        .into_iter()
        .map(|id| {
            let (f, d) = by_house.remove(&id).expect("inserted above");
            (id, f, d)
        })
        .collect();
    Ok(ScoredRun { detector, start, houses, orientation })
}

/// Pools houses of a scored run against the run's labels: decisions,
/// high-is-anomalous scores, labels.
pub fn pool_scored(scored: &ScoredRun, labels: &AttackLabels) -> Result<Pooled> {
    let mut decisions = Vec::new();
    let mut graded = Vec::new();
    let mut truth = Vec::new();
    for (id, fused, dec) in &scored.houses {
        let end = scored.start + dec.len();
        if *id >= labels.n_houses() || end > labels.steps() {
            return Err(Error::LengthMismatch(end, labels.steps()));
        }
        decisions.extend_from_slice(dec);
        graded.extend(fused.iter().map(|v| match scored.orientation {
            Orientation::HighIsAnomalous => *v,
            Orientation::LowIsAnomalous => -v,
        }));
        truth.extend_from_slice(&labels.house(*id)[scored.start..end]);
    }
    Ok((decisions, graded, truth))
}

/// Per-sample timing of one detector on the m1 data of the first monitored house.
pub fn time_on_run(sim: &SimOutput, train_len: usize, cfg: &SuiteConfig, reps: usize) -> Result<TimingRow> {
    let house = *monitored_houses(sim, train_len)?
        .first()
        .ok_or_else(|| Error::Config("no monitored house to time".into()))?;
    let frame = &sim.houses[house].frame;
    let raw = frame.to_matrix(&ChannelGroup::pv().channel_names)?;
    let st = Standardizer::fit(raw.slice(s![..train_len, ..]))?;
    let x = st.transform(raw.view())?;
    let (train, test) = (x.slice(s![..train_len, ..]), x.slice(s![train_len.., ..]));
    let fit = FitContext::default();
    time_detector(
        cfg.detector.as_str(),
        reps,
        train.nrows(),
        test.nrows(),
        || fit_model(cfg.detector, train, cfg, cfg.seed, &fit).map(|r| r.0),
        |m| score_model(m, train, test).map(|_| ()),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rows: Vec<MetricsRow>,
    pub timing: TimingRow,
}

/// `evaluate -i detect_dir -o dir`.
pub fn run_evaluate(input: &Path, out: &Path) -> Result<Evaluation> {
    let dm = load_manifest(input)?;
    expect_stage(&dm, input, &["detect"])?;
    let parent = |k: &str| dm.parents.get(k).cloned().ok_or_else(|| Error::Manifest(format!("detect manifest lacks parent `{k}`")));
    let run = load_run(&parent("input")?)?;
    let scored = read_scores(input, &dm)?;
    let (decisions, graded, truth) = pool_scored(&scored, &run.labels)?;
    let rows = evaluate_run(&decisions, scored.detector.has_roc().then_some(graded.as_slice()), &truth)?;

    let (suite, mm) = load_model(&parent("model")?)?;
    let train_run = load_run(mm.parents.get("input").ok_or_else(|| Error::Manifest("model manifest lacks its input".into()))?)?;
    if train_run.sim.node.len() <= suite.train_len {
        return Err(Error::Config("training run has no rows beyond the training span to time scoring on".into()));
    }
    let timing = time_on_run(&train_run.sim, suite.train_len, &suite.config, 3)?;

    let mut w = RunWriter::create(out)?;
    w.put_with("report.csv", |b| write_report(&rows, b))?;
    w.put_with("timing.csv", |b| write_timing(std::slice::from_ref(&timing), b))?;
    w.put("timing.svg", svg::timing_chart(std::slice::from_ref(&timing)).as_bytes())?;
    if scored.detector.has_roc() {
        let binary: Vec<bool> = truth.iter().map(|l| l.is_some()).collect();
        let curve = roc_curve(&graded, &binary)?;
        let auc = rows[0].roc_auc.unwrap_or(f64::NAN);
        w.put_with(&format!("roc_{}.csv", scored.detector), |b| write_roc(&curve, b))?;
        w.put(&format!("roc_{}.svg", scored.detector), svg::roc_chart(&[(scored.detector.to_string(), curve, auc)]).as_bytes())?;
    }
    let mut m = manifest("evaluate", dm.config_sha256.as_bytes());
    m.seeds = dm.seeds.clone();
    m.parents.insert("detect".into(), absolute(input));
    m.time_span = dm.time_span;
    m.params = serde_json::json!({ "detector": scored.detector });
    w.finish(m)?;
    Ok(Evaluation { rows, timing })
}

/// `bench -i run -o dir`: training and scoring time per sample for every
/// detector on the same data.
pub fn run_bench(input: &Path, base: &SuiteConfig, train_days: Option<usize>, reps: usize, out: &Path) -> Result<Vec<TimingRow>> {
    let run = load_run(input)?;
    let spd = run.scenario.steps_per_day();
    let days = run.sim.node.len() / spd.max(1);
    let train_days = train_days.unwrap_or(days.saturating_sub(1).max(1));
    let train_len = train_days * spd;
    if train_len >= run.sim.node.len() {
        return Err(Error::Config(format!("need rows beyond the {train_days} training days to time scoring")));
    }
    let rows = DetectorKind::ALL
        .into_iter()
        .map(|d| {
            info!("timing {d}");
            time_on_run(&run.sim, train_len, &SuiteConfig { detector: d, ..base.clone() }, reps)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = RunWriter::create(out)?;
    w.put_with("timing.csv", |b| write_timing(&rows, b))?;
    w.put("timing.svg", svg::timing_chart(&rows).as_bytes())?;
    let config_text = serde_json::to_string_pretty(base)?;
    let mut m = manifest("bench", config_text.as_bytes());
    m.parents.insert("input".into(), absolute(input));
    m.params = serde_json::json!({ "train_days": train_days, "reps": reps });
    w.finish(m)?;
    Ok(rows)
}

//! Browser bindings: simulate an attacked day, sweep penetration, and run a
//! small train/detect/evaluate cycle. Every export returns a JSON string.

use pvsentry::attack::{apply_attacks, four_attack_day, AttackKind, AttackSpec};
use pvsentry::detect::DetectorKind;
use pvsentry::eval::evaluate_detections;
use pvsentry::feeder::{simulate, Scenario, SimOutput};
use pvsentry::suite::{train_suite, SuiteConfig};
use pvsentry::timeseries::{PHASE_ANGLE, VOLTAGE_MAGNITUDE};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Houses and days of the demo scenario; small enough for a page.
const DEMO_HOUSES: usize = 10;
const DEMO_DAYS: usize = 4;

fn scenario(seed: u64, days: usize) -> Scenario {
    Scenario { n_houses: DEMO_HOUSES, days, ..Scenario::with_seed(seed) }
}

fn parse_kind(kind: &str) -> Result<AttackKind, String> {
    serde_json::from_value(json!(kind)).map_err(|_| format!("unknown attack `{kind}`"))
}

fn node_channel(sim: &SimOutput, name: &str, range: std::ops::Range<usize>) -> Result<Vec<f64>, String> {
    Ok(sim.node.channel(name).map_err(|e| e.to_string())?[range].to_vec())
}

#[derive(Serialize)]
struct AttackDay {
    /// Minutes since midnight of each sample.
    minutes: Vec<f64>,
    normal_magnitude: Vec<f64>,
    attacked_magnitude: Vec<f64>,
    normal_angle: Vec<f64>,
    attacked_angle: Vec<f64>,
    /// Whether any house is under attack at each sample.
    attacked: Vec<bool>,
    houses_attacked: usize,
}

pub fn attack_day(seed: u64, kind: &str, penetration: f64, start_min: usize, duration_min: usize) -> Result<String, String> {
    let kind = parse_kind(kind)?;
    let sc = scenario(seed, 1);
    let base = simulate(&sc).map_err(|e| e.to_string())?;
    let per_min = (60 / sc.step) as usize;
    let spec = AttackSpec::new(kind, vec![(start_min * per_min, (start_min + duration_min) * per_min)], penetration);
    let mut sim = base.clone();
    let labels = apply_attacks(&mut sim, &[spec], &sc.feeder, seed).map_err(|e| e.to_string())?;
    let n = sim.node.len();
    let attacked: Vec<bool> = (0..n).map(|t| (0..labels.n_houses()).any(|h| labels.get(h, t).is_some())).collect();
    let day = AttackDay {
        minutes: (0..n).map(|t| (t as i64 * sc.step) as f64 / 60.0).collect(),
        normal_magnitude: node_channel(&base, VOLTAGE_MAGNITUDE, 0..n)?,
        attacked_magnitude: node_channel(&sim, VOLTAGE_MAGNITUDE, 0..n)?,
        normal_angle: node_channel(&base, PHASE_ANGLE, 0..n)?,
        attacked_angle: node_channel(&sim, PHASE_ANGLE, 0..n)?,
        attacked,
        houses_attacked: (0..labels.n_houses()).filter(|&h| labels.house(h).iter().any(Option::is_some)).count(),
    };
    serde_json::to_string(&day).map_err(|e| e.to_string())
}

pub fn sweep(seed: u64, kind: &str) -> Result<String, String> {
    let kind = parse_kind(kind)?;
    let sc = scenario(seed, 1);
    let base = simulate(&sc).map_err(|e| e.to_string())?;
    let per_min = (60 / sc.step) as usize;
    let (a, b) = (11 * 60 * per_min, 13 * 60 * per_min);
    let v0 = node_channel(&base, VOLTAGE_MAGNITUDE, a..b)?;
    let mut points = vec![json!({ "penetration": 0.0, "mean_delta": 0.0 })];
    for step in 1..=10 {
        let p = step as f64 / 10.0;
        let mut sim = base.clone();
        apply_attacks(&mut sim, &[AttackSpec::new(kind, vec![(a, b)], p)], &sc.feeder, seed).map_err(|e| e.to_string())?;
        let v = node_channel(&sim, VOLTAGE_MAGNITUDE, a..b)?;
        let mean = v.iter().zip(&v0).map(|(x, y)| x - y).sum::<f64>() / v.len() as f64;
        points.push(json!({ "penetration": p, "mean_delta": mean }));
    }
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

pub fn detect(seed: u64, detector: &str) -> Result<String, String> {
    let kind: DetectorKind = detector.parse().map_err(|e: pvsentry::Error| e.to_string())?;
    let sc = scenario(seed, DEMO_DAYS);
    let spd = sc.steps_per_day();
    let normal = simulate(&sc).map_err(|e| e.to_string())?;
    let mut run = normal.clone();
    let labels = apply_attacks(&mut run, &four_attack_day(DEMO_DAYS - 1, spd, 1.0), &sc.feeder, seed).map_err(|e| e.to_string())?;
    let cfg = SuiteConfig { detector: kind, seed, ..SuiteConfig::default() };
    let suite = train_suite(&normal, (DEMO_DAYS - 1) * spd, &cfg).map_err(|e| e.to_string())?;
    let det = suite.detect(&run).map_err(|e| e.to_string())?;
    let rows = evaluate_detections(&det, &labels, kind.has_roc()).map_err(|e| e.to_string())?;
    let first = det.houses.first().ok_or("no monitored house")?;
    let truth: Vec<bool> = labels.house(first.house_id)[det.start..].iter().map(Option::is_some).collect();
    let out = json!({
        "detector": kind,
        "orientation": det.orientation,
        "house_id": first.house_id,
        "fused": first.fused,
        "decisions": first.decisions,
        "truth": truth,
        "threshold": suite.houses[0].fused_rule,
        "report": rows.iter().map(|r| json!({
            "attack": r.row.to_string(),
            "precision": r.metrics.precision,
            "recall": r.metrics.recall,
            "f1": r.metrics.f1,
            "accuracy": r.metrics.accuracy,
            "roc_auc": r.roc_auc,
        })).collect::<Vec<_>>(),
    });
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// One day of node voltage with and without an attack window.
#[wasm_bindgen]
pub fn simulate_attack_day(seed: u32, kind: &str, penetration: f64, start_min: u32, duration_min: u32) -> Result<String, JsValue> {
    attack_day(seed as u64, kind, penetration, start_min as usize, duration_min as usize).map_err(|e| JsValue::from_str(&e))
}

/// Mean change in node voltage magnitude over a midday attack, by penetration.
#[wasm_bindgen]
pub fn voltage_sweep(seed: u32, kind: &str) -> Result<String, JsValue> {
    sweep(seed as u64, kind).map_err(|e| JsValue::from_str(&e))
}

/// Trains on the leading normal days and scores a four-attack day.
#[wasm_bindgen]
pub fn detect_day(seed: u32, detector: &str) -> Result<String, JsValue> {
    detect(seed as u64, detector).map_err(|e| JsValue::from_str(&e))
}

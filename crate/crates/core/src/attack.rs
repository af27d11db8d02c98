//! Attack mutators. Each one rewrites the PV and meter channels of the
//! targeted houses over scheduled intervals, then re-solves the node phasor
//! from the mutated aggregate injection.

use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::{node_phasors, pv_current, reactive_for, FeederParams, House, SimOutput};
use crate::rng::{self, Purpose};
use crate::timeseries::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Disconnect,
    Curtailment,
    VoltVar,
    ReversePowerFlow,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] =
        [AttackKind::Disconnect, AttackKind::Curtailment, AttackKind::VoltVar, AttackKind::ReversePowerFlow];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Disconnect => "disconnect",
            AttackKind::Curtailment => "curtailment",
            AttackKind::VoltVar => "volt_var",
            AttackKind::ReversePowerFlow => "reverse_power_flow",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown attack kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackParams {
    /// Multiplier on PV active power, in (0, 1).
    pub curtail_factor: f64,
    /// Power factor forced onto the inverter, in (0, 1].
    pub power_factor: f64,
    /// Fraction of house demand switched off, in (0, 1].
    pub load_off_fraction: f64,
}

impl Default for AttackParams {
    fn default() -> Self {
        Self { curtail_factor: 0.5, power_factor: 0.8, load_off_fraction: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Half-open `[start, end)` timestep ranges.
    pub intervals: Vec<(usize, usize)>,
    /// Fraction of houses the attacker controls, in (0, 1].
    pub penetration: f64,
    #[serde(default)]
    pub params: AttackParams,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, intervals: Vec<(usize, usize)>, penetration: f64) -> Self {
        Self { kind, intervals, penetration, params: AttackParams::default() }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if !(self.penetration > 0.0 && self.penetration <= 1.0) {
            return Err(Error::InvalidFactor(self.penetration));
        }
        let mut sorted = self.intervals.clone();
        sorted.sort_unstable();
        for &(start, end) in &sorted {
            if start >= end || end > len {
                return Err(Error::IntervalOutOfRange { start, end, len });
            }
        }
        if sorted.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::InvalidSchedule("intervals overlap".into()));
        }
        let p = &self.params;
        match self.kind {
            AttackKind::Curtailment if !(p.curtail_factor > 0.0 && p.curtail_factor < 1.0) => {
                Err(Error::InvalidFactor(p.curtail_factor))
            }
            AttackKind::VoltVar if !(p.power_factor > 0.0 && p.power_factor <= 1.0) => {
                Err(Error::InvalidPowerFactor(p.power_factor))
            }
            AttackKind::ReversePowerFlow if !(p.load_off_fraction > 0.0 && p.load_off_fraction <= 1.0) => {
                Err(Error::InvalidFactor(p.load_off_fraction))
            }
            _ => Ok(()),
        }
    }
}

/// Four 30-minute windows between 10:00 and 14:00 of `day`, separated by 30-minute gaps.
pub fn daytime_intervals(day: usize, steps_per_day: usize) -> Vec<(usize, usize)> {
    let per_hour = steps_per_day / 24;
    let base = day * steps_per_day;
    (10..14)
        .map(|hour| {
            let start = base + hour * per_hour;
            (start, start + per_hour / 2)
        })
        .collect()
}

/// One window per attack kind on a single day, in `AttackKind::ALL` order.
pub fn four_attack_day(day: usize, steps_per_day: usize, penetration: f64) -> Vec<AttackSpec> {
    AttackKind::ALL
        .into_iter()
        .zip(daytime_intervals(day, steps_per_day))
        .map(|(kind, interval)| AttackSpec::new(kind, vec![interval], penetration))
        .collect()
}

/// Per-house, per-timestep ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackLabels {
    steps: usize,
    houses: Vec<Vec<Option<AttackKind>>>,
}

impl AttackLabels {
    pub fn new(n_houses: usize, steps: usize) -> Self {
        Self { steps, houses: vec![vec![None; steps]; n_houses] }
    }

    pub fn n_houses(&self) -> usize {
        self.houses.len()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn get(&self, house: usize, t: usize) -> Option<AttackKind> {
        self.houses[house][t]
    }

    pub fn house(&self, house: usize) -> &[Option<AttackKind>] {
        &self.houses[house]
    }

    pub fn attacked_count(&self) -> usize {
        self.houses.iter().flatten().filter(|l| l.is_some()).count()
    }

    fn mark(&mut self, house: usize, range: Range<usize>, kind: AttackKind) -> Result<()> {
        for t in range {
            match self.houses[house][t] {
                Some(prev) if prev != kind => {
                    return Err(Error::InvalidSchedule(format!(
                        "house {house} step {t} already carries a {prev} attack"
                    )))
                }
                _ => self.houses[house][t] = Some(kind),
            }
        }
        Ok(())
    }

    /// Merges labels of disjoint attacks.
    pub fn merge(&mut self, other: &AttackLabels) -> Result<()> {
        if other.steps != self.steps || other.n_houses() != self.n_houses() {
            return Err(Error::InvalidSchedule("label shapes differ".into()));
        }
        for h in 0..self.n_houses() {
            for t in 0..self.steps {
                if let Some(kind) = other.houses[h][t] {
                    self.mark(h, t..t + 1, kind)?;
                }
            }
        }
        Ok(())
    }

    /// `timestamp,house_id,attacked,kind`, ordered by time then house.
    pub fn write_csv<W: Write>(&self, start_time: i64, step: i64, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "house_id", "attacked", "kind"])?;
        for t in 0..self.steps {
            let ts = (start_time + step * t as i64).to_string();
            for (h, labels) in self.houses.iter().enumerate() {
                let (flag, kind) = match labels[t] {
                    Some(k) => ("1", k.as_str()),
                    None => ("0", ""),
                };
                w.write_record([ts.as_str(), &h.to_string(), flag, kind])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, n_houses: usize, steps: usize) -> Result<Self> {
        let mut labels = Self::new(n_houses, steps);
        let mut rdr = csv::Reader::from_reader(reader);
        let mut count = 0;
        let mut first_ts = None;
        let mut step = None;
        for record in rdr.records() {
            let record = record?;
            let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
            let ts: i64 = field(0).parse().map_err(|_| Error::Config(format!("bad timestamp `{}`", field(0))))?;
            let house: usize = field(1).parse().map_err(|_| Error::Config(format!("bad house id `{}`", field(1))))?;
            let first = *first_ts.get_or_insert(ts);
            if step.is_none() && ts != first {
                step = Some(ts - first);
            }
            let t = match step {
                Some(s) if s > 0 => ((ts - first) / s) as usize,
                _ => 0,
            };
            if house >= n_houses || t >= steps {
                return Err(Error::InvalidSchedule(format!("label row outside frame: house {house}, step {t}")));
            }
            if field(2) == "1" {
                labels.houses[house][t] = Some(field(3).parse()?);
            }
            count += 1;
        }
        if count != n_houses * steps {
            return Err(Error::InvalidSchedule(format!(
                "expected {} label rows, found {count}",
                n_houses * steps
            )));
        }
        Ok(labels)
    }
}

/// Houses the attacker controls: `ceil(penetration * n)` of them, PV owners
/// first, each group in a seeded shuffle. Lower penetrations select subsets
/// of higher ones.
pub fn select_houses(houses: &[House], penetration: f64, seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, Purpose::AttackSelection, 0);
    let mut with_pv: Vec<usize> = houses.iter().filter(|h| h.has_pv()).map(|h| h.id).collect();
    let mut without: Vec<usize> = houses.iter().filter(|h| !h.has_pv()).map(|h| h.id).collect();
    with_pv.shuffle(&mut rng);
    without.shuffle(&mut rng);
    let count = ((penetration * houses.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    with_pv.into_iter().chain(without).take(count.min(houses.len())).collect()
}

fn column(frame: &TimeSeriesFrame, name: &str) -> Vec<f64> {
    frame.channel(name).expect("house frame carries all PV and load channels").to_vec()
}

struct HouseChannels {
    pv_p: Vec<f64>,
    pv_q: Vec<f64>,
    pv_v: Vec<f64>,
    pv_i: Vec<f64>,
    net_p: Vec<f64>,
    net_q: Vec<f64>,
}

impl HouseChannels {
    fn load(frame: &TimeSeriesFrame) -> Self {
        Self {
            pv_p: column(frame, PV_ACTIVE_POWER),
            pv_q: column(frame, PV_REACTIVE_POWER),
            pv_v: column(frame, PV_VOLTAGE),
            pv_i: column(frame, PV_CURRENT),
            net_p: column(frame, NET_ACTIVE_POWER),
            net_q: column(frame, NET_REACTIVE_POWER),
        }
    }

    fn store(self, frame: &mut TimeSeriesFrame) -> Result<()> {
        frame.channel_mut(PV_ACTIVE_POWER)?.copy_from_slice(&self.pv_p);
        frame.channel_mut(PV_REACTIVE_POWER)?.copy_from_slice(&self.pv_q);
        frame.channel_mut(PV_CURRENT)?.copy_from_slice(&self.pv_i);
        frame.channel_mut(NET_ACTIVE_POWER)?.copy_from_slice(&self.net_p);
        frame.channel_mut(NET_REACTIVE_POWER)?.copy_from_slice(&self.net_q);
        Ok(())
    }
}

fn mutate_step(ch: &mut HouseChannels, t: usize, kind: AttackKind, params: &AttackParams) {
    match kind {
        AttackKind::Disconnect => {
            ch.net_p[t] += ch.pv_p[t];
            ch.net_q[t] += ch.pv_q[t];
            ch.pv_p[t] = 0.0;
            ch.pv_q[t] = 0.0;
            ch.pv_i[t] = 0.0;
        }
        AttackKind::Curtailment => {
            if ch.pv_p[t] == 0.0 {
                return;
            }
            let p = ch.pv_p[t] * params.curtail_factor;
            ch.net_p[t] += ch.pv_p[t] - p;
            ch.pv_p[t] = p;
            ch.pv_i[t] = pv_current(p, ch.pv_q[t], ch.pv_v[t]);
        }
        AttackKind::VoltVar => {
            let q = reactive_for(ch.pv_p[t], params.power_factor, true);
            if q == ch.pv_q[t] {
                return;
            }
            ch.net_q[t] -= q - ch.pv_q[t];
            ch.pv_q[t] = q;
            ch.pv_i[t] = pv_current(ch.pv_p[t], q, ch.pv_v[t]);
        }
        AttackKind::ReversePowerFlow => {
            let keep = 1.0 - params.load_off_fraction;
            let demand_p = ch.net_p[t] + ch.pv_p[t];
            let demand_q = ch.net_q[t] + ch.pv_q[t];
            ch.net_p[t] = demand_p * keep - ch.pv_p[t];
            ch.net_q[t] = demand_q * keep - ch.pv_q[t];
        }
    }
}

/// Applies one attack in place and returns its labels.
pub fn apply_attack(sim: &mut SimOutput, spec: &AttackSpec, feeder: &FeederParams, seed: u64) -> Result<AttackLabels> {
    let len = sim.node.len();
    spec.validate(len)?;
    let mut labels = AttackLabels::new(sim.houses.len(), len);
    for h in select_houses(&sim.houses, spec.penetration, seed) {
        let house = &mut sim.houses[h];
        let mut ch = HouseChannels::load(&house.frame);
        for &(start, end) in &spec.intervals {
            for t in start..end {
                mutate_step(&mut ch, t, spec.kind, &spec.params);
            }
            labels.mark(h, start..end, spec.kind)?;
        }
        ch.store(&mut house.frame)?;
    }
    recompute_node(sim, feeder, &spec.intervals)?;
    Ok(labels)
}

/// Applies a sequence of attacks; their labels must not collide.
pub fn apply_attacks(
    sim: &mut SimOutput,
    specs: &[AttackSpec],
    feeder: &FeederParams,
    seed: u64,
) -> Result<AttackLabels> {
    let mut labels = AttackLabels::new(sim.houses.len(), sim.node.len());
    for spec in specs {
        labels.merge(&apply_attack(sim, spec, feeder, seed)?)?;
    }
    Ok(labels)
}

fn apply_kind(
    expected: AttackKind,
    sim: &mut SimOutput,
    spec: &AttackSpec,
    feeder: &FeederParams,
    seed: u64,
) -> Result<AttackLabels> {
    if spec.kind != expected {
        return Err(Error::InvalidSchedule(format!("expected a {expected} spec, got {}", spec.kind)));
    }
    apply_attack(sim, spec, feeder, seed)
}

/// Zeroes PV output of the targeted houses; their meters import the lost generation.
pub fn apply_disconnect(sim: &mut SimOutput, spec: &AttackSpec, feeder: &FeederParams, seed: u64) -> Result<AttackLabels> {
    apply_kind(AttackKind::Disconnect, sim, spec, feeder, seed)
}

/// Scales PV active power by `curtail_factor`.
pub fn apply_curtailment(sim: &mut SimOutput, spec: &AttackSpec, feeder: &FeederParams, seed: u64) -> Result<AttackLabels> {
    apply_kind(AttackKind::Curtailment, sim, spec, feeder, seed)
}

/// Forces the inverter power factor, injecting reactive power at unchanged P.
pub fn apply_voltvar(sim: &mut SimOutput, spec: &AttackSpec, feeder: &FeederParams, seed: u64) -> Result<AttackLabels> {
    apply_kind(AttackKind::VoltVar, sim, spec, feeder, seed)
}

/// Switches off a fraction of house demand, pushing PV generation back to the grid.
pub fn apply_reverse_power_flow(
    sim: &mut SimOutput,
    spec: &AttackSpec,
    feeder: &FeederParams,
    seed: u64,
) -> Result<AttackLabels> {
    apply_kind(AttackKind::ReversePowerFlow, sim, spec, feeder, seed)
}

/// Re-solves the node phasor over the given intervals from current meter data.
pub fn recompute_node(sim: &mut SimOutput, feeder: &FeederParams, intervals: &[(usize, usize)]) -> Result<()> {
    let net_p: Vec<Vec<f64>> = sim.houses.iter().map(|h| column(&h.frame, NET_ACTIVE_POWER)).collect();
    let net_q: Vec<Vec<f64>> = sim.houses.iter().map(|h| column(&h.frame, NET_REACTIVE_POWER)).collect();
    for &(start, end) in intervals {
        let phasors = node_phasors(feeder, &net_p, &net_q, start..end)?;
        let mag = sim.node.channel_mut(VOLTAGE_MAGNITUDE)?;
        for (t, ph) in (start..end).zip(&phasors) {
            mag[t] = ph.magnitude;
        }
        let ang = sim.node.channel_mut(PHASE_ANGLE)?;
        for (t, ph) in (start..end).zip(&phasors) {
            ang[t] = ph.angle;
        }
    }
    Ok(())
}

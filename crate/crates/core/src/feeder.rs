//! Normal-operation data generator: synthetic weather and house loads,
//! rooftop PV output, net metering and the point-of-interconnect phasor from
//! a two-bus Thevenin equivalent of the feeder.
//!
//! Sign conventions: PV reactive power is positive when injected into the
//! grid. Net meter power is positive on import. A positive net injection at
//! the node raises its voltage magnitude and advances its angle; with X > 0
//! this also holds for reactive injection, i.e. a volt-var attack raises the
//! node magnitude in this model.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::timeseries::*;

pub const POWER_FLOW_TOLERANCE: f64 = 1e-10;
pub const POWER_FLOW_MAX_ITER: usize = 100;

/// Ratio of maximum solar power to total grid peak load.
pub fn solar_penetration(max_solar_power: f64, total_grid_peak_load: f64) -> Result<f64> {
    if total_grid_peak_load <= 0.0 {
        return Err(Error::ZeroPeakLoad);
    }
    Ok(max_solar_power / total_grid_peak_load)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasorSample {
    /// Per-unit magnitude.
    pub magnitude: f64,
    /// Degrees in (-180, 180].
    pub angle: f64,
}

impl PhasorSample {
    pub fn from_complex(v: Complex64) -> Self {
        Self { magnitude: v.norm(), angle: v.arg().to_degrees() }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.angle.to_radians())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impedance {
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeederParams {
    pub source_voltage: PhasorSample,
    pub series_impedance: Impedance,
    pub base_power_mva: f64,
    pub base_voltage_kv: f64,
}

impl Default for FeederParams {
    fn default() -> Self {
        Self {
            source_voltage: PhasorSample { magnitude: 1.0, angle: 0.0 },
            series_impedance: Impedance { r: 0.01, x: 0.05 },
            base_power_mva: 0.1,
            base_voltage_kv: 0.24,
        }
    }
}

impl FeederParams {
    pub fn validate(&self) -> Result<()> {
        let Impedance { r, x } = self.series_impedance;
        if !(self.source_voltage.magnitude > 0.0) {
            return Err(Error::InvalidScenario("source voltage magnitude must be positive".into()));
        }
        if r < 0.0 || x < 0.0 || (r == 0.0 && x == 0.0) {
            return Err(Error::InvalidScenario("series impedance needs R, X >= 0, not both 0".into()));
        }
        if !(self.base_power_mva > 0.0 && self.base_voltage_kv > 0.0) {
            return Err(Error::InvalidScenario("base power and voltage must be positive".into()));
        }
        Ok(())
    }

    fn impedance(&self) -> Complex64 {
        Complex64::new(self.series_impedance.r, self.series_impedance.x)
    }

    /// kW/kVAr to per-unit on this feeder's base.
    pub fn to_per_unit(&self, p_kw: f64, q_kvar: f64) -> Complex64 {
        Complex64::new(p_kw, q_kvar) / (self.base_power_mva * 1000.0)
    }
}

/// Node voltage for a net complex power injection (per unit) at the far bus.
///
/// Gauss fixed point on `V = Vs - Z * conj(S_drawn / V)` with `S_drawn = -injection`,
/// started from the source voltage so it lands on the high-voltage root.
pub fn solve_two_bus(net_injection: Complex64, feeder: &FeederParams) -> Result<PhasorSample> {
    let vs = feeder.source_voltage.to_complex();
    let z = feeder.impedance();
    let drawn = -net_injection;
    let mut v = vs;
    for _ in 0..POWER_FLOW_MAX_ITER {
        let next = vs - z * (drawn / v).conj();
        if !next.re.is_finite() || !next.im.is_finite() || next.norm() < 1e-6 {
            break;
        }
        if (next - v).norm() < POWER_FLOW_TOLERANCE {
            return Ok(PhasorSample::from_complex(next));
        }
        v = next;
    }
    Err(Error::PowerFlowDivergence { iterations: POWER_FLOW_MAX_ITER })
}

/// Active and reactive output (kW, kVAr) of a panel for the given irradiance.
///
/// Reactive power is positive (injected) when `lagging`.
pub fn pv_output(irradiance: f64, panel_rating: f64, power_factor: f64, lagging: bool) -> Result<(f64, f64)> {
    let pf = power_factor.abs();
    if !(pf > 0.0 && pf <= 1.0) {
        return Err(Error::InvalidPowerFactor(power_factor));
    }
    let p = panel_rating * (irradiance.max(0.0) / 1000.0).min(1.0);
    Ok((p, reactive_for(p, pf, lagging)))
}

/// `P * tan(arccos(pf))`, signed by the lead/lag flag.
pub fn reactive_for(p: f64, pf: f64, lagging: bool) -> f64 {
    if pf >= 1.0 {
        return 0.0;
    }
    let q = p * (1.0 - pf * pf).sqrt() / pf;
    if lagging {
        q
    } else {
        -q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherParams {
    /// Hours after midnight.
    pub sunrise: f64,
    pub sunset: f64,
    /// W/m².
    pub clear_sky_peak: f64,
    /// Events per daylight hour.
    pub cloud_event_rate: f64,
    /// Maximum fractional irradiance loss of one cloud.
    pub cloud_depth: f64,
    /// Mean cloud duration in minutes.
    pub cloud_minutes: f64,
    /// W/m².
    pub noise_std: f64,
}

impl Default for WeatherParams {
    fn default() -> Self {
        Self {
            sunrise: 6.0,
            sunset: 19.0,
            clear_sky_peak: 950.0,
            cloud_event_rate: 0.4,
            cloud_depth: 0.6,
            cloud_minutes: 12.0,
            noise_std: 8.0,
        }
    }
}

/// Residential demand: base + morning/evening Gaussian bumps + AR(1) noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub base_kw: f64,
    pub morning_kw: f64,
    pub morning_hour: f64,
    pub evening_kw: f64,
    pub evening_hour: f64,
    /// Standard deviation of each bump in hours.
    pub bump_width_h: f64,
    pub ar_coeff: f64,
    pub noise_kw: f64,
    pub power_factor: f64,
}

impl LoadProfile {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            base_kw: rng.random_range(0.4..0.9),
            morning_kw: rng.random_range(0.6..1.6),
            morning_hour: rng.random_range(6.5..8.5),
            evening_kw: rng.random_range(1.2..2.6),
            evening_hour: rng.random_range(18.0..20.5),
            bump_width_h: rng.random_range(0.8..1.6),
            ar_coeff: rng.random_range(0.9..0.98),
            noise_kw: rng.random_range(0.04..0.1),
            power_factor: rng.random_range(0.9..0.97),
        }
    }

    fn mean_kw(&self, hour: f64, day_scale: f64) -> f64 {
        let bump = |center: f64| (-0.5 * ((hour - center) / self.bump_width_h).powi(2)).exp();
        self.base_kw + day_scale * (self.morning_kw * bump(self.morning_hour) + self.evening_kw * bump(self.evening_hour))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvSystem {
    pub panel_rating_kw: f64,
    pub power_factor: f64,
    pub lagging: bool,
}

/// Everything that determines a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "defaults::n_houses")]
    pub n_houses: usize,
    #[serde(default = "defaults::pv_fraction")]
    pub pv_fraction: f64,
    #[serde(default = "defaults::days")]
    pub days: usize,
    /// Seconds.
    #[serde(default = "defaults::step")]
    pub step: i64,
    pub seed: u64,
    #[serde(default)]
    pub feeder: FeederParams,
    #[serde(default)]
    pub weather: WeatherParams,
    /// Mean panel rating; each installation varies by ±20 %.
    #[serde(default = "defaults::pv_rating_kw")]
    pub pv_rating_kw: f64,
    #[serde(default = "defaults::pv_power_factor")]
    pub pv_power_factor: f64,
    /// Explicit per-house profiles; drawn from the seed when absent.
    #[serde(default)]
    pub load_profiles: Option<Vec<LoadProfile>>,
}

mod defaults {
    pub fn n_houses() -> usize {
        20
    }
    pub fn pv_fraction() -> f64 {
        0.5
    }
    pub fn days() -> usize {
        8
    }
    pub fn step() -> i64 {
        60
    }
    pub fn pv_rating_kw() -> f64 {
        5.0
    }
    pub fn pv_power_factor() -> f64 {
        1.0
    }
}

impl Scenario {
    /// 20 houses, half with PV, 8 days at 1-minute resolution.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            n_houses: defaults::n_houses(),
            pv_fraction: defaults::pv_fraction(),
            days: defaults::days(),
            step: defaults::step(),
            seed,
            feeder: FeederParams::default(),
            weather: WeatherParams::default(),
            pv_rating_kw: defaults::pv_rating_kw(),
            pv_power_factor: defaults::pv_power_factor(),
            load_profiles: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidScenario(m.to_string()));
        if self.n_houses == 0 {
            return bad("n_houses must be at least 1");
        }
        if self.days == 0 {
            return bad("days must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.pv_fraction) {
            return bad("pv_fraction must be in [0, 1]");
        }
        if self.step <= 0 || 86_400 % self.step != 0 {
            return bad("step must be a positive divisor of one day");
        }
        if !(self.weather.sunrise < self.weather.sunset) {
            return bad("sunrise must precede sunset");
        }
        if self.pv_rating_kw < 0.0 {
            return bad("pv_rating_kw must be non-negative");
        }
        if let Some(p) = &self.load_profiles {
            if p.len() != self.n_houses {
                return bad("load_profiles must list one profile per house");
            }
        }
        let pf = self.pv_power_factor;
        if !(pf > 0.0 && pf <= 1.0) {
            return Err(Error::InvalidPowerFactor(pf));
        }
        self.feeder.validate()
    }

    pub fn steps_per_day(&self) -> usize {
        (86_400 / self.step) as usize
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_day() * self.days
    }

    /// Indices of houses with rooftop PV (seeded choice).
    pub fn pv_houses(&self) -> Vec<bool> {
        let n_pv = (self.pv_fraction * self.n_houses as f64).round() as usize;
        let mut order: Vec<usize> = (0..self.n_houses).collect();
        order.shuffle(&mut rng::stream(self.seed, Purpose::PvAssignment, 0));
        let mut has_pv = vec![false; self.n_houses];
        for &h in &order[..n_pv] {
            has_pv[h] = true;
        }
        has_pv
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct House {
    pub id: usize,
    pub pv: Option<PvSystem>,
    /// PV and Load channels.
    pub frame: TimeSeriesFrame,
}

impl House {
    pub fn has_pv(&self) -> bool {
        self.pv.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub houses: Vec<House>,
    /// Node channels.
    pub node: TimeSeriesFrame,
}

/// Clear-sky sine clamped to daylight, with Poisson cloud dips and sensor noise.
pub fn irradiance_series(scenario: &Scenario) -> Vec<f64> {
    let w = &scenario.weather;
    let mut rng = rng::stream(scenario.seed, Purpose::Weather, 0);
    let steps_per_day = scenario.steps_per_day();
    let step_h = scenario.step as f64 / 3600.0;
    let noise = Normal::new(0.0, w.noise_std.max(0.0)).expect("finite std");
    let duration = Exp::new(1.0 / w.cloud_minutes.max(1e-3)).expect("positive rate");
    let daylight = w.sunset - w.sunrise;
    let mut out = Vec::with_capacity(scenario.total_steps());
    for _ in 0..scenario.days {
        let clearness = rng.random_range(0.85..1.0);
        // (start hour, end hour, depth)
        let mut clouds = Vec::new();
        let expected = w.cloud_event_rate * daylight;
        let count = if expected > 0.0 {
            Poisson::new(expected).expect("positive mean").sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..count {
            let start = w.sunrise + rng.random::<f64>() * daylight;
            let len_h = duration.sample(&mut rng) / 60.0;
            let depth = w.cloud_depth * rng.random_range(0.3..1.0);
            clouds.push((start, start + len_h, depth));
        }
        for s in 0..steps_per_day {
            let hour = s as f64 * step_h;
            let eps = noise.sample(&mut rng);
            if hour <= w.sunrise || hour >= w.sunset {
                out.push(0.0);
                continue;
            }
            let clear = w.clear_sky_peak * clearness * (std::f64::consts::PI * (hour - w.sunrise) / daylight).sin();
            let dip = clouds
                .iter()
                .filter(|(a, b, _)| hour >= *a && hour < *b)
                .map(|c| c.2)
                .fold(0.0, f64::max);
            out.push((clear * (1.0 - dip) + eps).max(0.0));
        }
    }
    out
}

struct HouseSeries {
    demand_p: Vec<f64>,
    demand_q: Vec<f64>,
}

fn house_demand(scenario: &Scenario, profile: &LoadProfile, house: usize) -> HouseSeries {
    let mut rng = rng::stream(scenario.seed, Purpose::HouseLoad, house as u64);
    let steps_per_day = scenario.steps_per_day();
    let step_h = scenario.step as f64 / 3600.0;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let innovation = (1.0 - profile.ar_coeff * profile.ar_coeff).max(0.0).sqrt();
    let tan_phi = (1.0 - profile.power_factor.powi(2)).sqrt() / profile.power_factor;
    let (mut ar_p, mut ar_q) = (0.0, 0.0);
    let n = scenario.total_steps();
    let mut demand_p = Vec::with_capacity(n);
    let mut demand_q = Vec::with_capacity(n);
    for _ in 0..scenario.days {
        let day_scale = rng.random_range(0.8..1.2);
        for s in 0..steps_per_day {
            let hour = s as f64 * step_h;
            ar_p = profile.ar_coeff * ar_p + innovation * unit.sample(&mut rng);
            ar_q = profile.ar_coeff * ar_q + innovation * unit.sample(&mut rng);
            let p = (profile.mean_kw(hour, day_scale) + profile.noise_kw * ar_p).max(0.0);
            let q = (p * tan_phi + 0.5 * profile.noise_kw * ar_q).max(0.0);
            demand_p.push(p);
            demand_q.push(q);
        }
    }
    HouseSeries { demand_p, demand_q }
}

/// Runs the scenario: per-house PV/Load frames and the node phasor frame.
pub fn simulate(scenario: &Scenario) -> Result<SimOutput> {
    scenario.validate()?;
    let n = scenario.total_steps();
    let irradiance = irradiance_series(scenario);
    let has_pv = scenario.pv_houses();

    let mut demands = Vec::with_capacity(scenario.n_houses);
    let mut systems = Vec::with_capacity(scenario.n_houses);
    for h in 0..scenario.n_houses {
        let mut params = rng::stream(scenario.seed, Purpose::HouseParams, h as u64);
        let drawn = LoadProfile::random(&mut params);
        let profile = scenario.load_profiles.as_ref().map_or(drawn, |p| p[h]);
        let rating = scenario.pv_rating_kw * params.random_range(0.8..1.2);
        systems.push(has_pv[h].then_some(PvSystem {
            panel_rating_kw: rating,
            power_factor: scenario.pv_power_factor,
            lagging: true,
        }));
        demands.push(house_demand(scenario, &profile, h));
    }

    let mut pv_p = vec![vec![0.0; n]; scenario.n_houses];
    let mut pv_q = vec![vec![0.0; n]; scenario.n_houses];
    let mut net_p = vec![vec![0.0; n]; scenario.n_houses];
    let mut net_q = vec![vec![0.0; n]; scenario.n_houses];
    for h in 0..scenario.n_houses {
        for t in 0..n {
            if let Some(sys) = systems[h] {
                let (p, q) = pv_output(irradiance[t], sys.panel_rating_kw, sys.power_factor, sys.lagging)?;
                pv_p[h][t] = p;
                pv_q[h][t] = q;
            }
            net_p[h][t] = demands[h].demand_p[t] - pv_p[h][t];
            net_q[h][t] = demands[h].demand_q[t] - pv_q[h][t];
        }
    }

    let node = node_phasors(&scenario.feeder, &net_p, &net_q, 0..n)?;
    let volts: Vec<f64> = node.iter().map(|ph| ph.magnitude * scenario.feeder.base_voltage_kv * 1000.0).collect();

    let houses = (0..scenario.n_houses)
        .map(|h| {
            let current: Vec<f64> = (0..n).map(|t| pv_current(pv_p[h][t], pv_q[h][t], volts[t])).collect();
            let frame = TimeSeriesFrame::new(
                0,
                scenario.step,
                vec![
                    (IRRADIANCE.into(), irradiance.clone()),
                    (PV_ACTIVE_POWER.into(), pv_p[h].clone()),
                    (PV_REACTIVE_POWER.into(), pv_q[h].clone()),
                    (PV_VOLTAGE.into(), volts.clone()),
                    (PV_CURRENT.into(), current),
                    (NET_ACTIVE_POWER.into(), net_p[h].clone()),
                    (NET_REACTIVE_POWER.into(), net_q[h].clone()),
                ],
            )?;
            Ok(House { id: h, pv: systems[h], frame })
        })
        .collect::<Result<Vec<_>>>()?;

    let node = TimeSeriesFrame::new(
        0,
        scenario.step,
        vec![
            (VOLTAGE_MAGNITUDE.into(), node.iter().map(|p| p.magnitude).collect()),
            (PHASE_ANGLE.into(), node.iter().map(|p| p.angle).collect()),
        ],
    )?;
    Ok(SimOutput { houses, node })
}

/// Inverter current in amperes for kW/kVAr output at a terminal voltage in volts.
pub fn pv_current(p_kw: f64, q_kvar: f64, volts: f64) -> f64 {
    if volts <= 0.0 {
        return 0.0;
    }
    (p_kw * p_kw + q_kvar * q_kvar).sqrt() * 1000.0 / volts
}

/// Solves the node phasor at each timestep in `steps` from per-house net meter power.
pub fn node_phasors(
    feeder: &FeederParams,
    net_p: &[Vec<f64>],
    net_q: &[Vec<f64>],
    steps: std::ops::Range<usize>,
) -> Result<Vec<PhasorSample>> {
    steps
        .map(|t| {
            let (p, q) = net_p
                .iter()
                .zip(net_q)
                .fold((0.0, 0.0), |(p, q), (hp, hq)| (p + hp[t], q + hq[t]));
            solve_two_bus(-feeder.to_per_unit(p, q), feeder)
        })
        .collect()
}

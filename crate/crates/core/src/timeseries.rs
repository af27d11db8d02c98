//! Measurement data model: uniformly sampled multichannel frames, the three
//! channel groups monitored at each house, standardization, sliding windows
//! and CSV ingestion.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IRRADIANCE: &str = "irradiance";
pub const PV_ACTIVE_POWER: &str = "pv_active_power";
pub const PV_REACTIVE_POWER: &str = "pv_reactive_power";
pub const PV_VOLTAGE: &str = "pv_voltage";
pub const PV_CURRENT: &str = "pv_current";
pub const NET_ACTIVE_POWER: &str = "net_active_power";
pub const NET_REACTIVE_POWER: &str = "net_reactive_power";
pub const VOLTAGE_MAGNITUDE: &str = "voltage_magnitude";
pub const PHASE_ANGLE: &str = "phase_angle";

/// Default sampling step in seconds.
pub const DEFAULT_STEP: i64 = 60;

/// Standard deviations below this are replaced by it.
pub const STD_FLOOR: f64 = 1e-8;

/// Uniformly sampled measurements. Timestamps are integer seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    start_time: i64,
    step: i64,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl TimeSeriesFrame {
    pub fn new(start_time: i64, step: i64, channels: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if step <= 0 {
            return Err(Error::InvalidFrame(format!("step must be positive, got {step}")));
        }
        let mut seen = HashSet::new();
        let mut len = None;
        for (name, values) in &channels {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidFrame(format!("duplicate channel `{name}`")));
            }
            match len {
                None => len = Some(values.len()),
                Some(l) if l != values.len() => {
                    return Err(Error::InvalidFrame(format!(
                        "channel `{name}` has {} values, expected {l}",
                        values.len()
                    )))
                }
                _ => {}
            }
            if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue { row: row + 1, channel: name.clone() });
            }
        }
        let (names, columns) = channels.into_iter().unzip();
        Ok(Self { start_time, step, names, columns })
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn start_time(&self) -> i64 {
        self.start_time
    }

    pub fn step(&self) -> i64 {
        self.step
    }

    pub fn timestamp(&self, index: usize) -> i64 {
        self.start_time + self.step * index as i64
    }

    pub fn channel_names(&self) -> &[String] {
        &self.names
    }

    pub fn has_channel(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    }

    pub fn channel(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.index_of(name)?])
    }

    /// Mutable access for in-place transformations; callers must keep values finite.
    pub fn channel_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let i = self.index_of(name)?;
        Ok(&mut self.columns[i])
    }

    pub fn channels(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names.iter().map(String::as_str).zip(self.columns.iter().map(Vec::as_slice))
    }

    /// New frame containing only `names`, in that order.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let channels = names
            .iter()
            .map(|n| Ok((n.as_ref().to_string(), self.channel(n.as_ref())?.to_vec())))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.start_time, self.step, channels)
    }

    /// Timesteps `[start, end)` as a new frame.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let end = end.min(self.len());
        let start = start.min(end);
        Self {
            start_time: self.timestamp(start),
            step: self.step,
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[start..end].to_vec()).collect(),
        }
    }

    /// Row-major matrix (timesteps × channels) of the named channels.
    pub fn to_matrix<S: AsRef<str>>(&self, names: &[S]) -> Result<Array2<f64>> {
        let cols = names
            .iter()
            .map(|n| self.channel(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let len = self.len();
        Ok(Array2::from_shape_fn((len, cols.len()), |(t, c)| cols[c][t]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Pv,
    Load,
    Node,
}

/// Named partition of channels feeding one of the three per-house models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelGroup {
    pub kind: GroupKind,
    pub channel_names: Vec<String>,
}

impl ChannelGroup {
    pub fn for_kind(kind: GroupKind) -> Self {
        let names: &[&str] = match kind {
            GroupKind::Pv => &[IRRADIANCE, PV_ACTIVE_POWER, PV_REACTIVE_POWER, PV_VOLTAGE, PV_CURRENT],
            GroupKind::Load => &[NET_ACTIVE_POWER, NET_REACTIVE_POWER],
            GroupKind::Node => &[VOLTAGE_MAGNITUDE, PHASE_ANGLE],
        };
        Self { kind, channel_names: names.iter().map(|s| s.to_string()).collect() }
    }

    pub fn pv() -> Self {
        Self::for_kind(GroupKind::Pv)
    }

    pub fn load() -> Self {
        Self::for_kind(GroupKind::Load)
    }

    pub fn node() -> Self {
        Self::for_kind(GroupKind::Node)
    }

    /// PV and Load channels, the per-house measurement set.
    pub fn house() -> Vec<Self> {
        vec![Self::pv(), Self::load()]
    }
}

/// Per-channel z-scoring fitted on normal data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
}

impl Standardizer {
    /// Sample mean and (n-1) standard deviation of every column.
    pub fn fit(data: ArrayView2<'_, f64>) -> Result<Self> {
        let n = data.nrows();
        if n < 2 {
            return Err(Error::EmptyFrame);
        }
        let mut means = Vec::with_capacity(data.ncols());
        let mut std_devs = Vec::with_capacity(data.ncols());
        for col in data.axis_iter(Axis(1)) {
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            means.push(mean);
            std_devs.push(var.sqrt().max(STD_FLOOR));
        }
        Ok(Self { means, std_devs })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform(&self, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(data.ncols())?;
        let mut out = data.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.std_devs[j];
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(data.ncols())?;
        let mut out = data.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.std_devs[j] + self.means[j];
            }
        }
        Ok(out)
    }

    pub fn transform_value(&self, channel: usize, value: f64) -> f64 {
        (value - self.means[channel]) / self.std_devs[channel]
    }

    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: cols });
        }
        Ok(())
    }
}

/// Fits a standardizer over every channel of `frame`.
pub fn fit_standardizer(frame: &TimeSeriesFrame) -> Result<Standardizer> {
    let names = frame.channel_names().to_vec();
    Standardizer::fit(frame.to_matrix(&names)?.view())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_len: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { window_len: 15, stride: 1 }
    }
}

impl WindowSpec {
    pub fn new(window_len: usize, stride: usize) -> Result<Self> {
        if window_len == 0 || stride == 0 {
            return Err(Error::InvalidParameter("window_len and stride must be at least 1".into()));
        }
        Ok(Self { window_len, stride })
    }

    /// Number of windows with an in-frame target.
    pub fn count(&self, len: usize) -> usize {
        if len <= self.window_len {
            0
        } else {
            (len - self.window_len - 1) / self.stride + 1
        }
    }
}

/// A window of consecutive rows and the timestep right after it.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub data: Array2<f64>,
    pub target_index: usize,
}

pub fn make_windows(frame: &TimeSeriesFrame, spec: WindowSpec) -> Result<Vec<Window>> {
    let names = frame.channel_names().to_vec();
    make_windows_matrix(frame.to_matrix(&names)?.view(), spec)
}

/// Window `i` covers rows `[i*stride, i*stride + window_len)`; its target is the next row.
pub fn make_windows_matrix(data: ArrayView2<'_, f64>, spec: WindowSpec) -> Result<Vec<Window>> {
    let len = data.nrows();
    if len < spec.window_len {
        return Err(Error::FrameTooShort { len, window_len: spec.window_len });
    }
    Ok((0..spec.count(len))
        .map(|i| {
            let start = i * spec.stride;
            Window {
                data: data.slice(ndarray::s![start..start + spec.window_len, ..]).to_owned(),
                target_index: start + spec.window_len,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Replace missing or non-finite values with the previous value of the channel.
    pub impute: bool,
}

pub fn ingest_csv(path: &Path, schema: &[ChannelGroup], opts: IngestOptions) -> Result<TimeSeriesFrame> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema, opts)
}

/// Parses a CSV whose first column holds timestamps (integer seconds or
/// ISO-8601). Only the channels named in `schema` are kept.
pub fn read_csv<R: Read>(reader: R, schema: &[ChannelGroup], opts: IngestOptions) -> Result<TimeSeriesFrame> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::InvalidFrame("empty header".into()));
    }
    let wanted: Vec<String> = schema.iter().flat_map(|g| g.channel_names.iter().cloned()).collect();
    let mut col_index = Vec::with_capacity(wanted.len());
    for name in &wanted {
        let idx = headers
            .iter()
            .skip(1)
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingChannel(name.clone()))?;
        col_index.push(idx + 1);
    }

    // (timestamp, file row, values)
    let mut rows: Vec<(i64, usize, Vec<Option<f64>>)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let ts = parse_timestamp(record.get(0).unwrap_or(""))?;
        let mut values = Vec::with_capacity(col_index.len());
        for (k, &c) in col_index.iter().enumerate() {
            let raw = record.get(c).unwrap_or("").trim();
            let v = raw.parse::<f64>().ok().filter(|v| v.is_finite());
            if v.is_none() && !opts.impute {
                return Err(Error::NonFiniteValue { row, channel: wanted[k].clone() });
            }
            values.push(v);
        }
        rows.push((ts, row, values));
    }
    rows.sort_by_key(|r| r.0);

    let step = if rows.len() >= 2 { rows[1].0 - rows[0].0 } else { DEFAULT_STEP };
    for w in 1..rows.len() {
        let gap = rows[w].0 - rows[w - 1].0;
        if gap != step || gap <= 0 {
            return Err(Error::NonUniformSampling { row: rows[w].1, gap, expected: step });
        }
    }

    let mut columns = vec![Vec::with_capacity(rows.len()); wanted.len()];
    for (_, row, values) in &rows {
        for (k, v) in values.iter().enumerate() {
            let v = match v {
                Some(v) => *v,
                None => *columns[k]
                    .last()
                    .ok_or_else(|| Error::NonFiniteValue { row: *row, channel: wanted[k].clone() })?,
            };
            columns[k].push(v);
        }
    }
    let start = rows.first().map_or(0, |r| r.0);
    TimeSeriesFrame::new(start, step, wanted.into_iter().zip(columns).collect())
}

fn parse_timestamp(raw: &str) -> Result<i64> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Ok(secs);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(dt.and_utc().timestamp());
        }
    }
    Err(Error::BadTimestamp(raw.to_string()))
}

/// Writes `timestamp,<channels...>` with integer-second timestamps and
/// shortest round-trip float formatting.
pub fn write_csv<W: Write>(frame: &TimeSeriesFrame, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string()];
    header.extend(frame.channel_names().iter().cloned());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for t in 0..frame.len() {
        record.clear();
        record.push(frame.timestamp(t).to_string());
        for (_, values) in frame.channels() {
            record.push(values[t].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(frame: &TimeSeriesFrame, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(frame, file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn pv_schema() -> Vec<ChannelGroup> {
        vec![ChannelGroup { kind: GroupKind::Pv, channel_names: vec![PV_ACTIVE_POWER.into()] }]
    }

    #[test]
    fn ingest_three_rows() {
        let csv = "t,pv_active_power\n0,1.5\n60,2.5\n120,3.5\n";
        let f = read_csv(csv.as_bytes(), &pv_schema(), IngestOptions::default()).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.step(), 60);
        assert_eq!(f.channel(PV_ACTIVE_POWER).unwrap(), &[1.5, 2.5, 3.5]);
    }

    #[test]
    fn ingest_sorts_rows_and_parses_iso() {
        let csv = "timestamp,pv_active_power\n2024-09-01T00:02:00Z,3\n2024-09-01T00:00:00Z,1\n2024-09-01 00:01:00,2\n";
        let f = read_csv(csv.as_bytes(), &pv_schema(), IngestOptions::default()).unwrap();
        assert_eq!(f.channel(PV_ACTIVE_POWER).unwrap(), &[1.0, 2.0, 3.0]);
        assert_eq!(f.step(), 60);
    }

    #[test]
    fn ingest_rejects_gap() {
        let csv = "t,pv_active_power\n0,1\n60,2\n180,3\n";
        let err = read_csv(csv.as_bytes(), &pv_schema(), IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonUniformSampling { gap: 120, .. }), "{err}");
    }

    #[test]
    fn ingest_rejects_nan_with_row_and_channel() {
        let mut csv = String::from("timestamp,pv_voltage\n");
        for i in 0..6 {
            let v = if i == 4 { "NaN".to_string() } else { "240".to_string() };
            csv.push_str(&format!("{},{}\n", i * 60, v));
        }
        let schema = vec![ChannelGroup { kind: GroupKind::Pv, channel_names: vec![PV_VOLTAGE.into()] }];
        match read_csv(csv.as_bytes(), &schema, IngestOptions::default()).unwrap_err() {
            Error::NonFiniteValue { row, channel } => {
                assert_eq!(row, 5);
                assert_eq!(channel, PV_VOLTAGE);
            }
            e => panic!("unexpected {e}"),
        }
        let f = read_csv(csv.as_bytes(), &schema, IngestOptions { impute: true }).unwrap();
        assert_eq!(f.channel(PV_VOLTAGE).unwrap()[4], 240.0);
    }

    #[test]
    fn ingest_missing_channel() {
        let csv = "t,other\n0,1\n";
        let err = read_csv(csv.as_bytes(), &pv_schema(), IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingChannel(ref c) if c == PV_ACTIVE_POWER));
    }

    #[test]
    fn frame_rejects_ragged_and_duplicate_channels() {
        assert!(TimeSeriesFrame::new(0, 60, vec![("a".into(), vec![1.0]), ("b".into(), vec![])]).is_err());
        assert!(TimeSeriesFrame::new(0, 60, vec![("a".into(), vec![1.0]), ("a".into(), vec![1.0])]).is_err());
        assert!(TimeSeriesFrame::new(0, 0, vec![]).is_err());
    }

    #[test]
    fn standardizer_two_points() {
        let s = Standardizer::fit(array![[1.0], [3.0]].view()).unwrap();
        assert_eq!(s.means[0], 2.0);
        assert!((s.std_devs[0] - 2f64.sqrt()).abs() < 1e-15);
        let z = s.transform(array![[1.0], [3.0]].view()).unwrap();
        assert!((z[[0, 0]] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
        assert!((z[[1, 0]] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
    }

    #[test]
    fn standardizer_constant_channel_is_floored() {
        let s = Standardizer::fit(array![[5.0], [5.0], [5.0]].view()).unwrap();
        assert_eq!(s.std_devs[0], STD_FLOOR);
        let z = s.transform(array![[5.0], [5.0]].view()).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn standardizer_needs_two_rows() {
        assert!(matches!(Standardizer::fit(array![[1.0]].view()), Err(Error::EmptyFrame)));
    }

    #[test]
    fn standardized_data_has_unit_moments() {
        let data = Array2::from_shape_fn((200, 3), |(i, j)| ((i * 7 + j * 13) % 17) as f64 * (j + 1) as f64);
        let s = Standardizer::fit(data.view()).unwrap();
        let z = s.transform(data.view()).unwrap();
        let s2 = Standardizer::fit(z.view()).unwrap();
        for j in 0..3 {
            assert!(s2.means[j].abs() < 1e-9);
            assert!((s2.std_devs[j] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn window_examples() {
        let frame = |len: usize| {
            TimeSeriesFrame::new(0, 60, vec![("x".into(), (0..len).map(|v| v as f64).collect())]).unwrap()
        };
        let w = make_windows(&frame(20), WindowSpec::new(15, 1).unwrap()).unwrap();
        assert_eq!(w.iter().map(|w| w.target_index).collect::<Vec<_>>(), vec![15, 16, 17, 18, 19]);
        assert!(make_windows(&frame(15), WindowSpec::new(15, 1).unwrap()).unwrap().is_empty());
        let w = make_windows(&frame(17), WindowSpec::new(15, 2).unwrap()).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].target_index, 15);
        assert_eq!(w[0].data[[14, 0]], 14.0);
        assert!(matches!(
            make_windows(&frame(10), WindowSpec::default()),
            Err(Error::FrameTooShort { .. })
        ));
    }

    #[test]
    fn window_count_matches_enumeration() {
        for len in 1..=50usize {
            for wl in 1..=len {
                for stride in 1..=5 {
                    let spec = WindowSpec::new(wl, stride).unwrap();
                    let brute = (0..len).step_by(stride).filter(|s| s + wl < len).count();
                    assert_eq!(spec.count(len), brute, "len {len} wl {wl} stride {stride}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn csv_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 1..40), start in 0i64..100_000) {
            let frame = TimeSeriesFrame::new(start, 60, vec![
                (PV_ACTIVE_POWER.into(), values.clone()),
                (PV_VOLTAGE.into(), values.iter().map(|v| v * 0.37).collect()),
            ]).unwrap();
            let mut buf = Vec::new();
            write_csv(&frame, &mut buf).unwrap();
            let schema = vec![ChannelGroup { kind: GroupKind::Pv, channel_names: vec![PV_ACTIVE_POWER.into(), PV_VOLTAGE.into()] }];
            let back = read_csv(buf.as_slice(), &schema, IngestOptions::default()).unwrap();
            prop_assert_eq!(back.channel(PV_ACTIVE_POWER).unwrap(), frame.channel(PV_ACTIVE_POWER).unwrap());
            prop_assert_eq!(back.channel(PV_VOLTAGE).unwrap(), frame.channel(PV_VOLTAGE).unwrap());
            prop_assert_eq!(back.start_time(), start);
        }

        #[test]
        fn standardize_inverse_is_identity(values in proptest::collection::vec(-1e3f64..1e3, 3..30)) {
            let data = Array2::from_shape_vec((values.len(), 1), values).unwrap();
            let s = Standardizer::fit(data.view()).unwrap();
            prop_assume!(s.std_devs[0] > 1e-3);
            let back = s.inverse_transform(s.transform(data.view()).unwrap().view()).unwrap();
            for (a, b) in data.iter().zip(back.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

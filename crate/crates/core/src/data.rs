//! Hourly load series: ingestion, validation, gap repair, calendar splits,
//! evaluation windows and a synthetic generator.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Canonical timestamp text format, `YYYY-MM-DD HH:MM`.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M";

/// Header line of the load CSV schema.
pub const CSV_HEADER: [&str; 3] = ["timestamp", "building_id", "consumption_kwh"];

pub const DEFAULT_MAX_GAP_HOURS: usize = 3;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate timestamp {timestamp} for building {building}")]
    DuplicateTimestamp { building: String, timestamp: String },
    #[error("negative consumption {value} at line {line}")]
    NegativeConsumption { line: u64, value: f64 },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("records of building {building} are not strictly increasing at {timestamp}")]
    NotChronological { building: String, timestamp: String },
    #[error("series {building} is not hourly-continuous between {from} and {to}")]
    NotHourly { building: String, from: String, to: String },
    #[error("gap of {missing_hours} missing hours between {from} and {to} exceeds the limit of {max_gap_hours}")]
    GapTooLarge {
        from: String,
        to: String,
        missing_hours: i64,
        max_gap_hours: usize,
    },
    #[error("series spans {available} calendar months, {needed} required")]
    InsufficientSpan { needed: usize, available: usize },
    #[error("invalid window specification: {0}")]
    InvalidWindowSpec(String),
    #[error("invalid synthetic configuration: {0}")]
    InvalidSynthConfig(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// Parses `YYYY-MM-DD HH:MM` and requires the minute to be zero.
pub fn parse_timestamp(text: &str) -> Result<NaiveDateTime, String> {
    let ts = NaiveDateTime::parse_from_str(text.trim(), TIMESTAMP_FORMAT)
        .map_err(|e| format!("unparseable timestamp {text:?}: {e}"))?;
    if ts.minute() != 0 {
        return Err(format!("timestamp {text:?} is not on the hour"));
    }
    Ok(ts)
}

/// Serde adapter for timestamps in the canonical text format.
pub mod timestamp_serde {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_timestamp(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_timestamp(&text).map_err(serde::de::Error::custom)
    }
}

/// One hourly consumption reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadRecord {
    timestamp: NaiveDateTime,
    consumption: f64,
}

impl LoadRecord {
    pub fn new(timestamp: NaiveDateTime, consumption: f64) -> Result<Self, DataError> {
        if !consumption.is_finite() || consumption < 0.0 {
            return Err(DataError::InvalidRecord(format!(
                "consumption {consumption} must be finite and non-negative"
            )));
        }
        if timestamp.minute() != 0 || timestamp.second() != 0 || timestamp.nanosecond() != 0 {
            return Err(DataError::InvalidRecord(format!(
                "timestamp {timestamp} is not on the hour"
            )));
        }
        Ok(Self {
            timestamp,
            consumption,
        })
    }

    pub fn timestamp(&self) -> NaiveDateTime {
        self.timestamp
    }

    /// Energy in kWh.
    pub fn consumption(&self) -> f64 {
        self.consumption
    }
}

/// A single building's consumption history with strictly increasing timestamps.
///
/// Hourly continuity is not enforced on construction because freshly ingested
/// data may contain gaps; [`repair_gaps`] produces a continuous series and
/// [`LoadSeries::check_hourly`] verifies one.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSeries {
    building_id: String,
    records: Vec<LoadRecord>,
}

impl LoadSeries {
    pub fn new(building_id: impl Into<String>, records: Vec<LoadRecord>) -> Result<Self, DataError> {
        let building_id = building_id.into();
        if let Some(w) = records.windows(2).find(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(DataError::NotChronological {
                building: building_id,
                timestamp: format_timestamp(&w[1].timestamp),
            });
        }
        Ok(Self {
            building_id,
            records,
        })
    }

    /// Builds a continuous hourly series from consecutive values.
    pub fn from_values(
        building_id: impl Into<String>,
        start: NaiveDateTime,
        values: &[f64],
    ) -> Result<Self, DataError> {
        let records = values
            .iter()
            .enumerate()
            .map(|(i, &v)| LoadRecord::new(start + Duration::hours(i as i64), v))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(building_id, records)
    }

    pub fn building_id(&self) -> &str {
        &self.building_id
    }

    pub fn records(&self) -> &[LoadRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(LoadRecord::consumption).collect()
    }

    pub fn first_timestamp(&self) -> Option<NaiveDateTime> {
        self.records.first().map(LoadRecord::timestamp)
    }

    pub fn last_timestamp(&self) -> Option<NaiveDateTime> {
        self.records.last().map(LoadRecord::timestamp)
    }

    /// Consumption at an exact timestamp, if present.
    pub fn value_at(&self, ts: NaiveDateTime) -> Option<f64> {
        self.records
            .binary_search_by(|r| r.timestamp.cmp(&ts))
            .ok()
            .map(|i| self.records[i].consumption)
    }

    pub fn check_hourly(&self) -> Result<(), DataError> {
        match self
            .records
            .windows(2)
            .find(|w| w[1].timestamp - w[0].timestamp != Duration::hours(1))
        {
            Some(w) => Err(DataError::NotHourly {
                building: self.building_id.clone(),
                from: format_timestamp(&w[0].timestamp),
                to: format_timestamp(&w[1].timestamp),
            }),
            None => Ok(()),
        }
    }
}

/// Chronological train / validation / test partition of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: LoadSeries,
    pub val: LoadSeries,
    pub test: LoadSeries,
}

/// Calendar-month split sizes. The default mirrors 22 training months, one
/// validation month and one test month.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonthSplit {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for MonthSplit {
    fn default() -> Self {
        Self {
            train: 22,
            val: 1,
            test: 1,
        }
    }
}

impl std::str::FromStr for MonthSplit {
    type Err = String;

    /// Parses `TRAIN,VAL,TEST`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("bad month split {s:?}: {e}"))?;
        match parts[..] {
            [train, val, test] => Ok(Self { train, val, test }),
            _ => Err(format!("month split {s:?} needs three comma-separated counts")),
        }
    }
}

impl fmt::Display for MonthSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.train, self.val, self.test)
    }
}

/// Observation length, horizon and stride for evaluation windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    n: usize,
    m: usize,
    stride: usize,
}

impl WindowSpec {
    pub fn new(n: usize, m: usize, stride: usize) -> Result<Self, DataError> {
        if n == 0 || m == 0 || stride == 0 {
            return Err(DataError::InvalidWindowSpec(format!(
                "n={n}, m={m}, stride={stride}: all must be at least 1"
            )));
        }
        Ok(Self { n, m, stride })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Number of windows a series of `len` records yields.
    pub fn count(&self, len: usize) -> usize {
        if len < self.n + self.m {
            0
        } else {
            (len - self.n - self.m) / self.stride + 1
        }
    }
}

/// An observation of `n` records and the `m` records that follow it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowPair<'a> {
    pub observation: &'a [LoadRecord],
    pub target: &'a [LoadRecord],
}

impl WindowPair<'_> {
    pub fn target_values(&self) -> Vec<f64> {
        self.target.iter().map(LoadRecord::consumption).collect()
    }

    pub fn start(&self) -> NaiveDateTime {
        self.target[0].timestamp
    }
}

/// Reads the load CSV and groups rows by building, each group sorted by time.
///
/// Hourly gaps are allowed here; run [`repair_gaps`] before windowing.
pub fn ingest_csv<R: Read>(source: R) -> Result<BTreeMap<String, LoadSeries>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);

    let mut grouped: BTreeMap<String, BTreeMap<NaiveDateTime, f64>> = BTreeMap::new();
    let mut seen_header = false;
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if !seen_header {
            if row.iter().ne(CSV_HEADER.iter().copied()) {
                return Err(DataError::MalformedRow {
                    line,
                    reason: format!("expected header {:?}", CSV_HEADER.join(",")),
                });
            }
            seen_header = true;
            continue;
        }
        if row.len() != 3 {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("expected 3 columns, found {}", row.len()),
            });
        }
        let timestamp =
            parse_timestamp(&row[0]).map_err(|reason| DataError::MalformedRow { line, reason })?;
        let building = row[1].trim();
        if building.is_empty() {
            return Err(DataError::MalformedRow {
                line,
                reason: "empty building_id".into(),
            });
        }
        let value: f64 = row[2]
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| DataError::MalformedRow {
                line,
                reason: format!("unparseable consumption {:?}", &row[2]),
            })?;
        if value < 0.0 {
            return Err(DataError::NegativeConsumption { line, value });
        }
        match grouped
            .entry(building.to_string())
            .or_default()
            .entry(timestamp)
        {
            Entry::Occupied(_) => {
                return Err(DataError::DuplicateTimestamp {
                    building: building.to_string(),
                    timestamp: format_timestamp(&timestamp),
                })
            }
            Entry::Vacant(slot) => {
                slot.insert(value);
            }
        }
    }
    if !seen_header {
        return Err(DataError::MalformedRow {
            line: 1,
            reason: "missing header".into(),
        });
    }

    grouped
        .into_iter()
        .map(|(building, rows)| {
            let records = rows
                .into_iter()
                .map(|(ts, v)| LoadRecord::new(ts, v))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((building.clone(), LoadSeries::new(building, records)?))
        })
        .collect()
}

/// Writes series in the load CSV schema, building by building.
pub fn write_csv<'a, W, I>(sink: W, series: I) -> Result<(), DataError>
where
    W: Write,
    I: IntoIterator<Item = &'a LoadSeries>,
{
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    writer.write_record(CSV_HEADER)?;
    for s in series {
        for r in s.records() {
            writer.write_record([
                format_timestamp(&r.timestamp),
                s.building_id.clone(),
                r.consumption.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Fills gaps of at most `max_gap_hours` missing hours by linear interpolation.
pub fn repair_gaps(series: &LoadSeries, max_gap_hours: usize) -> Result<LoadSeries, DataError> {
    let mut out = Vec::with_capacity(series.len());
    for (i, rec) in series.records.iter().enumerate() {
        if let Some(prev) = i.checked_sub(1).map(|j| series.records[j]) {
            let missing = (rec.timestamp - prev.timestamp).num_hours() - 1;
            if missing > max_gap_hours as i64 {
                return Err(DataError::GapTooLarge {
                    from: format_timestamp(&prev.timestamp),
                    to: format_timestamp(&rec.timestamp),
                    missing_hours: missing,
                    max_gap_hours,
                });
            }
            let span = (missing + 1) as f64;
            for k in 1..=missing {
                let frac = k as f64 / span;
                let value = prev.consumption + (rec.consumption - prev.consumption) * frac;
                out.push(LoadRecord::new(prev.timestamp + Duration::hours(k), value)?);
            }
        }
        out.push(*rec);
    }
    LoadSeries::new(series.building_id.clone(), out)
}

fn month_key(ts: &NaiveDateTime) -> (i32, u32) {
    (ts.year(), ts.month())
}

/// Partitions a series on calendar-month boundaries.
///
/// The last `test` months form the test set, the `val` months before them the
/// validation set, and everything earlier the training set.
pub fn split_by_months(series: &LoadSeries, months: MonthSplit) -> Result<DatasetSplit, DataError> {
    let mut keys: Vec<(i32, u32)> = series.records.iter().map(|r| month_key(&r.timestamp)).collect();
    keys.dedup();
    let needed = months.train + months.val + months.test;
    if keys.len() < needed || months.test == 0 {
        return Err(DataError::InsufficientSpan {
            needed,
            available: keys.len(),
        });
    }
    let val_start = keys[keys.len() - months.test - months.val];
    let test_start = keys[keys.len() - months.test];
    let cut = |from: (i32, u32)| {
        series
            .records
            .partition_point(|r| month_key(&r.timestamp) < from)
    };
    let (val_at, test_at) = (cut(val_start), cut(test_start));
    let id = &series.building_id;
    Ok(DatasetSplit {
        train: LoadSeries::new(id.clone(), series.records[..val_at].to_vec())?,
        val: LoadSeries::new(id.clone(), series.records[val_at..test_at].to_vec())?,
        test: LoadSeries::new(id.clone(), series.records[test_at..].to_vec())?,
    })
}

/// Evaluation windows starting at offsets 0, stride, 2·stride, …
///
/// The series is expected to be hourly-continuous.
pub fn make_windows(series: &LoadSeries, spec: WindowSpec) -> Vec<WindowPair<'_>> {
    let (n, m) = (spec.n, spec.m);
    (0..spec.count(series.len()))
        .map(|i| {
            let start = i * spec.stride;
            WindowPair {
                observation: &series.records[start..start + n],
                target: &series.records[start + n..start + n + m],
            }
        })
        .collect()
}

/// Parameters of the synthetic load generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub days: usize,
    pub start: NaiveDateTime,
    pub base_load: f64,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    pub noise_sd: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            days: 90,
            start: NaiveDate::from_ymd_opt(2018, 1, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid start date"),
            base_load: 100.0,
            daily_amplitude: 30.0,
            weekly_amplitude: 10.0,
            noise_sd: 3.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let fields = [
            self.base_load,
            self.daily_amplitude,
            self.weekly_amplitude,
            self.noise_sd,
        ];
        if self.days == 0 {
            return Err(DataError::InvalidSynthConfig("days must be positive".into()));
        }
        if fields.iter().any(|v| !v.is_finite()) || self.noise_sd < 0.0 {
            return Err(DataError::InvalidSynthConfig(
                "parameters must be finite and noise_sd non-negative".into(),
            ));
        }
        let floor = self.base_load
            - self.daily_amplitude.abs()
            - self.weekly_amplitude.abs()
            - 4.0 * self.noise_sd;
        if floor < 0.0 {
            return Err(DataError::InvalidSynthConfig(format!(
                "base_load - amplitudes - 4*noise_sd = {floor} is negative"
            )));
        }
        Ok(())
    }
}

/// Two sinusoids (24 h and 168 h periods) plus Gaussian noise, clamped at 0.
pub fn synth_generate(config: &SynthConfig, building_id: &str) -> Result<LoadSeries, DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_sd)
        .map_err(|e| DataError::InvalidSynthConfig(e.to_string()))?;
    let hours = config.days * 24;
    let values: Vec<f64> = (0..hours)
        .map(|h| {
            // Phases reduced modulo the period so that periodicity is exact in floating point.
            let daily = (2.0 * PI * (h % 24) as f64 / 24.0).sin();
            let weekly = (2.0 * PI * (h % 168) as f64 / 168.0).sin();
            let eps = if config.noise_sd > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            (config.base_load
                + config.daily_amplitude * daily
                + config.weekly_amplitude * weekly
                + eps)
                .max(0.0)
        })
        .collect();
    LoadSeries::from_values(building_id, config.start, &values)
}

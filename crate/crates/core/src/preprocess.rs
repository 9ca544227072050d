//! Raw satellite observations to regular daily feature series.
//!
//! Raw input is a long CSV with `series_id,day,channel,value` and an
//! optional trailing `label` column. The four raw channels are the mean HV
//! backscatter inside the lake outline and in its buffer (dB), and the
//! water / total pixel counts of the optical scenes. The pipeline:
//!
//! 1. differences `hv_lake - hv_background` on days where both exist, and
//!    converts pixel counts to `p_water` on days where both exist;
//! 2. interpolates each derived channel onto the daily window;
//! 3. smooths `hv_anom` (and optionally `p_water`) with a centered moving
//!    average.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{check_header, csv_err, csv_reader, ClassLabel, DataError, Dataset, TimeSeries};

pub const HV_LAKE: &str = "hv_lake";
pub const HV_BACKGROUND: &str = "hv_background";
pub const N_WATER: &str = "n_water";
pub const N_TOTAL: &str = "n_total";
pub const HV_ANOM: &str = "hv_anom";
pub const P_WATER: &str = "p_water";

/// May 1 through December 31.
pub const DEFAULT_WINDOW: (i32, i32) = (0, 244);
pub const DEFAULT_SMOOTH_WINDOW: usize = 12;

/// Valid raw day indices: January 1 (leap year) through December 31,
/// counted from May 1.
pub const YEAR_DAYS: (i32, i32) = (-121, 244);

const RAW_HEADER: [&str; 4] = ["series_id", "day", "channel", "value"];
const RAW_HEADER_LABELED: [&str; 5] = ["series_id", "day", "channel", "value", "label"];

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("series {series}, channel {channel}: {count} observation(s), need at least 2")]
    InsufficientData {
        series: String,
        channel: String,
        count: usize,
    },
    #[error("{0}")]
    Domain(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub fn hv_anomaly(hv_lake: f64, hv_background: f64) -> Result<f64, PreprocessError> {
    if !hv_lake.is_finite() || !hv_background.is_finite() {
        return Err(PreprocessError::Domain(format!(
            "non-finite backscatter ({hv_lake}, {hv_background})"
        )));
    }
    Ok(hv_lake - hv_background)
}

pub fn water_percentage(n_water: f64, n_total: f64) -> Result<f64, PreprocessError> {
    if !n_water.is_finite() || !n_total.is_finite() {
        return Err(PreprocessError::Domain(format!(
            "non-finite pixel counts ({n_water}, {n_total})"
        )));
    }
    if n_total <= 0.0 {
        return Err(PreprocessError::Domain(format!(
            "n_total must be positive, got {n_total}"
        )));
    }
    if n_water < 0.0 || n_water > n_total {
        return Err(PreprocessError::Domain(format!(
            "n_water {n_water} outside [0, n_total = {n_total}]"
        )));
    }
    Ok(100.0 * n_water / n_total)
}

/// One irregular observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub day: i32,
    pub channel: String,
    pub value: f64,
}

/// All raw observations of one lake. Channels may be observed on different,
/// irregular days.
#[derive(Clone, Debug, PartialEq)]
pub struct RawObservations {
    pub id: String,
    pub label: Option<ClassLabel>,
    pub samples: Vec<RawSample>,
}

impl RawObservations {
    pub fn new(id: impl Into<String>) -> Self {
        RawObservations {
            id: id.into(),
            label: None,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, day: i32, channel: impl Into<String>, value: f64) {
        self.samples.push(RawSample {
            day,
            channel: channel.into(),
            value,
        });
    }

    /// Channel names in order of first appearance.
    pub fn channels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.samples {
            if !out.contains(&s.channel) {
                out.push(s.channel.clone());
            }
        }
        out
    }

    /// Observations of one channel sorted by day. NaN values are treated
    /// as missing; repeated days are averaged.
    pub fn channel(&self, name: &str) -> Vec<(i32, f64)> {
        let mut by_day: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
        for s in self
            .samples
            .iter()
            .filter(|s| s.channel == name && !s.value.is_nan())
        {
            let e = by_day.entry(s.day).or_insert((0.0, 0));
            e.0 += s.value;
            e.1 += 1;
        }
        by_day
            .into_iter()
            .map(|(d, (sum, n))| (d, sum / n as f64))
            .collect()
    }

    /// Replaces the four raw channels with `hv_anom` and `p_water`,
    /// computed on the days where both inputs were observed.
    pub fn derive_features(&self) -> Result<RawObservations, PreprocessError> {
        let mut out = RawObservations {
            id: self.id.clone(),
            label: self.label.clone(),
            samples: Vec::new(),
        };
        let paired = |a: &str, b: &str| -> Vec<(i32, f64, f64)> {
            let bs: HashMap<i32, f64> = self.channel(b).into_iter().collect();
            self.channel(a)
                .into_iter()
                .filter_map(|(d, x)| bs.get(&d).map(|y| (d, x, *y)))
                .collect()
        };
        for (d, lake, bg) in paired(HV_LAKE, HV_BACKGROUND) {
            out.push(d, HV_ANOM, hv_anomaly(lake, bg)?);
        }
        for (d, water, total) in paired(N_WATER, N_TOTAL) {
            let p = water_percentage(water, total)
                .map_err(|e| PreprocessError::Domain(format!("series {} day {d}: {e}", self.id)))?;
            out.push(d, P_WATER, p);
        }
        Ok(out)
    }
}

/// Linear interpolation at integer day `day` from sorted observations,
/// holding the end values constant outside the observed support.
fn interpolate_at(obs: &[(i32, f64)], day: i32) -> f64 {
    let first = obs[0];
    let last = obs[obs.len() - 1];
    if day <= first.0 {
        return first.1;
    }
    if day >= last.0 {
        return last.1;
    }
    // first index with obs day >= day; guaranteed in 1..len
    let hi = obs.partition_point(|&(d, _)| d < day);
    let (d1, v1) = obs[hi];
    if d1 == day {
        return v1;
    }
    let (d0, v0) = obs[hi - 1];
    let frac = f64::from(day - d0) / f64::from(d1 - d0);
    v0 + frac * (v1 - v0)
}

/// Resamples every channel of `raw` onto each day of the inclusive
/// `window`.
pub fn interpolate_daily(
    raw: &RawObservations,
    window: (i32, i32),
) -> Result<TimeSeries, PreprocessError> {
    let (start, end) = window;
    if start > end {
        return Err(PreprocessError::Domain(format!(
            "empty window {start}:{end}"
        )));
    }
    let channels = raw.channels();
    if channels.is_empty() {
        return Err(PreprocessError::InsufficientData {
            series: raw.id.clone(),
            channel: "<any>".into(),
            count: 0,
        });
    }
    let days: Vec<i32> = (start..=end).collect();
    let mut columns = Vec::with_capacity(channels.len());
    for ch in &channels {
        let obs = raw.channel(ch);
        if obs.len() < 2 {
            return Err(PreprocessError::InsufficientData {
                series: raw.id.clone(),
                channel: ch.clone(),
                count: obs.len(),
            });
        }
        columns.push(
            days.iter()
                .map(|&d| interpolate_at(&obs, d))
                .collect::<Vec<f64>>(),
        );
    }
    Ok(TimeSeries::from_columns(
        raw.id.clone(),
        days,
        channels,
        &columns,
        raw.label.clone(),
    )?)
}

/// Centered moving average of `values` over `window` samples, truncated
/// at the ends. An even window covers `window / 2` samples before the
/// centre and `window / 2 - 1` after it.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    let before = window / 2;
    let after = window - 1 - before;
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(before);
            let hi = (t + after).min(n.saturating_sub(1));
            let slice = &values[lo..=hi];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Replaces `channel` with its centered moving average; other channels are
/// left untouched.
pub fn smooth(
    series: &TimeSeries,
    channel: &str,
    window_days: usize,
) -> Result<TimeSeries, PreprocessError> {
    if window_days == 0 {
        return Err(PreprocessError::Domain(
            "smoothing window must be >= 1 day".into(),
        ));
    }
    let c = series.channel_index(channel).ok_or_else(|| {
        PreprocessError::Schema(format!("series {} has no channel {channel:?}", series.id()))
    })?;
    if !series.is_daily() {
        return Err(PreprocessError::Domain(format!(
            "series {} is not on a daily grid",
            series.id()
        )));
    }
    if series.is_empty() {
        return Ok(series.clone());
    }
    let smoothed = moving_average(&series.column(c), window_days);
    let mut out = series.clone();
    out.replace_column(c, &smoothed);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub window: (i32, i32),
    /// Moving-average width in days; 1 disables smoothing.
    pub smooth_window: usize,
    pub smooth_p_water: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            window: DEFAULT_WINDOW,
            smooth_window: DEFAULT_SMOOTH_WINDOW,
            smooth_p_water: false,
        }
    }
}

/// Full pipeline for one lake: derive features, interpolate, smooth.
/// Output channels are `hv_anom`, `p_water`.
pub fn preprocess_series(
    raw: &RawObservations,
    config: &PreprocessConfig,
) -> Result<TimeSeries, PreprocessError> {
    let derived = raw.derive_features()?;
    for ch in [HV_ANOM, P_WATER] {
        let n = derived.channel(ch).len();
        if n < 2 {
            return Err(PreprocessError::InsufficientData {
                series: raw.id.clone(),
                channel: ch.into(),
                count: n,
            });
        }
    }
    let daily = interpolate_daily(&derived, config.window)?
        .select_channels(&[HV_ANOM.to_string(), P_WATER.to_string()])?;
    let mut out = smooth(&daily, HV_ANOM, config.smooth_window)?;
    if config.smooth_p_water {
        out = smooth(&out, P_WATER, config.smooth_window)?;
    }
    Ok(out)
}

/// Runs [`preprocess_series`] over every lake.
pub fn preprocess_all(
    raws: &[RawObservations],
    config: &PreprocessConfig,
) -> Result<Dataset, PreprocessError> {
    let series = raws
        .iter()
        .map(|r| preprocess_series(r, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(
        series,
        vec![HV_ANOM.to_string(), P_WATER.to_string()],
    )?)
}

/// Parses the raw-observation CSV. Empty or `NaN` values mark a missing
/// observation and are skipped.
pub fn read_raw<R: Read>(reader: R) -> Result<Vec<RawObservations>, PreprocessError> {
    let mut rdr = csv_reader(reader);
    let width = {
        let header = rdr.headers().map_err(csv_err)?;
        header.len()
    };
    if width == RAW_HEADER_LABELED.len() {
        check_header(&mut rdr, &RAW_HEADER_LABELED)?;
    } else {
        check_header(&mut rdr, &RAW_HEADER)?;
    }

    let mut out: Vec<RawObservations> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut labels: Vec<Option<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |message: String| DataError::Parse { line, message };
        if rec.len() != width {
            return Err(parse_err(format!("expected {width} fields, found {}", rec.len())).into());
        }
        let id = &rec[0];
        if id.is_empty() {
            return Err(parse_err("empty series_id".into()).into());
        }
        let day: i32 = rec[1]
            .parse()
            .map_err(|_| parse_err(format!("invalid day {:?}", &rec[1])))?;
        if day < YEAR_DAYS.0 || day > YEAR_DAYS.1 {
            return Err(parse_err(format!(
                "day {day} outside the calendar year [{}, {}]",
                YEAR_DAYS.0, YEAR_DAYS.1
            ))
            .into());
        }
        let channel = &rec[2];
        if ![HV_LAKE, HV_BACKGROUND, N_WATER, N_TOTAL].contains(&channel) {
            return Err(
                DataError::Schema(format!("line {line}: unknown raw channel {channel:?}")).into(),
            );
        }
        let value = if rec[3].is_empty() {
            f64::NAN
        } else {
            rec[3]
                .parse::<f64>()
                .map_err(|_| parse_err(format!("invalid value {:?}", &rec[3])))?
        };
        if value.is_infinite() {
            return Err(parse_err(format!("infinite value {:?}", &rec[3])).into());
        }
        let label = rec.get(4).filter(|l| !l.is_empty()).map(str::to_string);

        let slot = *index.entry(id.to_string()).or_insert_with(|| {
            out.push(RawObservations::new(id));
            labels.push(label.clone());
            out.len() - 1
        });
        if labels[slot] != label {
            return Err(DataError::Schema(format!(
                "line {line}: series {id} has conflicting labels"
            ))
            .into());
        }
        out[slot].push(day, channel, value);
    }
    for (r, l) in out.iter_mut().zip(labels) {
        r.label = l.map(|l| l.parse()).transpose()?;
    }
    Ok(out)
}

pub fn load_raw(path: &Path) -> Result<Vec<RawObservations>, PreprocessError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_raw(file)
}

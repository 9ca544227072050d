//! Domain types and long-format CSV ingestion.
//!
//! The canonical dataset file has one observation per row:
//!
//! ```text
//! series_id,day,channel,value,label
//! lake_001,0,hv_anom,-3.25,refreeze
//! lake_001,0,p_water,41.0,refreeze
//! ```
//!
//! `day` is an integer index (0 = May 1 for the lake data), `channel` must
//! belong to the declared schema and `label` is either repeated on every row
//! of a series or left empty.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::write_atomic;

/// Header every dataset CSV must carry.
pub const DATASET_HEADER: [&str; 5] = ["series_id", "day", "channel", "value", "label"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("duplicate sample: series {series}, day {day}, channel {channel}")]
    DuplicateSample {
        series: String,
        day: i32,
        channel: String,
    },
    #[error("invalid series {id}: {message}")]
    InvalidSeries { id: String, message: String },
    #[error("unknown series id {0:?}")]
    UnknownSeries(String),
    #[error("{0}")]
    Domain(String),
}

impl DataError {
    fn io(path: &Path, source: io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Class of a series. The three lake fates are named; anything else is kept
/// verbatim so the toolkit works on other datasets.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ClassLabel {
    Refreeze,
    Drain,
    Buried,
    Other(String),
}

impl ClassLabel {
    pub fn as_str(&self) -> &str {
        match self {
            ClassLabel::Refreeze => "refreeze",
            ClassLabel::Drain => "drain",
            ClassLabel::Buried => "buried",
            ClassLabel::Other(s) => s,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(DataError::Domain("empty class label".into()));
        }
        Ok(match s.to_ascii_lowercase().as_str() {
            "refreeze" | "refrozen" => ClassLabel::Refreeze,
            "drain" | "drained" => ClassLabel::Drain,
            "buried" => ClassLabel::Buried,
            _ => ClassLabel::Other(s.to_string()),
        })
    }
}

impl From<ClassLabel> for String {
    fn from(l: ClassLabel) -> Self {
        l.as_str().to_string()
    }
}

impl TryFrom<String> for ClassLabel {
    type Error = DataError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// A regularly indexed sequence of one or more channels.
///
/// Values are stored row-major: one row per timestamp, one column per
/// channel.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    id: String,
    days: Vec<i32>,
    channels: Vec<String>,
    values: Vec<f64>,
    label: Option<ClassLabel>,
    raw: bool,
}

impl TimeSeries {
    /// Builds a processed series. All values must be finite.
    pub fn new(
        id: impl Into<String>,
        days: Vec<i32>,
        channels: Vec<String>,
        values: Vec<f64>,
        label: Option<ClassLabel>,
    ) -> Result<Self, DataError> {
        let ts = TimeSeries {
            id: id.into(),
            days,
            channels,
            values,
            label,
            raw: false,
        };
        ts.validate()?;
        Ok(ts)
    }

    /// Builds a raw series in which NaN marks a missing observation.
    pub fn new_raw(
        id: impl Into<String>,
        days: Vec<i32>,
        channels: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self, DataError> {
        let ts = TimeSeries {
            id: id.into(),
            days,
            channels,
            values,
            label: None,
            raw: true,
        };
        ts.validate()?;
        Ok(ts)
    }

    /// Single-channel series on days `0..values.len()`, channel name `x`.
    pub fn univariate(id: impl Into<String>, values: Vec<f64>) -> Result<Self, DataError> {
        let days = (0..values.len() as i32).collect();
        Self::new(id, days, vec!["x".to_string()], values, None)
    }

    /// Builds a series from per-channel columns of equal length.
    pub fn from_columns(
        id: impl Into<String>,
        days: Vec<i32>,
        channels: Vec<String>,
        columns: &[Vec<f64>],
        label: Option<ClassLabel>,
    ) -> Result<Self, DataError> {
        let id = id.into();
        if columns.len() != channels.len() {
            return Err(DataError::InvalidSeries {
                id,
                message: format!("{} columns for {} channels", columns.len(), channels.len()),
            });
        }
        let n = days.len();
        let mut values = Vec::with_capacity(n * channels.len());
        for t in 0..n {
            for col in columns {
                match col.get(t) {
                    Some(v) => values.push(*v),
                    None => {
                        return Err(DataError::InvalidSeries {
                            id,
                            message: format!("column shorter than {n} timestamps"),
                        })
                    }
                }
            }
        }
        Self::new(id, days, channels, values, label)
    }

    fn validate(&self) -> Result<(), DataError> {
        let bad = |message: String| DataError::InvalidSeries {
            id: self.id.clone(),
            message,
        };
        if self.channels.is_empty() {
            return Err(bad("no channels".into()));
        }
        if self.days.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("timestamps not strictly increasing".into()));
        }
        if self.values.len() != self.days.len() * self.channels.len() {
            return Err(bad(format!(
                "{} values for {} timestamps x {} channels",
                self.values.len(),
                self.days.len(),
                self.channels.len()
            )));
        }
        if !self.raw && self.values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value in processed series".into()));
        }
        if self.raw && self.values.iter().any(|v| v.is_infinite()) {
            return Err(bad("infinite value".into()));
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn days(&self) -> &[i32] {
        &self.days
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn label(&self) -> Option<&ClassLabel> {
        self.label.as_ref()
    }

    pub fn is_raw(&self) -> bool {
        self.raw
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Row-major value matrix.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, t: usize, channel: usize) -> f64 {
        self.values[t * self.channels.len() + channel]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let c = self.channels.len();
        &self.values[t * c..(t + 1) * c]
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    pub fn column(&self, channel: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.value(t, channel)).collect()
    }

    pub fn with_label(mut self, label: Option<ClassLabel>) -> Self {
        self.label = label;
        self
    }

    /// True when the timestamps step by exactly one day.
    pub fn is_daily(&self) -> bool {
        self.days.windows(2).all(|w| w[1] - w[0] == 1)
    }

    /// Keeps only the named channels, in the given order.
    pub fn select_channels(&self, names: &[String]) -> Result<TimeSeries, DataError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.channel_index(n).ok_or_else(|| {
                    DataError::Schema(format!("series {} has no channel {n:?}", self.id))
                })
            })
            .collect::<Result<_, _>>()?;
        let mut values = Vec::with_capacity(self.len() * idx.len());
        for t in 0..self.len() {
            values.extend(idx.iter().map(|&c| self.value(t, c)));
        }
        Ok(TimeSeries {
            id: self.id.clone(),
            days: self.days.clone(),
            channels: names.to_vec(),
            values,
            label: self.label.clone(),
            raw: self.raw,
        })
    }

    /// Replaces one channel's column. Used by the smoothing filter.
    pub(crate) fn replace_column(&mut self, channel: usize, column: &[f64]) {
        let c = self.channels.len();
        for (t, v) in column.iter().enumerate() {
            self.values[t * c + channel] = *v;
        }
    }
}

/// A collection of series sharing one channel schema and grid length.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    series: Vec<TimeSeries>,
    channels: Vec<String>,
}

impl Dataset {
    pub fn new(series: Vec<TimeSeries>, channels: Vec<String>) -> Result<Self, DataError> {
        if let Some(first) = series.first() {
            let n = first.len();
            let mut seen = HashMap::new();
            for s in &series {
                if s.channels() != channels.as_slice() {
                    return Err(DataError::Schema(format!(
                        "series {} has channels {:?}, expected {:?}",
                        s.id(),
                        s.channels(),
                        channels
                    )));
                }
                if s.len() != n {
                    return Err(DataError::Schema(format!(
                        "series {} has {} timestamps, expected {n}",
                        s.id(),
                        s.len()
                    )));
                }
                if seen.insert(s.id().to_string(), ()).is_some() {
                    return Err(DataError::Schema(format!("duplicate series id {}", s.id())));
                }
            }
        }
        Ok(Dataset { series, channels })
    }

    pub fn series(&self) -> &[TimeSeries] {
        &self.series
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TimeSeries> {
        self.series.iter()
    }

    pub fn get(&self, id: &str) -> Option<&TimeSeries> {
        self.series.iter().find(|s| s.id() == id)
    }

    /// Labels present in the dataset, in canonical order.
    pub fn label_set(&self) -> Vec<ClassLabel> {
        self.class_counts().into_keys().collect()
    }

    pub fn class_counts(&self) -> BTreeMap<ClassLabel, usize> {
        let mut counts = BTreeMap::new();
        for l in self.series.iter().filter_map(|s| s.label()) {
            *counts.entry(l.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.series.iter().all(|s| s.label().is_some())
    }

    /// First series of every class in dataset order, classes in canonical
    /// order. The default choice of representatives.
    pub fn first_of_each_class(&self) -> Vec<(ClassLabel, &TimeSeries)> {
        self.label_set()
            .into_iter()
            .filter_map(|l| {
                self.series
                    .iter()
                    .find(|s| s.label() == Some(&l))
                    .map(|s| (l, s))
            })
            .collect()
    }

    pub fn select_channels(&self, names: &[String]) -> Result<Dataset, DataError> {
        let series = self
            .series
            .iter()
            .map(|s| s.select_channels(names))
            .collect::<Result<_, _>>()?;
        Dataset::new(series, names.to_vec())
    }

    /// Stratified split. Returns `(selection, holdout)` where roughly
    /// `fraction` of each class goes to the holdout side. Series listed in
    /// `keep` always stay in the selection part.
    pub fn split_holdout(
        &self,
        fraction: f64,
        seed: u64,
        keep: &[&str],
    ) -> Result<(Dataset, Dataset), DataError> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(DataError::Domain(format!(
                "holdout fraction {fraction} outside [0, 1)"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut holdout_ids = Vec::new();
        for label in self.label_set() {
            let mut members: Vec<usize> = (0..self.series.len())
                .filter(|&i| {
                    let s = &self.series[i];
                    s.label() == Some(&label) && !keep.contains(&s.id())
                })
                .collect();
            members.shuffle(&mut rng);
            let take = (fraction * members.len() as f64).round() as usize;
            holdout_ids.extend(members.into_iter().take(take));
        }
        let mut sel = Vec::new();
        let mut hold = Vec::new();
        for (i, s) in self.series.iter().enumerate() {
            if holdout_ids.contains(&i) {
                hold.push(s.clone());
            } else {
                sel.push(s.clone());
            }
        }
        Ok((
            Dataset::new(sel, self.channels.clone())?,
            Dataset::new(hold, self.channels.clone())?,
        ))
    }
}

/// Loads a long-format dataset CSV. Every row's channel must be in
/// `schema`, and every series must carry every channel on every day.
pub fn load_dataset(path: &Path, schema: &[String]) -> Result<Dataset, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    read_dataset(file, schema)
}

/// Channel names in first-appearance order.
pub fn infer_channels(path: &Path) -> Result<Vec<String>, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut rdr = csv_reader(file);
    check_header(&mut rdr, &DATASET_HEADER)?;
    let mut out: Vec<String> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        if let Some(ch) = rec.get(2) {
            let ch = ch.trim();
            if !ch.is_empty() && !out.iter().any(|c| c == ch) {
                out.push(ch.to_string());
            }
        }
    }
    Ok(out)
}

pub(crate) fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

pub(crate) fn csv_err(e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    DataError::Parse {
        line,
        message: e.to_string(),
    }
}

pub(crate) fn check_header<R: Read>(
    rdr: &mut csv::Reader<R>,
    expected: &[&str],
) -> Result<(), DataError> {
    let header = rdr.headers().map_err(csv_err)?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(DataError::Parse {
            line: 1,
            message: format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                got.join(",")
            ),
        });
    }
    Ok(())
}

struct SeriesAccum {
    id: String,
    // day -> one slot per schema channel
    rows: BTreeMap<i32, Vec<Option<f64>>>,
    label: Option<Option<String>>,
}

/// Reader-based variant of [`load_dataset`].
pub fn read_dataset<R: Read>(reader: R, schema: &[String]) -> Result<Dataset, DataError> {
    if schema.is_empty() {
        return Err(DataError::Schema("empty channel schema".into()));
    }
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &DATASET_HEADER)?;

    let mut order: Vec<SeriesAccum> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();

    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |message: String| DataError::Parse { line, message };
        if rec.len() != DATASET_HEADER.len() {
            return Err(parse_err(format!(
                "expected {} fields, found {}",
                DATASET_HEADER.len(),
                rec.len()
            )));
        }
        let id = &rec[0];
        if id.is_empty() {
            return Err(parse_err("empty series_id".into()));
        }
        let day: i32 = rec[1]
            .parse()
            .map_err(|_| parse_err(format!("invalid day {:?}", &rec[1])))?;
        let channel = &rec[2];
        let ch = schema.iter().position(|c| c == channel).ok_or_else(|| {
            DataError::Schema(format!(
                "line {line}: channel {channel:?} not in schema {schema:?}"
            ))
        })?;
        let value: f64 = rec[3]
            .parse()
            .map_err(|_| parse_err(format!("invalid value {:?}", &rec[3])))?;
        if !value.is_finite() {
            return Err(parse_err(format!("non-finite value {:?}", &rec[3])));
        }
        let label = if rec[4].is_empty() {
            None
        } else {
            Some(rec[4].to_string())
        };

        let slot = *index.entry(id.to_string()).or_insert_with(|| {
            order.push(SeriesAccum {
                id: id.to_string(),
                rows: BTreeMap::new(),
                label: None,
            });
            order.len() - 1
        });
        let acc = &mut order[slot];
        match &acc.label {
            None => acc.label = Some(label),
            Some(prev) if *prev != label => {
                return Err(DataError::Schema(format!(
                    "line {line}: series {id} has conflicting labels {:?} and {:?}",
                    prev.as_deref().unwrap_or(""),
                    label.as_deref().unwrap_or("")
                )));
            }
            _ => {}
        }
        let row = acc
            .rows
            .entry(day)
            .or_insert_with(|| vec![None; schema.len()]);
        if row[ch].is_some() {
            return Err(DataError::DuplicateSample {
                series: id.to_string(),
                day,
                channel: channel.to_string(),
            });
        }
        row[ch] = Some(value);
    }

    let mut series = Vec::with_capacity(order.len());
    for acc in order {
        let mut days = Vec::with_capacity(acc.rows.len());
        let mut values = Vec::with_capacity(acc.rows.len() * schema.len());
        for (day, row) in acc.rows {
            days.push(day);
            for (c, v) in row.into_iter().enumerate() {
                values.push(v.ok_or_else(|| {
                    DataError::Schema(format!(
                        "series {} day {day} is missing channel {:?}",
                        acc.id, schema[c]
                    ))
                })?);
            }
        }
        let label = acc.label.flatten().map(|l| l.parse()).transpose()?;
        series.push(TimeSeries::new(
            acc.id,
            days,
            schema.to_vec(),
            values,
            label,
        )?);
    }
    Dataset::new(series, schema.to_vec())
}

/// Writes a dataset in the long CSV format.
pub fn write_dataset<W: Write>(dataset: &Dataset, w: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(w);
    let io_err = |e: csv::Error| DataError::Domain(format!("csv write failed: {e}"));
    wtr.write_record(DATASET_HEADER).map_err(io_err)?;
    for s in dataset.iter() {
        let label = s.label().map(|l| l.as_str()).unwrap_or("");
        for (t, day) in s.days().iter().enumerate() {
            for (c, ch) in s.channels().iter().enumerate() {
                wtr.write_record([
                    s.id(),
                    &day.to_string(),
                    ch,
                    &s.value(t, c).to_string(),
                    label,
                ])
                .map_err(io_err)?;
            }
        }
    }
    wtr.flush()
        .map_err(|e| DataError::Domain(format!("csv write failed: {e}")))?;
    Ok(())
}

/// Atomically writes a dataset CSV to `path`.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut buf = Vec::new();
    write_dataset(dataset, &mut buf)?;
    write_atomic(path, |w| w.write_all(&buf)).map_err(|e| DataError::io(path, e))
}

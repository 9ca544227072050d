//! Synthetic two-channel lake series for end-to-end testing.
//!
//! Each archetype is a smooth seasonal curve for `hv_anom` (dB) and
//! `p_water` (%) on days `0..length`:
//!
//! * refreeze: the lake fills, then water declines to zero late in the
//!   season and the anomaly turns slightly positive (bright ice lid);
//! * drain: the lake fills, then collapses abruptly mid-season;
//! * buried: surface water disappears under snow late in the season but
//!   the negative backscatter anomaly persists to the end.
//!
//! `noise` scales white noise (1 dB on `hv_anom`, 5 percentage points on
//! `p_water`) as well as per-sample jitter of event timing and amplitude.
//! With `noise = 0` every sample of a class is identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, DataError, Dataset, TimeSeries};
use crate::preprocess::{HV_ANOM, P_WATER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Archetype {
    Refreeze,
    Drain,
    Buried,
}

impl Archetype {
    pub fn label(self) -> ClassLabel {
        match self {
            Archetype::Refreeze => ClassLabel::Refreeze,
            Archetype::Drain => ClassLabel::Drain,
            Archetype::Buried => ClassLabel::Buried,
        }
    }

    fn shape(self) -> Shape {
        // Event days on the 245-day reference season; rescaled to `length`.
        match self {
            Archetype::Refreeze => Shape {
                onset: 45.0,
                depth: 8.0,
                fill: 70.0,
                water_off: 165.0,
                water_width: 10.0,
                hv_off: 170.0,
                hv_width: 8.0,
                hv_after: 2.0,
            },
            Archetype::Drain => Shape {
                onset: 45.0,
                depth: 8.0,
                fill: 70.0,
                water_off: 95.0,
                water_width: 2.0,
                hv_off: 97.0,
                hv_width: 2.0,
                hv_after: 0.0,
            },
            Archetype::Buried => Shape {
                onset: 45.0,
                depth: 8.0,
                fill: 70.0,
                water_off: 140.0,
                water_width: 10.0,
                hv_off: 245.0,
                hv_width: 10.0,
                hv_after: -8.0,
            },
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Shape {
    onset: f64,
    /// Magnitude of the negative anomaly while water is present (dB).
    depth: f64,
    /// Peak water percentage.
    fill: f64,
    water_off: f64,
    water_width: f64,
    hv_off: f64,
    hv_width: f64,
    /// Anomaly level the lake settles to after `hv_off` (dB).
    hv_after: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const ONSET_WIDTH: f64 = 5.0;
const REFERENCE_LENGTH: f64 = 245.0;
const HV_NOISE_DB: f64 = 1.0;
const P_WATER_NOISE: f64 = 5.0;
const TIMING_JITTER_DAYS: f64 = 5.0;
const AMPLITUDE_JITTER: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub classes: Vec<Archetype>,
    pub samples_per_class: usize,
    pub length: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: vec![Archetype::Refreeze, Archetype::Drain, Archetype::Buried],
            samples_per_class: 20,
            length: 245,
            noise: 1.0,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(DataError::Domain(format!(
                "noise must be >= 0, got {}",
                self.noise
            )));
        }
        if self.length < 2 {
            return Err(DataError::Domain("length must be >= 2".into()));
        }
        if self.classes.is_empty() || self.samples_per_class == 0 {
            return Err(DataError::Domain(
                "need at least one class and one sample".into(),
            ));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if self.classes[..i].contains(c) {
                return Err(DataError::Domain(format!("class {c:?} listed twice")));
            }
        }
        Ok(())
    }
}

fn sample(shape: Shape, length: usize, noise: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let scale = length as f64 / REFERENCE_LENGTH;
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut jitter = |sd: f64| noise * sd * std.sample(&mut *rng);
    let shift = jitter(TIMING_JITTER_DAYS);
    let water_shift = jitter(TIMING_JITTER_DAYS);
    let depth = shape.depth * (1.0 + jitter(AMPLITUDE_JITTER));
    let fill = shape.fill * (1.0 + jitter(AMPLITUDE_JITTER));

    let onset = (shape.onset + shift) * scale;
    let water_off = (shape.water_off + water_shift) * scale;
    let hv_off = (shape.hv_off + water_shift) * scale;
    let mut hv = Vec::with_capacity(length);
    let mut pw = Vec::with_capacity(length);
    for t in 0..length {
        let t = t as f64;
        let present = sigmoid((t - onset) / (ONSET_WIDTH * scale));
        let water_left = 1.0 - sigmoid((t - water_off) / (shape.water_width * scale));
        let settled = sigmoid((t - hv_off) / (shape.hv_width * scale));
        hv.push(-depth * present * (1.0 - settled) + shape.hv_after * settled);
        pw.push(fill * present * water_left);
    }
    if noise > 0.0 {
        let hv_noise = Normal::new(0.0, noise * HV_NOISE_DB).expect("finite sd");
        let pw_noise = Normal::new(0.0, noise * P_WATER_NOISE).expect("finite sd");
        for v in &mut hv {
            *v += hv_noise.sample(rng);
        }
        for v in &mut pw {
            *v = (*v + pw_noise.sample(rng)).clamp(0.0, 100.0);
        }
    }
    (hv, pw)
}

/// Generates `samples_per_class` labeled series per archetype with ids
/// like `drain_007`. Deterministic in `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let channels = vec![HV_ANOM.to_string(), P_WATER.to_string()];
    let days: Vec<i32> = (0..spec.length as i32).collect();
    let mut series = Vec::with_capacity(spec.classes.len() * spec.samples_per_class);
    for &class in &spec.classes {
        for i in 0..spec.samples_per_class {
            let (hv, pw) = sample(class.shape(), spec.length, spec.noise, &mut rng);
            series.push(TimeSeries::from_columns(
                format!("{}_{i:03}", class.label()),
                days.clone(),
                channels.clone(),
                &[hv, pw],
                Some(class.label()),
            )?);
        }
    }
    Dataset::new(series, channels)
}

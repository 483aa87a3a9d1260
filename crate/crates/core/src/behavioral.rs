//! Behavioral anomaly detection over per-component telemetry.
//!
//! A window of the `s` most recent samples, newest first, is min-max scaled
//! per measured value and classified by a one-class SVM with an RBF kernel.
//! The decision offset is replaced by a threshold calibrated on normal
//! validation windows.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::kernels::KernelSpec;
use crate::oneclass::{self, OneClassModel, TrainConfig};

/// Number of values per sample.
pub const MEASURED_VALUES: usize = 5;
pub const DETECTOR_VERSION: u32 = 1;

/// One sample of a component: CPU time, received and sent messages per
/// second, and average received and sent message sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub component_id: String,
    pub app_type: String,
    pub app_instance: String,
    pub t: i64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
    pub v5: f64,
}

impl MeasurementRecord {
    pub fn values(&self) -> [f64; MEASURED_VALUES] {
        [self.v1, self.v2, self.v3, self.v4, self.v5]
    }

    pub fn set_values(&mut self, v: [f64; MEASURED_VALUES]) {
        [self.v1, self.v2, self.v3, self.v4, self.v5] = v;
    }

    pub fn validate(&self) -> Result<()> {
        if self.values().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::input(format!(
                "record of `{}` at t={} has a negative or non-finite value",
                self.component_id, self.t
            )));
        }
        Ok(())
    }

    /// Parses JSON lines, skipping blank ones.
    pub fn read_jsonl(text: &str) -> Result<Vec<MeasurementRecord>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let r: MeasurementRecord = serde_json::from_str(l)?;
                r.validate()?;
                Ok(r)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub s: usize,
    /// `(min, max)` per measured value, fitted on training data.
    pub normalization: Vec<(f64, f64)>,
    /// Expected timestamp step; any other step is a gap.
    pub sample_interval: i64,
}

impl WindowConfig {
    /// Identity scaling, for hand-built windows.
    pub fn identity(s: usize, sample_interval: i64) -> Self {
        WindowConfig {
            s,
            normalization: vec![(0.0, 1.0); MEASURED_VALUES],
            sample_interval,
        }
    }

    /// Fits per-value ranges and the sampling interval on training streams.
    pub fn fit(streams: &[&[MeasurementRecord]], s: usize) -> Result<Self> {
        let mut lo = [f64::INFINITY; MEASURED_VALUES];
        let mut hi = [f64::NEG_INFINITY; MEASURED_VALUES];
        let mut steps: HashMap<i64, usize> = HashMap::new();
        for stream in streams {
            for r in stream.iter() {
                for (d, v) in r.values().into_iter().enumerate() {
                    lo[d] = lo[d].min(v);
                    hi[d] = hi[d].max(v);
                }
            }
            for w in stream.windows(2) {
                *steps.entry(w[1].t - w[0].t).or_default() += 1;
            }
        }
        // most frequent step, smallest on ties
        let sample_interval = steps
            .into_iter()
            .max_by_key(|&(step, n)| (n, std::cmp::Reverse(step)))
            .map(|(step, _)| step)
            .ok_or_else(|| Error::TooShort("training streams need at least two samples".into()))?;
        let cfg = WindowConfig {
            s,
            normalization: lo.into_iter().zip(hi).collect(),
            sample_interval,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s < 2 {
            return Err(Error::config(format!("window size {} is below 2", self.s)));
        }
        if self.sample_interval <= 0 {
            return Err(Error::config("sample interval must be positive"));
        }
        if self.normalization.len() != MEASURED_VALUES
            || self.normalization.iter().any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(Error::config("normalization needs five finite (min, max) pairs with min <= max"));
        }
        Ok(())
    }

    /// Min-max scaling; a constant training range only shifts.
    pub fn scale(&self, d: usize, v: f64) -> f64 {
        let (lo, hi) = self.normalization[d];
        if hi > lo {
            (v - lo) / (hi - lo)
        } else {
            v - lo
        }
    }

    /// Scaled window from records given newest first.
    fn features_of<'a>(&self, newest_first: impl Iterator<Item = &'a MeasurementRecord>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.s * MEASURED_VALUES);
        for r in newest_first {
            for (d, v) in r.values().into_iter().enumerate() {
                out.push(self.scale(d, v));
            }
        }
        out
    }

    fn check_step(&self, older: &MeasurementRecord, newer: &MeasurementRecord) -> Result<()> {
        if newer.t - older.t != self.sample_interval {
            return Err(Error::Gap {
                component: newer.component_id.clone(),
                before: older.t,
                after: newer.t,
            });
        }
        Ok(())
    }
}

/// The `5s` values `V_t, V_{t-1}, ..., V_{t-s+1}` ending at index `t`, scaled.
///
/// `Ok(None)` while fewer than `s` samples are available.
pub fn window_features(series: &[MeasurementRecord], cfg: &WindowConfig, t: usize) -> Result<Option<Vec<f64>>> {
    if t >= series.len() {
        return Err(Error::input(format!("index {t} beyond series of {} samples", series.len())));
    }
    if t + 1 < cfg.s {
        return Ok(None);
    }
    let window = &series[t + 1 - cfg.s..=t];
    for w in window.windows(2) {
        cfg.check_step(&w[0], &w[1])?;
    }
    Ok(Some(cfg.features_of(window.iter().rev())))
}

/// All complete gap-free windows of a stream, with the index of their newest sample.
pub fn stream_windows(series: &[MeasurementRecord], cfg: &WindowConfig) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut out = Vec::new();
    for t in 0..series.len() {
        match window_features(series, cfg, t) {
            Ok(Some(x)) => out.push((t, x)),
            Ok(None) | Err(Error::Gap { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehavioralParams {
    pub s: usize,
    pub c: f64,
    /// RBF bandwidth on the `5s`-dimensional scaled window.
    pub sigma: f64,
    pub target_fpr: f64,
}

/// The largest `b` such that at most `floor(target_fpr * n)` of the `n`
/// scores fall strictly below it.
pub fn calibrate_threshold(scores: &[f64], target_fpr: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::input("no validation windows to calibrate on"));
    }
    if !(0.0..1.0).contains(&target_fpr) {
        return Err(Error::config(format!("target false positive rate {target_fpr} outside [0, 1)")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let allowed = ((target_fpr * sorted.len() as f64 + 1e-9).floor() as usize).min(sorted.len() - 1);
    Ok(sorted[allowed])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: Label,
    /// `f(x) - b_cal`; negative means anomalous.
    pub score: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BehavioralDetector {
    pub version: u32,
    pub component_id: String,
    pub app_type: String,
    pub window: WindowConfig,
    pub threshold: f64,
    pub model: OneClassModel,
}

fn single_identity<'a>(streams: impl Iterator<Item = &'a MeasurementRecord>) -> Result<(String, String)> {
    let mut id: Option<(&str, &str)> = None;
    for r in streams {
        match id {
            None => id = Some((&r.component_id, &r.app_type)),
            Some((c, a)) if c != r.component_id || a != r.app_type => {
                return Err(Error::input(format!(
                    "mixed series: `{c}`/`{a}` and `{}`/`{}`",
                    r.component_id, r.app_type
                )))
            }
            _ => {}
        }
    }
    id.map(|(c, a)| (c.to_string(), a.to_string()))
        .ok_or_else(|| Error::TooShort("no samples".into()))
}

fn check_ordered(stream: &[MeasurementRecord]) -> Result<()> {
    for w in stream.windows(2) {
        if w[1].t <= w[0].t {
            return Err(Error::input(format!(
                "timestamps of `{}` not increasing at t={}",
                w[1].component_id, w[1].t
            )));
        }
    }
    stream.iter().try_for_each(MeasurementRecord::validate)
}

/// Trains one detector from normal training and validation streams of a
/// single component. Streams of several instances are consolidated by
/// pooling their windows.
pub fn train_detector(
    train: &[Vec<MeasurementRecord>],
    validation: &[Vec<MeasurementRecord>],
    params: &BehavioralParams,
) -> Result<BehavioralDetector> {
    let (component_id, app_type) = single_identity(train.iter().chain(validation).flatten())?;
    for stream in train.iter().chain(validation) {
        check_ordered(stream)?;
    }
    if validation.iter().all(Vec::is_empty) {
        return Err(Error::input(format!("no validation samples for `{component_id}`")));
    }
    let refs: Vec<&[MeasurementRecord]> = train.iter().map(Vec::as_slice).collect();
    let window = WindowConfig::fit(&refs, params.s)?;

    let mut data = Vec::new();
    for stream in train {
        data.extend(stream_windows(stream, &window)?.into_iter().map(|(_, x)| FeatureVector::Dense(x)));
    }
    if data.is_empty() {
        return Err(Error::TooShort(format!("no complete training window of size {}", params.s)));
    }
    let cfg = TrainConfig::with_c(params.c.max(1.0 / data.len() as f64));
    let model = oneclass::train_ocsvm(&data, &KernelSpec::rbf(params.sigma), &cfg)?;

    let mut scores = Vec::new();
    for stream in validation {
        for (_, x) in stream_windows(stream, &window)? {
            scores.push(model.expansion(&FeatureVector::Dense(x))?);
        }
    }
    if scores.is_empty() {
        return Err(Error::TooShort(format!("no complete validation window of size {}", params.s)));
    }
    let threshold = calibrate_threshold(&scores, params.target_fpr)?;
    Ok(BehavioralDetector {
        version: DETECTOR_VERSION,
        component_id,
        app_type,
        window,
        threshold,
        model,
    })
}

impl BehavioralDetector {
    pub fn classify_features(&self, x: Vec<f64>) -> Result<Classification> {
        let score = self.model.expansion(&FeatureVector::Dense(x))? - self.threshold;
        let label = if score < 0.0 {
            Label::Anomalous
        } else {
            Label::Normal
        };
        Ok(Classification { label, score })
    }

    /// Classifies the window ending at index `t`; `Ok(None)` during warm-up.
    pub fn classify(&self, series: &[MeasurementRecord], t: usize) -> Result<Option<Classification>> {
        match window_features(series, &self.window, t)? {
            Some(x) => self.classify_features(x).map(Some),
            None => Ok(None),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: BehavioralDetector = serde_json::from_str(s)?;
        if d.version != DETECTOR_VERSION {
            return Err(Error::input(format!("unsupported detector version {}", d.version)));
        }
        d.window.validate()?;
        if !d.threshold.is_finite() {
            return Err(Error::input("detector threshold is not finite"));
        }
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub component_id: String,
    pub t: i64,
    pub score: f64,
}

/// Online classification of interleaved telemetry of many components.
///
/// Keeps the last `s` samples per component instance; a gap clears the
/// buffer so no window spans it.
pub struct StreamMonitor {
    detectors: HashMap<(String, String), BehavioralDetector>,
    buffers: HashMap<(String, String), VecDeque<MeasurementRecord>>,
}

impl StreamMonitor {
    pub fn new(detectors: impl IntoIterator<Item = BehavioralDetector>) -> Self {
        StreamMonitor {
            detectors: detectors
                .into_iter()
                .map(|d| ((d.component_id.clone(), d.app_type.clone()), d))
                .collect(),
            buffers: HashMap::new(),
        }
    }

    /// Records without a matching detector are ignored.
    pub fn push(&mut self, record: MeasurementRecord) -> Result<Option<Alert>> {
        record.validate()?;
        let Some(det) = self
            .detectors
            .get(&(record.component_id.clone(), record.app_type.clone()))
        else {
            return Ok(None);
        };
        let buf = self
            .buffers
            .entry((record.component_id.clone(), record.app_instance.clone()))
            .or_default();
        if let Some(last) = buf.back() {
            if det.window.check_step(last, &record).is_err() {
                buf.clear();
            }
        }
        buf.push_back(record);
        if buf.len() > det.window.s {
            buf.pop_front();
        }
        if buf.len() < det.window.s {
            return Ok(None);
        }
        let verdict = det.classify_features(det.window.features_of(buf.iter().rev()))?;
        let newest = buf.back().expect("nonempty");
        Ok((verdict.label == Label::Anomalous).then(|| Alert {
            component_id: newest.component_id.clone(),
            t: newest.t,
            score: verdict.score,
        }))
    }

    /// Shifts every detector's threshold, e.g. for a more tolerant mode.
    pub fn shift_thresholds(&mut self, delta: f64) {
        for d in self.detectors.values_mut() {
            d.threshold += delta;
        }
    }
}

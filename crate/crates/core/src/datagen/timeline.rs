//! Synthetic component telemetry.
//!
//! Every value starts as Gaussian noise around a per-value mean. The dynamic
//! normal profile multiplies it by a smooth rise-plateau-fall bump; the
//! anomalous profiles put a bump of the same peak height on the plain
//! baseline and add extra Gaussian noise while it lasts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::behavioral::{MeasurementRecord, MEASURED_VALUES};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimelineKind {
    Normal1,
    Normal2,
    Anomaly1,
    Anomaly2,
}

impl TimelineKind {
    pub const ALL: [TimelineKind; 4] = [Self::Normal1, Self::Normal2, Self::Anomaly1, Self::Anomaly2];

    pub fn is_anomalous(self) -> bool {
        matches!(self, Self::Anomaly1 | Self::Anomaly2)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Normal1 => "normal1",
            Self::Normal2 => "normal2",
            Self::Anomaly1 => "anomaly1",
            Self::Anomaly2 => "anomaly2",
        }
    }
}

/// Difference of two logistic curves, onset `t0`, offset `t1`, steepness
/// `tau`, scaled so that its peak is exactly `amplitude`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmoidBump {
    pub t0: f64,
    pub t1: f64,
    pub tau: f64,
    pub amplitude: f64,
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl SigmoidBump {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.t1 > self.t0) || !self.amplitude.is_finite() {
            return Err(Error::config(format!(
                "bump needs tau > 0 and t1 > t0 (got tau={}, t0={}, t1={})",
                self.tau, self.t0, self.t1
            )));
        }
        Ok(())
    }

    /// Unscaled shape; maximal at the midpoint with value `tanh((t1-t0)/(4 tau))`.
    fn shape(&self, t: f64) -> f64 {
        logistic((t - self.t0) / self.tau) - logistic((t - self.t1) / self.tau)
    }

    pub fn value(&self, t: f64) -> f64 {
        let peak = ((self.t1 - self.t0) / (4.0 * self.tau)).tanh();
        self.amplitude * self.shape(t) / peak
    }

    pub fn contains(&self, t: f64) -> bool {
        self.t0 <= t && t <= self.t1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineProfile {
    pub kind: TimelineKind,
    pub length: usize,
    /// `(mean, std)` per measured value.
    pub base_stats: Vec<(f64, f64)>,
    /// Bump positions in sample indices; ignored for `normal1`.
    pub bumps: Vec<SigmoidBump>,
    /// Extra noise on anomalous segments, as a multiple of the base std.
    pub noise_std_scale: f64,
    pub seed: u64,
    pub component_id: String,
    pub app_type: String,
    pub app_instance: String,
    pub start_t: i64,
    pub sample_interval: i64,
}

impl TimelineProfile {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::config("timeline length must be at least 1"));
        }
        if self.sample_interval <= 0 {
            return Err(Error::config("sample interval must be positive"));
        }
        if self.base_stats.len() != MEASURED_VALUES
            || self
                .base_stats
                .iter()
                .any(|&(m, s)| !m.is_finite() || !s.is_finite() || s < 0.0)
        {
            return Err(Error::config("base_stats needs five (mean, std >= 0) pairs"));
        }
        if !(self.noise_std_scale >= 0.0) {
            return Err(Error::config("noise_std_scale must be nonnegative"));
        }
        if self.kind != TimelineKind::Normal1 && self.bumps.is_empty() {
            return Err(Error::config(format!("{} timeline needs a bump", self.kind.name())));
        }
        self.bumps.iter().try_for_each(SigmoidBump::validate)
    }

    /// Timestamps of the anomalous segments.
    pub fn anomalous_intervals(&self) -> Vec<(i64, i64)> {
        if !self.kind.is_anomalous() {
            return Vec::new();
        }
        self.bumps
            .iter()
            .map(|b| {
                let at = |x: f64| self.start_t + self.sample_interval * x as i64;
                (at(b.t0.max(0.0).ceil()), at(b.t1.min(self.length as f64 - 1.0).floor()))
            })
            .collect()
    }
}

pub fn gen_timeline(profile: &TimelineProfile) -> Result<Vec<MeasurementRecord>> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let base: Vec<Normal<f64>> = profile
        .base_stats
        .iter()
        .map(|&(m, s)| Normal::new(m, s).expect("validated"))
        .collect();
    let noise: Vec<Normal<f64>> = profile
        .base_stats
        .iter()
        .map(|&(_, s)| Normal::new(0.0, s * profile.noise_std_scale).expect("validated"))
        .collect();

    let mut out = Vec::with_capacity(profile.length);
    for i in 0..profile.length {
        let t = i as f64;
        let gain = match profile.kind {
            TimelineKind::Normal1 => 1.0,
            _ => 1.0 + profile.bumps.iter().map(|b| b.value(t)).sum::<f64>(),
        };
        let disturbed = profile.kind.is_anomalous() && profile.bumps.iter().any(|b| b.contains(t));
        let mut values = [0.0; MEASURED_VALUES];
        for d in 0..MEASURED_VALUES {
            let mut v = base[d].sample(&mut rng).max(0.0) * gain;
            if disturbed {
                v += noise[d].sample(&mut rng);
            }
            values[d] = v.max(0.0);
        }
        let mut r = MeasurementRecord {
            component_id: profile.component_id.clone(),
            app_type: profile.app_type.clone(),
            app_instance: profile.app_instance.clone(),
            t: profile.start_t + profile.sample_interval * i as i64,
            v1: 0.0,
            v2: 0.0,
            v3: 0.0,
            v4: 0.0,
            v5: 0.0,
        };
        r.set_values(values);
        out.push(r);
    }
    Ok(out)
}

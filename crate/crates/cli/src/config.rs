//! Optional TOML configuration. Every section is optional; command line
//! flags override the values found here.
//!
//! ```toml
//! [generate.behavioral]     # any BehavioralBundleConfig field
//! seed = 7
//!
//! [generate.structural]     # any StructuralBundleConfig field
//! family = "synthetic"
//!
//! [train.behavioral]
//! s = 100
//! target_fpr = 0.0
//!
//! [train.structural]
//! method = "svdd"
//! kernel = "histogram-intersection"
//!
//! [sweep]                   # any SweepParams field
//! s_grid = [20, 60, 100]
//! ```

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Deserialize;

use compguard::datagen::{BehavioralBundleConfig, StructuralBundleConfig};
use compguard::eval::SweepParams;

pub const CONFIG_ENV: &str = "COMPGUARD_CONFIG";

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub generate: GenerateSection,
    pub train: TrainSection,
    pub sweep: SweepParams,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub behavioral: BehavioralBundleConfig,
    pub structural: StructuralBundleConfig,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub behavioral: BehavioralTrain,
    pub structural: StructuralTrain,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehavioralTrain {
    pub s: usize,
    pub c: f64,
    pub sigma_per_value: f64,
    pub target_fpr: f64,
}

impl Default for BehavioralTrain {
    fn default() -> Self {
        let sweep = SweepParams::default();
        BehavioralTrain {
            s: 100,
            c: sweep.c,
            sigma_per_value: sweep.sigma_per_value,
            target_fpr: sweep.target_fpr,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructuralTrain {
    pub method: String,
    pub kernel: String,
    pub c: f64,
    pub threshold: f64,
}

impl Default for StructuralTrain {
    fn default() -> Self {
        StructuralTrain {
            method: "svdd".into(),
            kernel: "histogram-intersection".into(),
            c: 1.0,
            threshold: 0.0,
        }
    }
}

/// Marks failures that are the caller's fault (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn load(explicit: Option<&Path>) -> Result<Config> {
    let path: Option<PathBuf> = match explicit {
        Some(p) => Some(p.to_path_buf()),
        None => std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from),
    };
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let config: Config =
        toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
    Ok(config)
}

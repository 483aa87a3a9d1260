//! Structural anomaly detection over application graph snapshots.

mod embedding;
mod graph;
mod substructure;

use serde::{Deserialize, Serialize};

pub use embedding::{embed, fnv1a64, BosVector, FeatureSpace};
pub use graph::{AppGraph, GraphIndex, Node};
pub use substructure::{canonical_key, extract_substructures, key_labels, Substructure};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::oneclass::{self, OneClassModel, TrainConfig};

pub const STRUCTURAL_MODEL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Normal,
    Anomalous,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphScore {
    pub f: f64,
    pub verdict: Verdict,
}

/// Scores an embedded graph. `f` follows the model's method; the graph is
/// anomalous when `f` falls below the operator-chosen `threshold`.
pub fn score_graph(model: &OneClassModel, x: &BosVector, threshold: f64) -> Result<GraphScore> {
    if !model.kernel().is_decomposable() {
        return Err(Error::UnsupportedKernel(model.kernel_spec().kind.clone()));
    }
    let f = model.decision(&x.entries)?;
    let verdict = if f < threshold {
        Verdict::Anomalous
    } else {
        Verdict::Normal
    };
    Ok(GraphScore { f, verdict })
}

/// A one-class model over one application type's graphs, together with the
/// feature space its support vectors live in.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StructuralModel {
    pub version: u32,
    pub app_type: String,
    pub space: FeatureSpace,
    pub model: OneClassModel,
    /// Decision threshold on `f`; adjustable without retraining.
    pub threshold: f64,
}

impl StructuralModel {
    /// Trains on benign graphs of a single application type. The kernel
    /// must be sum-decomposable so predictions can be localized.
    pub fn train(graphs: &[AppGraph], method: &str, kernel: &KernelSpec, cfg: &TrainConfig) -> Result<Self> {
        let first = graphs
            .first()
            .ok_or_else(|| Error::input("no training graphs"))?;
        if let Some(g) = graphs.iter().find(|g| g.app_type != first.app_type) {
            return Err(Error::input(format!(
                "mixed application types `{}` and `{}`",
                first.app_type, g.app_type
            )));
        }
        if !kernel.build()?.is_decomposable() {
            return Err(Error::UnsupportedKernel(kernel.kind.clone()));
        }
        let mut space = FeatureSpace::new();
        let data = graphs
            .iter()
            .map(|g| space.embed(g).map(|x| x.entries))
            .collect::<Result<Vec<_>>>()?;
        let model = oneclass::method(method)?.train(&data, kernel, cfg)?;
        Ok(StructuralModel {
            version: STRUCTURAL_MODEL_VERSION,
            app_type: first.app_type.clone(),
            space,
            model,
            threshold: 0.0,
        })
    }

    pub fn embed(&self, g: &AppGraph) -> Result<BosVector> {
        self.space.embed_frozen(g)
    }

    pub fn score(&self, g: &AppGraph) -> Result<GraphScore> {
        if g.app_type != self.app_type {
            return Err(Error::input(format!(
                "graph of type `{}` scored with a `{}` model",
                g.app_type, self.app_type
            )));
        }
        score_graph(&self.model, &self.embed(g)?, self.threshold)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: StructuralModel = serde_json::from_str(s)?;
        if m.version != STRUCTURAL_MODEL_VERSION {
            return Err(Error::input(format!("unsupported structural model version {}", m.version)));
        }
        Ok(m)
    }
}

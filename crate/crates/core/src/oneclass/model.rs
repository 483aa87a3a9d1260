use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::features::{Dim, FeatureVector};
use crate::kernels::{Kernel, KernelSpec};

pub const MODEL_VERSION: u32 = 1;

/// A trained one-class model in kernel expansion form.
///
/// Only points with positive dual weight are retained. The model is
/// immutable after training and can be shared across threads.
pub struct OneClassModel {
    method: String,
    spec: KernelSpec,
    kernel: Box<dyn Kernel>,
    support_points: Vec<FeatureVector>,
    alphas: Vec<f64>,
    offset: f64,
    self_term: f64,
    dimension_self_terms: OnceLock<BTreeMap<Dim, f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    version: u32,
    method: String,
    kernel: KernelSpec,
    alphas: Vec<f64>,
    support_points: Vec<FeatureVector>,
    offset: f64,
    self_term: f64,
}

impl OneClassModel {
    pub(crate) fn from_dual(
        method: &str,
        spec: KernelSpec,
        kernel: Box<dyn Kernel>,
        data: &[FeatureVector],
        alphas: &[f64],
        offset: f64,
        self_term: f64,
    ) -> Result<Self> {
        let (support_points, alphas): (Vec<_>, Vec<_>) = data
            .iter()
            .zip(alphas)
            .filter(|(_, &a)| a > 0.0)
            .map(|(x, &a)| (x.clone(), a))
            .unzip();
        Ok(OneClassModel {
            method: method.to_string(),
            spec,
            kernel,
            support_points,
            alphas,
            offset,
            self_term,
            dimension_self_terms: OnceLock::new(),
        })
    }

    /// Reassembles a model from stored parts, checking its invariants.
    pub fn from_parts(
        method: &str,
        spec: KernelSpec,
        support_points: Vec<FeatureVector>,
        alphas: Vec<f64>,
        offset: f64,
        self_term: f64,
    ) -> Result<Self> {
        super::method(method)?;
        let kernel = spec.build()?;
        if support_points.is_empty() || support_points.len() != alphas.len() {
            return Err(Error::input("model needs equally many (>= 1) support points and weights"));
        }
        if alphas.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::input("model weights must be positive"));
        }
        let total: f64 = alphas.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!("model weights sum to {total}, expected 1")));
        }
        if !offset.is_finite() || !self_term.is_finite() {
            return Err(Error::input("model offset and self term must be finite"));
        }
        Ok(OneClassModel {
            method: method.to_string(),
            spec,
            kernel,
            support_points,
            alphas,
            offset,
            self_term,
            dimension_self_terms: OnceLock::new(),
        })
    }

    pub fn method_name(&self) -> &str {
        &self.method
    }

    pub fn method(&self) -> &'static dyn super::OneClassMethod {
        super::method(&self.method).expect("method validated at construction")
    }

    pub fn kernel_spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn kernel(&self) -> &dyn Kernel {
        self.kernel.as_ref()
    }

    pub fn support_points(&self) -> &[FeatureVector] {
        &self.support_points
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `b` for the one-class SVM, the squared radius `R` for the SVDD.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `sum_ij a_i a_j k(x_i, x_j)`.
    pub fn self_term(&self) -> f64 {
        self.self_term
    }

    /// Signed prediction of the model's method.
    pub fn decision(&self, x: &FeatureVector) -> Result<f64> {
        self.method().decision(self, x)
    }

    /// `sum_i a_i k(x_i, x)`.
    pub fn expansion(&self, x: &FeatureVector) -> Result<f64> {
        let mut total = 0.0;
        for (sv, a) in self.support_points.iter().zip(&self.alphas) {
            total += a * self.kernel.evaluate(sv, x)?;
        }
        Ok(total)
    }

    /// Squared feature-space distance to the weighted centroid.
    pub fn squared_distance(&self, x: &FeatureVector) -> Result<f64> {
        let kxx = self.kernel.evaluate(x, x)?;
        Ok(kxx - 2.0 * self.expansion(x)? + self.self_term)
    }

    /// Per-dimension `sum_ij a_i a_j k(x_i^d, x_j^d)` for every dimension
    /// where some support point is nonzero. Decomposable kernels only.
    pub fn dimension_self_terms(&self) -> Result<&BTreeMap<Dim, f64>> {
        if !self.kernel.is_decomposable() {
            return Err(Error::UnsupportedKernel(self.spec.kind.clone()));
        }
        if let Some(t) = self.dimension_self_terms.get() {
            return Ok(t);
        }
        let mut columns: BTreeMap<Dim, Vec<(f64, f64)>> = BTreeMap::new();
        for (sv, &a) in self.support_points.iter().zip(&self.alphas) {
            for (d, v) in sv.iter() {
                if v != 0.0 {
                    columns.entry(d).or_default().push((a, v));
                }
            }
        }
        let mut terms = BTreeMap::new();
        for (d, col) in columns {
            let mut t = 0.0;
            for &(ai, vi) in &col {
                for &(aj, vj) in &col {
                    t += ai * aj * self.kernel.evaluate_dimension(vi, vj)?;
                }
            }
            terms.insert(d, t);
        }
        Ok(self.dimension_self_terms.get_or_init(|| terms))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl Clone for OneClassModel {
    fn clone(&self) -> Self {
        OneClassModel {
            method: self.method.clone(),
            spec: self.spec.clone(),
            kernel: self.spec.build().expect("spec validated at construction"),
            support_points: self.support_points.clone(),
            alphas: self.alphas.clone(),
            offset: self.offset,
            self_term: self.self_term,
            dimension_self_terms: OnceLock::new(),
        }
    }
}

impl fmt::Debug for OneClassModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OneClassModel")
            .field("method", &self.method)
            .field("kernel", &self.spec)
            .field("support_points", &self.support_points.len())
            .field("offset", &self.offset)
            .field("self_term", &self.self_term)
            .finish()
    }
}

impl Serialize for OneClassModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ModelDocument {
            version: MODEL_VERSION,
            method: self.method.clone(),
            kernel: self.spec.clone(),
            alphas: self.alphas.clone(),
            support_points: self.support_points.clone(),
            offset: self.offset,
            self_term: self.self_term,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for OneClassModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = ModelDocument::deserialize(deserializer)?;
        if doc.version != MODEL_VERSION {
            return Err(serde::de::Error::custom(format!(
                "unsupported model version {}",
                doc.version
            )));
        }
        OneClassModel::from_parts(
            &doc.method,
            doc.kernel,
            doc.support_points,
            doc.alphas,
            doc.offset,
            doc.self_term,
        )
        .map_err(serde::de::Error::custom)
    }
}

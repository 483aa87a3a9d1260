//! Feature vectors shared by both detectors.
//!
//! Telemetry windows are dense. Bag-of-substructures embeddings live in an
//! open-ended hashed dimension space and are stored sparsely; absent
//! dimensions are zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension identifier. Dense vectors use their index.
pub type Dim = u64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureVector {
    Dense(Vec<f64>),
    /// Entries sorted by dimension, no duplicates, no explicit zeros.
    Sparse(Vec<(Dim, f64)>),
}

impl FeatureVector {
    /// Builds a sparse vector, sorting entries and dropping zeros.
    pub fn sparse(mut entries: Vec<(Dim, f64)>) -> Result<Self> {
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_by_key(|&(d, _)| d);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::input("duplicate dimension in sparse vector"));
        }
        Ok(FeatureVector::Sparse(entries))
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, FeatureVector::Sparse(_))
    }

    /// Value at dimension `d` (zero when absent).
    pub fn get(&self, d: Dim) -> f64 {
        match self {
            FeatureVector::Dense(v) => v.get(d as usize).copied().unwrap_or(0.0),
            FeatureVector::Sparse(e) => e
                .binary_search_by_key(&d, |&(k, _)| k)
                .map(|i| e[i].1)
                .unwrap_or(0.0),
        }
    }

    /// Iterates over (dimension, value) pairs. Dense vectors yield every
    /// index, sparse ones only stored entries.
    pub fn iter(&self) -> Box<dyn Iterator<Item = (Dim, f64)> + '_> {
        match self {
            FeatureVector::Dense(v) => Box::new(v.iter().enumerate().map(|(i, &x)| (i as Dim, x))),
            FeatureVector::Sparse(e) => Box::new(e.iter().copied()),
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            FeatureVector::Dense(v) => v.iter().filter(|x| **x != 0.0).count(),
            FeatureVector::Sparse(e) => e.len(),
        }
    }

    pub fn has_negative(&self) -> bool {
        self.iter().any(|(_, v)| v < 0.0)
    }

    /// Folds `f(x_d, y_d)` over every dimension where either vector is
    /// nonzero (sparse) or over all indices (dense).
    pub fn fold_pairs<F>(&self, other: &FeatureVector, init: f64, mut f: F) -> Result<f64>
    where
        F: FnMut(f64, f64, f64) -> f64,
    {
        match (self, other) {
            (FeatureVector::Dense(a), FeatureVector::Dense(b)) => {
                if a.len() != b.len() {
                    return Err(Error::input(format!(
                        "dimension mismatch: {} vs {}",
                        a.len(),
                        b.len()
                    )));
                }
                Ok(a.iter().zip(b).fold(init, |acc, (&x, &y)| f(acc, x, y)))
            }
            (FeatureVector::Sparse(a), FeatureVector::Sparse(b)) => {
                let (mut i, mut j) = (0, 0);
                let mut acc = init;
                while i < a.len() || j < b.len() {
                    let da = a.get(i).map(|e| e.0).unwrap_or(Dim::MAX);
                    let db = b.get(j).map(|e| e.0).unwrap_or(Dim::MAX);
                    if i < a.len() && (j >= b.len() || da < db) {
                        acc = f(acc, a[i].1, 0.0);
                        i += 1;
                    } else if j < b.len() && (i >= a.len() || db < da) {
                        acc = f(acc, 0.0, b[j].1);
                        j += 1;
                    } else {
                        acc = f(acc, a[i].1, b[j].1);
                        i += 1;
                        j += 1;
                    }
                }
                Ok(acc)
            }
            _ => Err(Error::input("cannot combine dense and sparse feature vectors")),
        }
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        FeatureVector::Dense(v)
    }
}

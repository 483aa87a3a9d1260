//! Bag-of-substructures embedding.
//!
//! Every node contributes the indicator of its neighborhood's dimension;
//! the summed counts are then binarized and L2-normalized. Dimensions come
//! from a 64-bit FNV-1a hash of the canonical key. The key is kept next to
//! its dimension so that a hash collision is detected and resolved by
//! probing with a numeric suffix instead of merging two substructures.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Dim, FeatureVector};

use super::graph::AppGraph;
use super::substructure::{canonical_key, extract_with_index, Substructure};

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// Assignment of canonical keys to dimensions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<(Dim, String)>", into = "Vec<(Dim, String)>")]
pub struct FeatureSpace {
    by_key: HashMap<String, Dim>,
    by_dim: BTreeMap<Dim, String>,
}

impl From<Vec<(Dim, String)>> for FeatureSpace {
    fn from(entries: Vec<(Dim, String)>) -> Self {
        let mut space = FeatureSpace::default();
        for (d, k) in entries {
            space.by_key.insert(k.clone(), d);
            space.by_dim.insert(d, k);
        }
        space
    }
}

impl From<FeatureSpace> for Vec<(Dim, String)> {
    fn from(space: FeatureSpace) -> Self {
        space.by_dim.into_iter().collect()
    }
}

impl FeatureSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.by_dim.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_dim.is_empty()
    }

    pub fn key(&self, d: Dim) -> Option<&str> {
        self.by_dim.get(&d).map(String::as_str)
    }

    pub fn dim(&self, key: &str) -> Option<Dim> {
        self.by_key.get(key).copied()
    }

    /// Dimension of `key`, allocating one if the key is new.
    pub fn intern(&mut self, key: &str) -> Dim {
        if let Some(d) = self.dim(key) {
            return d;
        }
        let d = probe(key, |d| self.by_dim.contains_key(&d));
        self.by_key.insert(key.to_string(), d);
        self.by_dim.insert(d, key.to_string());
        d
    }

    /// Embeds `g`, extending the space with unseen keys.
    pub fn embed(&mut self, g: &AppGraph) -> Result<BosVector> {
        embed_with(g, |key| self.intern(key))
    }

    /// Embeds `g` without modifying the space. Unseen keys get dimensions
    /// that avoid every dimension of the space.
    pub fn embed_frozen(&self, g: &AppGraph) -> Result<BosVector> {
        let mut extra = FeatureSpace::new();
        embed_with(g, |key| {
            if let Some(d) = self.dim(key) {
                return d;
            }
            if let Some(d) = extra.dim(key) {
                return d;
            }
            let d = probe(key, |d| self.by_dim.contains_key(&d) || extra.by_dim.contains_key(&d));
            extra.by_key.insert(key.to_string(), d);
            extra.by_dim.insert(d, key.to_string());
            d
        })
    }
}

fn probe(key: &str, taken: impl Fn(Dim) -> bool) -> Dim {
    let mut d = fnv1a64(key.as_bytes());
    let mut suffix = 0u32;
    while taken(d) {
        suffix += 1;
        d = fnv1a64(format!("{key}#{suffix}").as_bytes());
    }
    d
}

/// Embedding of one graph, with the bookkeeping needed for localization.
#[derive(Clone, Debug, PartialEq)]
pub struct BosVector {
    /// Binarized, L2-normalized features.
    pub entries: FeatureVector,
    /// Number of substructures hashed to each dimension.
    pub raw_counts: BTreeMap<Dim, u32>,
    /// The graph's substructures per dimension.
    pub dim_to_substructures: BTreeMap<Dim, Vec<Substructure>>,
    /// Canonical key per dimension.
    pub keys: BTreeMap<Dim, String>,
    pub graph_id: String,
    pub node_count: usize,
}

impl BosVector {
    pub fn nonzero_dims(&self) -> usize {
        self.raw_counts.len()
    }

    pub fn value(&self, d: Dim) -> f64 {
        self.entries.get(d)
    }
}

/// Embeds a single graph in a fresh feature space.
pub fn embed(g: &AppGraph) -> Result<BosVector> {
    FeatureSpace::new().embed(g)
}

fn embed_with(g: &AppGraph, mut dim_of: impl FnMut(&str) -> Dim) -> Result<BosVector> {
    if g.nodes.is_empty() {
        return Err(Error::input(format!("graph `{}` has no nodes to embed", g.graph_id)));
    }
    let index = g.index()?;
    let mut raw_counts: BTreeMap<Dim, u32> = BTreeMap::new();
    let mut dim_to_substructures: BTreeMap<Dim, Vec<Substructure>> = BTreeMap::new();
    let mut keys = BTreeMap::new();
    for s in extract_with_index(&index, g.nodes.len()) {
        let key = canonical_key(g, &s);
        let d = dim_of(&key);
        *raw_counts.entry(d).or_default() += 1;
        dim_to_substructures.entry(d).or_default().push(s);
        keys.entry(d).or_insert(key);
    }
    let value = 1.0 / (raw_counts.len() as f64).sqrt();
    let entries = FeatureVector::sparse(raw_counts.keys().map(|&d| (d, value)).collect())?;
    Ok(BosVector {
        entries,
        raw_counts,
        dim_to_substructures,
        keys,
        graph_id: g.graph_id.clone(),
        node_count: g.nodes.len(),
    })
}

//! Tracing structural predictions back to nodes and edges.
//!
//! With a sum-decomposable kernel the unthresholded prediction splits into
//! per-dimension terms `g_d`. Each present dimension's term is shared among
//! the substructures hashed there, every node and edge averages the shares
//! of the substructures covering it, and the result is scaled to `[0, 1]`.
//!
//! For the SVDD the terms are squared-distance contributions (higher means
//! more anomalous). For the one-class SVM they measure benignity and are
//! flipped against the most benign object before scaling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Dim, FeatureVector};
use crate::oneclass::OneClassModel;
use crate::structural::{key_labels, AppGraph, BosVector, FeatureSpace};

/// `g_d = k(x_d, x_d) - 2 sum_i a_i k(x_id, x_d) + sum_ij a_i a_j k(x_id, x_jd)`,
/// over every dimension where `x` or a support point is nonzero. Sums to `a(x)`.
pub fn dimensional_scores_svdd(model: &OneClassModel, x: &FeatureVector) -> Result<BTreeMap<Dim, f64>> {
    let kernel = model.kernel();
    let self_terms = model.dimension_self_terms()?;
    let cross = cross_terms(model, x)?;
    let mut scores = BTreeMap::new();
    for (d, xd) in x.iter() {
        if xd == 0.0 && !self_terms.contains_key(&d) {
            continue;
        }
        let g = kernel.evaluate_dimension(xd, xd)? - 2.0 * cross.get(&d).copied().unwrap_or(0.0)
            + self_terms.get(&d).copied().unwrap_or(0.0);
        scores.insert(d, g);
    }
    for (&d, &t) in self_terms {
        scores.entry(d).or_insert_with(|| {
            // x_d = 0 here
            t - 2.0 * cross.get(&d).copied().unwrap_or(0.0)
        });
    }
    Ok(scores)
}

/// `g_d = sum_i a_i k(x_id, x_d)`. Sums to `f(x) + b`.
pub fn dimensional_scores_ocsvm(model: &OneClassModel, x: &FeatureVector) -> Result<BTreeMap<Dim, f64>> {
    if !model.kernel().is_decomposable() {
        return Err(Error::UnsupportedKernel(model.kernel_spec().kind.clone()));
    }
    let mut scores = cross_terms(model, x)?;
    for (d, _) in x.iter() {
        scores.entry(d).or_insert(0.0);
    }
    Ok(scores)
}

/// `sum_i a_i k(x_id, x_d)` per dimension where some support point is nonzero.
fn cross_terms(model: &OneClassModel, x: &FeatureVector) -> Result<BTreeMap<Dim, f64>> {
    let kernel = model.kernel();
    if !kernel.is_decomposable() {
        return Err(Error::UnsupportedKernel(model.kernel_spec().kind.clone()));
    }
    let mut cross = BTreeMap::new();
    for (sv, &a) in model.support_points().iter().zip(model.alphas()) {
        if sv.is_sparse() != x.is_sparse() {
            return Err(Error::input("cannot combine dense and sparse feature vectors"));
        }
        for (d, v) in sv.iter() {
            if v != 0.0 {
                *cross.entry(d).or_insert(0.0) += a * kernel.evaluate_dimension(v, x.get(d))?;
            }
        }
    }
    Ok(cross)
}

/// Which objects share one normalization maximum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationScope {
    #[default]
    SingleGraph,
    GraphSet,
}

/// Best-effort pointer for anomaly mass on a dimension the graph lacks:
/// the nodes of `g` carrying a label of the expected substructure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingHint {
    pub dimension: Dim,
    pub mass: f64,
    pub expected_key: String,
    pub nodes: Vec<String>,
    pub heuristic: bool,
}

/// Per-object ratings before conversion and scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct RawLocalScores {
    pub method: String,
    /// Benignity for `ocsvm`, anomaly mass for `svdd`.
    pub benignity: bool,
    pub node_scores: BTreeMap<String, f64>,
    pub edge_scores: BTreeMap<(String, String), f64>,
    pub global_residual: f64,
    pub missing_hints: Vec<MissingHint>,
}

/// Node and edge anomaly ratings in `[0, 1]` for one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalScores {
    pub method: String,
    pub node_scores: BTreeMap<String, f64>,
    pub edge_scores: BTreeMap<(String, String), f64>,
    /// SVDD mass on dimensions absent from the graph.
    pub global_residual: f64,
    pub missing_hints: Vec<MissingHint>,
}

impl LocalScores {
    pub fn max_score(&self) -> f64 {
        self.node_scores
            .values()
            .chain(self.edge_scores.values())
            .copied()
            .fold(0.0, f64::max)
    }

    /// `{"nodes": {id: score}, "edges": {"src->dst": score}, "global_residual": r, ...}`
    pub fn to_json(&self) -> serde_json::Value {
        let edges: serde_json::Map<String, serde_json::Value> = self
            .edge_scores
            .iter()
            .map(|((s, d), v)| (format!("{s}->{d}"), (*v).into()))
            .collect();
        serde_json::json!({
            "method": self.method,
            "nodes": self.node_scores,
            "edges": edges,
            "global_residual": self.global_residual,
            "missing_hints": self.missing_hints,
        })
    }
}

/// Localizes and scales within the single graph.
pub fn localize(model: &OneClassModel, g: &AppGraph, x: &BosVector, space: Option<&FeatureSpace>) -> Result<LocalScores> {
    let raw = localize_raw(model, g, x, space)?;
    Ok(finalize(vec![raw]).pop().expect("one input"))
}

/// Projects dimensional scores onto nodes and edges of `g`.
///
/// `space` resolves keys of dimensions the graph lacks, for missing-structure
/// hints; without it no hints are produced.
pub fn localize_raw(
    model: &OneClassModel,
    g: &AppGraph,
    x: &BosVector,
    space: Option<&FeatureSpace>,
) -> Result<RawLocalScores> {
    check_fresh(g, x)?;
    let method = model.method();
    let dims = method.dimensional_scores(model, &x.entries)?;

    let node_count = g.nodes.len();
    let mut node_sum = vec![0.0; node_count];
    let mut node_cover = vec![0u32; node_count];
    let mut edge_acc: BTreeMap<(usize, usize), (f64, u32)> = BTreeMap::new();
    let mut residual = 0.0;
    let mut hints = Vec::new();

    for (&d, &gd) in &dims {
        let Some(subs) = x.dim_to_substructures.get(&d) else {
            residual += gd;
            if gd > 0.0 {
                if let Some(hint) = space.and_then(|s| missing_hint(g, s, d, gd)) {
                    hints.push(hint);
                }
            }
            continue;
        };
        // q(s): the dimension's term split equally over its raw count
        let share = gd / x.raw_counts[&d] as f64;
        for s in subs {
            for &v in &s.nodes {
                node_sum[v] += share;
                node_cover[v] += 1;
            }
            for &e in &s.edges {
                let slot = edge_acc.entry(e).or_insert((0.0, 0));
                slot.0 += share;
                slot.1 += 1;
            }
        }
    }

    // Objects covered by no scored substructure (all-zero dimensions) get 0.
    let mut node_scores = BTreeMap::new();
    for (i, n) in g.nodes.iter().enumerate() {
        let r = if node_cover[i] > 0 {
            node_sum[i] / node_cover[i] as f64
        } else {
            0.0
        };
        node_scores.insert(n.id.clone(), r);
    }
    let index = g.index()?;
    let mut edge_scores = BTreeMap::new();
    for (s, t) in &g.edges {
        let key = (index.position[s], index.position[t]);
        let r = edge_acc.get(&key).map(|(sum, n)| sum / *n as f64).unwrap_or(0.0);
        edge_scores.insert((s.clone(), t.clone()), r);
    }
    Ok(RawLocalScores {
        method: model.method_name().to_string(),
        benignity: method.scores_are_benignity(),
        node_scores,
        edge_scores,
        global_residual: residual,
        missing_hints: hints,
    })
}

fn check_fresh(g: &AppGraph, x: &BosVector) -> Result<()> {
    let stale = x.graph_id != g.graph_id
        || x.node_count != g.nodes.len()
        || x.raw_counts.values().map(|&c| c as usize).sum::<usize>() != g.nodes.len()
        || x
            .dim_to_substructures
            .values()
            .flatten()
            .any(|s| s.nodes.iter().any(|&v| v >= g.nodes.len()));
    if stale {
        return Err(Error::StaleDimensionMap(g.graph_id.clone()));
    }
    Ok(())
}

fn missing_hint(g: &AppGraph, space: &FeatureSpace, d: Dim, mass: f64) -> Option<MissingHint> {
    let key = space.key(d)?;
    let (center, mut labels) = key_labels(key)?;
    labels.push(center);
    let nodes: Vec<String> = g
        .nodes
        .iter()
        .filter(|n| labels.contains(&n.label))
        .map(|n| n.id.clone())
        .collect();
    if nodes.is_empty() {
        return None;
    }
    Some(MissingHint {
        dimension: d,
        mass,
        expected_key: key.to_string(),
        nodes,
        heuristic: true,
    })
}

/// Converts benignity to malignity and scales to `[0, 1]`, with the maximum
/// taken jointly over all given graphs. Pass one graph for single-graph scope.
pub fn finalize(raw: Vec<RawLocalScores>) -> Vec<LocalScores> {
    let values = |r: &RawLocalScores| -> Vec<f64> {
        r.node_scores.values().chain(r.edge_scores.values()).copied().collect()
    };
    let max_benign = raw
        .iter()
        .filter(|r| r.benignity)
        .flat_map(values)
        .fold(f64::NEG_INFINITY, f64::max);

    let convert = |r: &RawLocalScores, v: f64| -> f64 {
        let v = if r.benignity { max_benign - v } else { v };
        // tiny negative round-off from the decomposition
        v.max(0.0)
    };
    let max_anomaly = raw
        .iter()
        .flat_map(|r| values(r).into_iter().map(move |v| convert(r, v)))
        .fold(0.0, f64::max);
    let scale = |v: f64| if max_anomaly > 0.0 { v / max_anomaly } else { 0.0 };

    raw.iter()
        .map(|r| LocalScores {
            method: r.method.clone(),
            node_scores: r
                .node_scores
                .iter()
                .map(|(k, &v)| (k.clone(), scale(convert(r, v))))
                .collect(),
            edge_scores: r
                .edge_scores
                .iter()
                .map(|(k, &v)| (k.clone(), scale(convert(r, v))))
                .collect(),
            global_residual: r.global_residual,
            missing_hints: r.missing_hints.clone(),
        })
        .collect()
}

/// Localizes several graphs and scales them jointly or one by one.
pub fn localize_many(
    model: &OneClassModel,
    items: &[(&AppGraph, &BosVector)],
    space: Option<&FeatureSpace>,
    scope: NormalizationScope,
) -> Result<Vec<LocalScores>> {
    let raw = items
        .iter()
        .map(|(g, x)| localize_raw(model, g, x, space))
        .collect::<Result<Vec<_>>>()?;
    Ok(match scope {
        NormalizationScope::GraphSet => finalize(raw),
        NormalizationScope::SingleGraph => raw.into_iter().flat_map(|r| finalize(vec![r])).collect(),
    })
}

/// White-to-red fill for a rating in `[0, 1]`.
pub fn threat_color(r: f64) -> String {
    let fade = (255.0 * (1.0 - r.clamp(0.0, 1.0))).round() as u8;
    format!("#ff{fade:02x}{fade:02x}")
}

fn dot_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Graphviz document with each node and edge colored by its rating.
pub fn export_dot(g: &AppGraph, scores: &LocalScores) -> String {
    let mut out = String::new();
    writeln!(out, "digraph {} {{", dot_quote(&g.graph_id)).unwrap();
    writeln!(out, "  node [style=filled, shape=box];").unwrap();
    for n in &g.nodes {
        let r = scores.node_scores.get(&n.id).copied().unwrap_or(0.0);
        writeln!(
            out,
            "  {} [label={}, threat=\"{r:.2}\", fillcolor=\"{}\"];",
            dot_quote(&n.id),
            dot_quote(&format!("{}\n{r:.2}", n.label)),
            threat_color(r)
        )
        .unwrap();
    }
    for (s, d) in &g.edges {
        let r = scores
            .edge_scores
            .get(&(s.clone(), d.clone()))
            .copied()
            .unwrap_or(0.0);
        let color = threat_color(r);
        writeln!(
            out,
            "  {} -> {} [threat=\"{r:.2}\", color=\"{color}\", fillcolor=\"{color}\"];",
            dot_quote(s),
            dot_quote(d)
        )
        .unwrap();
    }
    if !scores.missing_hints.is_empty() {
        let nodes: BTreeSet<&str> = scores
            .missing_hints
            .iter()
            .flat_map(|h| h.nodes.iter().map(String::as_str))
            .collect();
        let joined: Vec<&str> = nodes.into_iter().collect();
        writeln!(
            out,
            "  label={};",
            dot_quote(&format!(
                "residual {:.3}; heuristic: expected structure missing around {}",
                scores.global_residual,
                joined.join(", ")
            ))
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

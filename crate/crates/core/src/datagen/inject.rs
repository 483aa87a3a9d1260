//! Structural anomaly injection with exact ground truth.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structural::{AppGraph, Node};

use super::graphs::GraphFamily;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyCategory {
    Removed,
    Added,
    Changed,
    Mixed,
}

impl AnomalyCategory {
    pub const ALL: [AnomalyCategory; 4] = [Self::Removed, Self::Added, Self::Changed, Self::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            Self::Removed => "removed",
            Self::Added => "added",
            Self::Changed => "changed",
            Self::Mixed => "mixed",
        }
    }

    /// Cheapest edit of the category.
    fn min_cost(self) -> usize {
        match self {
            Self::Changed => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub category: AnomalyCategory,
    pub max_edit_distance: usize,
    pub fraction_anomalous: f64,
}

impl AnomalySpec {
    pub fn for_family(family: GraphFamily, category: AnomalyCategory) -> Self {
        AnomalySpec {
            category,
            max_edit_distance: match family {
                GraphFamily::RecordedLike => 5,
                GraphFamily::Synthetic => 8,
            },
            fraction_anomalous: 0.10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_edit_distance < self.category.min_cost() {
            return Err(Error::config(format!(
                "{} anomalies need an edit distance of at least {}",
                self.category.name(),
                self.category.min_cost()
            )));
        }
        if !(self.fraction_anomalous > 0.0 && self.fraction_anomalous < 1.0) {
            return Err(Error::config("fraction_anomalous must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Difference between a benign graph and its modified version.
///
/// `nodes` are present nodes that are new or whose incident edges changed,
/// which covers every surviving neighbor of a removed element; `edges` are
/// the new edges. Removed elements are listed separately since they cannot
/// be scored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub anomalous: bool,
    pub category: Option<AnomalyCategory>,
    pub edit_distance: usize,
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
    pub removed_nodes: BTreeSet<String>,
    pub removed_edges: BTreeSet<(String, String)>,
}

impl GroundTruth {
    pub fn benign() -> Self {
        Self::default()
    }

    pub fn diff(before: &AppGraph, after: &AppGraph) -> Self {
        let ids = |g: &AppGraph| g.nodes.iter().map(|n| n.id.clone()).collect::<BTreeSet<_>>();
        let edges = |g: &AppGraph| g.edges.iter().cloned().collect::<BTreeSet<_>>();
        let (nb, na) = (ids(before), ids(after));
        let (eb, ea) = (edges(before), edges(after));
        let added_nodes: BTreeSet<String> = na.difference(&nb).cloned().collect();
        let removed_nodes: BTreeSet<String> = nb.difference(&na).cloned().collect();
        let added_edges: BTreeSet<(String, String)> = ea.difference(&eb).cloned().collect();
        let removed_edges: BTreeSet<(String, String)> = eb.difference(&ea).cloned().collect();
        let mut nodes = added_nodes.clone();
        for (s, d) in added_edges.iter().chain(&removed_edges) {
            for v in [s, d] {
                if na.contains(v) {
                    nodes.insert(v.clone());
                }
            }
        }
        let edit_distance = added_nodes.len() + removed_nodes.len() + added_edges.len() + removed_edges.len();
        GroundTruth {
            anomalous: edit_distance > 0,
            category: None,
            edit_distance,
            nodes,
            edges: added_edges,
            removed_nodes,
            removed_edges,
        }
    }
}

/// Mutable adjacency bookkeeping while editing.
struct Work {
    nodes: Vec<Node>,
    edges: Vec<(String, String)>,
    degree: HashMap<String, usize>,
    /// Elements introduced by earlier edits are not removed again, and
    /// removed edges are not re-added, so edits never cancel.
    fresh_nodes: HashSet<String>,
    fresh_edges: HashSet<(String, String)>,
    gone_edges: HashSet<(String, String)>,
    counter: usize,
}

impl Work {
    fn new(g: &AppGraph) -> Self {
        let mut degree: HashMap<String, usize> = g.nodes.iter().map(|n| (n.id.clone(), 0)).collect();
        for (s, d) in &g.edges {
            *degree.get_mut(s).expect("validated") += 1;
            *degree.get_mut(d).expect("validated") += 1;
        }
        Work {
            nodes: g.nodes.clone(),
            edges: g.edges.clone(),
            degree,
            fresh_nodes: HashSet::new(),
            fresh_edges: HashSet::new(),
            gone_edges: HashSet::new(),
            counter: 0,
        }
    }

    fn linked(&self, a: &str, b: &str) -> bool {
        self.edges.iter().any(|(s, d)| (s == a && d == b) || (s == b && d == a))
    }

    fn remove_edge_at(&mut self, i: usize) {
        let (s, d) = self.edges.remove(i);
        *self.degree.get_mut(&s).unwrap() -= 1;
        *self.degree.get_mut(&d).unwrap() -= 1;
        self.gone_edges.insert((s, d));
    }

    fn add_edge(&mut self, s: String, d: String) {
        *self.degree.get_mut(&s).unwrap() += 1;
        *self.degree.get_mut(&d).unwrap() += 1;
        self.fresh_edges.insert((s.clone(), d.clone()));
        self.edges.push((s, d));
    }

    fn removable_edges(&self) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&i| {
                let (s, d) = &self.edges[i];
                !self.fresh_edges.contains(&self.edges[i]) && self.degree[s] > 1 && self.degree[d] > 1
            })
            .collect()
    }

    /// Unit edit budget used: one per node plus one per incident edge.
    fn try_remove_node(&mut self, rng: &mut impl Rng, budget: usize) -> Option<usize> {
        let candidates: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| {
                let id = &self.nodes[i].id;
                if self.fresh_nodes.contains(id) || 1 + self.degree[id] > budget {
                    return false;
                }
                // no neighbor may end up isolated
                self.edges.iter().all(|(s, d)| {
                    let other = if s == id {
                        d
                    } else if d == id {
                        s
                    } else {
                        return true;
                    };
                    self.degree[other] > 1 && !self.fresh_edges.contains(&(s.clone(), d.clone()))
                })
            })
            .collect();
        let &i = candidates.choose(rng)?;
        let id = self.nodes[i].id.clone();
        let cost = 1 + self.degree[&id];
        while let Some(e) = self.edges.iter().position(|(s, d)| *s == id || *d == id) {
            self.remove_edge_at(e);
        }
        self.nodes.remove(i);
        self.degree.remove(&id);
        Some(cost)
    }

    fn try_remove_edge(&mut self, rng: &mut impl Rng) -> Option<usize> {
        let &i = self.removable_edges().choose(rng)?;
        self.remove_edge_at(i);
        Some(1)
    }

    fn try_add_edge(&mut self, rng: &mut impl Rng) -> Option<usize> {
        for _ in 0..200 {
            let a = self.nodes.choose(rng)?.id.clone();
            let b = self.nodes.choose(rng)?.id.clone();
            if a == b || self.linked(&a, &b) || self.gone_edges.contains(&(a.clone(), b.clone())) {
                continue;
            }
            self.add_edge(a, b);
            return Some(1);
        }
        None
    }

    /// A node of an existing type attached to a random component.
    fn try_add_node(&mut self, rng: &mut impl Rng, budget: usize) -> Option<usize> {
        if budget < 2 {
            return None;
        }
        let label = self.nodes.choose(rng)?.label.clone();
        let anchor = self.nodes.choose(rng)?.id.clone();
        let id = loop {
            self.counter += 1;
            let id = format!("x{}", self.counter);
            if !self.degree.contains_key(&id) {
                break id;
            }
        };
        self.nodes.push(Node {
            id: id.clone(),
            label,
        });
        self.degree.insert(id.clone(), 0);
        self.fresh_nodes.insert(id.clone());
        if rng.random::<bool>() {
            self.add_edge(anchor, id);
        } else {
            self.add_edge(id, anchor);
        }
        Some(2)
    }

    /// `u -> v` becomes `u -> w`.
    /// `u -> v` becomes `u -> w`, with `w` of the same type as `v` when one exists.
    fn try_redirect(&mut self, rng: &mut impl Rng) -> Option<usize> {
        for _ in 0..200 {
            let &i = self.removable_edges().choose(rng)?;
            let (u, v) = self.edges[i].clone();
            let label = &self.nodes.iter().find(|n| n.id == v)?.label;
            let same: Vec<&String> = self.nodes.iter().filter(|n| &n.label == label && n.id != v).map(|n| &n.id).collect();
            let w = match same.choose(rng) {
                Some(w) => (*w).clone(),
                None => self.nodes.choose(rng)?.id.clone(),
            };
            if w == u || self.linked(&u, &w) || self.gone_edges.contains(&(u.clone(), w.clone())) {
                continue;
            }
            self.remove_edge_at(i);
            self.add_edge(u, w);
            return Some(2);
        }
        None
    }

    /// `a -> b -> c` becomes `a -> c -> b`.
    fn try_invert(&mut self, rng: &mut impl Rng) -> Option<usize> {
        let mut paths = Vec::new();
        for (i, (a, b)) in self.edges.iter().enumerate() {
            if self.fresh_edges.contains(&(a.clone(), b.clone())) {
                continue;
            }
            for (j, (b2, c)) in self.edges.iter().enumerate() {
                if b2 == b
                    && c != a
                    && !self.fresh_edges.contains(&(b2.clone(), c.clone()))
                    && !self.linked(a, c)
                    && !self.edges.contains(&(c.clone(), b.clone()))
                    && !self.gone_edges.contains(&(a.clone(), c.clone()))
                    && !self.gone_edges.contains(&(c.clone(), b.clone()))
                {
                    paths.push((i, j));
                }
            }
        }
        let &(i, j) = paths.choose(rng)?;
        let (a, b) = self.edges[i].clone();
        let (_, c) = self.edges[j].clone();
        self.remove_edge_at(i.max(j));
        self.remove_edge_at(i.min(j));
        self.add_edge(a, c.clone());
        self.add_edge(c, b);
        Some(4)
    }

    fn apply(&mut self, category: AnomalyCategory, rng: &mut impl Rng, budget: usize) -> Option<usize> {
        match category {
            AnomalyCategory::Removed => {
                if budget >= 2 && rng.random_bool(0.3) {
                    if let Some(c) = self.try_remove_node(rng, budget) {
                        return Some(c);
                    }
                }
                self.try_remove_edge(rng)
            }
            AnomalyCategory::Added => {
                if rng.random_bool(0.5) {
                    if let Some(c) = self.try_add_node(rng, budget) {
                        return Some(c);
                    }
                }
                self.try_add_edge(rng)
            }
            AnomalyCategory::Changed => {
                if budget >= 4 && rng.random_bool(0.5) {
                    if let Some(c) = self.try_invert(rng) {
                        return Some(c);
                    }
                }
                if budget >= 2 {
                    self.try_redirect(rng)
                } else {
                    None
                }
            }
            AnomalyCategory::Mixed => {
                let options: Vec<AnomalyCategory> = [AnomalyCategory::Removed, AnomalyCategory::Added, AnomalyCategory::Changed]
                    .into_iter()
                    .filter(|c| c.min_cost() <= budget)
                    .collect();
                let &c = options.choose(rng)?;
                self.apply(c, rng, budget)
            }
        }
    }

    fn finish(self, template: &AppGraph) -> AppGraph {
        AppGraph {
            graph_id: template.graph_id.clone(),
            app_type: template.app_type.clone(),
            timestamp: template.timestamp,
            nodes: self.nodes,
            edges: self.edges,
        }
    }
}

/// Applies between one and `max_edit_distance` unit edits of the category
/// (at least two for `changed`, whose edits each delete and insert).
pub fn inject_anomaly(g: &AppGraph, spec: &AnomalySpec, seed: u64) -> Result<(AppGraph, GroundTruth)> {
    spec.validate()?;
    g.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = rng.random_range(spec.category.min_cost()..=spec.max_edit_distance);
    let mut work = Work::new(g);
    let mut used = 0;
    let mut stalls = 0;
    while used < target && stalls < 20 {
        match work.apply(spec.category, &mut rng, target - used) {
            Some(cost) => used += cost,
            None => stalls += 1,
        }
    }
    if used == 0 {
        return Err(Error::input(format!(
            "graph `{}` is too small to absorb a {} anomaly",
            g.graph_id,
            spec.category.name()
        )));
    }
    let out = work.finish(g);
    out.validate()?;
    let mut truth = GroundTruth::diff(g, &out);
    truth.category = Some(spec.category);
    debug_assert_eq!(truth.edit_distance, used);
    Ok((out, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(labels: &[&str]) -> AppGraph {
        let mut g = AppGraph::new("p", "demo");
        for (i, l) in labels.iter().enumerate() {
            g.add_node(format!("n{i}"), *l);
        }
        for i in 1..labels.len() {
            g.add_edge(format!("n{}", i - 1), format!("n{i}"));
        }
        g
    }

    fn spec(category: AnomalyCategory, max: usize) -> AnomalySpec {
        AnomalySpec {
            category,
            max_edit_distance: max,
            fraction_anomalous: 0.1,
        }
    }

    #[test]
    fn single_removal() {
        let g = path(&["A", "B", "C", "D", "E"]);
        let (h, truth) = inject_anomaly(&g, &spec(AnomalyCategory::Removed, 1), 3).unwrap();
        assert_eq!(h.edges.len(), g.edges.len() - 1);
        assert_eq!(truth.edit_distance, 1);
        assert_eq!(truth.removed_edges.len(), 1);
        // only the middle edges can go without isolating an end
        let (s, d) = truth.removed_edges.iter().next().unwrap();
        assert!(s != "n0" && d != "n4");
        assert_eq!(truth.nodes, [s.clone(), d.clone()].into());
    }

    #[test]
    fn inverted_path_truth() {
        let g = path(&["A", "B", "C"]);
        let mut work = Work::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(work.try_invert(&mut rng), Some(4));
        let h = work.finish(&g);
        let truth = GroundTruth::diff(&g, &h);
        assert_eq!(truth.nodes, ["n0", "n1", "n2"].map(String::from).into());
        assert_eq!(
            truth.edges,
            [("n0", "n2"), ("n2", "n1")].map(|(a, b)| (a.to_string(), b.to_string())).into()
        );
        assert_eq!(truth.removed_edges.len(), 2);
    }

    #[test]
    fn too_small_graph() {
        let g = path(&["A", "B"]);
        assert!(inject_anomaly(&g, &spec(AnomalyCategory::Removed, 3), 1).is_err());
        assert!(inject_anomaly(&g, &spec(AnomalyCategory::Changed, 1), 1).is_err());
    }

    #[test]
    fn seeded() {
        let g = path(&["A", "B", "C", "D", "E", "F", "G"]);
        for c in AnomalyCategory::ALL {
            let a = inject_anomaly(&g, &spec(c, 5), 11).unwrap();
            assert_eq!(a, inject_anomaly(&g, &spec(c, 5), 11).unwrap());
            assert!(a.1.anomalous && a.1.edit_distance <= 5);
        }
    }
}

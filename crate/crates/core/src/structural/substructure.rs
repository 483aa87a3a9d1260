//! Degree-1 neighborhoods and their canonical keys.

use crate::error::Result;

use super::graph::{AppGraph, GraphIndex};

/// A center node, every node sharing an edge with it (either direction),
/// and all directed edges among those nodes.
///
/// Nodes are positions in the source graph's node list.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Substructure {
    pub center: usize,
    /// Sorted, includes `center`.
    pub nodes: Vec<usize>,
    /// Sorted directed edges with both endpoints in `nodes`.
    pub edges: Vec<(usize, usize)>,
}

impl Substructure {
    pub fn contains_node(&self, node: usize) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }

    pub fn contains_edge(&self, edge: (usize, usize)) -> bool {
        self.edges.binary_search(&edge).is_ok()
    }

    pub fn node_ids<'g>(&self, g: &'g AppGraph) -> Vec<&'g str> {
        self.nodes.iter().map(|&i| g.nodes[i].id.as_str()).collect()
    }
}

/// One substructure per node, in node order.
pub fn extract_substructures(g: &AppGraph) -> Result<Vec<Substructure>> {
    let index = g.index()?;
    Ok(extract_with_index(&index, g.nodes.len()))
}

pub(crate) fn extract_with_index(index: &GraphIndex, node_count: usize) -> Vec<Substructure> {
    (0..node_count).map(|u| neighborhood(index, u)).collect()
}

fn neighborhood(index: &GraphIndex, center: usize) -> Substructure {
    let adjacent = index.neighbors(center);
    let mut nodes = Vec::with_capacity(adjacent.len() + 1);
    nodes.push(center);
    nodes.extend_from_slice(adjacent);
    nodes.sort_unstable();

    let mut edges = Vec::new();
    for &v in &nodes {
        for &w in index.successors(v) {
            if nodes.binary_search(&w).is_ok() {
                edges.push((v, w));
            }
        }
    }
    // outer loop runs over sorted nodes and successor lists are sorted
    debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
    Substructure {
        center,
        nodes,
        edges,
    }
}

/// Label-based encoding of a substructure, invariant under renaming node
/// ids: the center label, the sorted neighbor labels, and the sorted
/// directed edges as label pairs with the center marked by `*`.
pub fn canonical_key(g: &AppGraph, s: &Substructure) -> String {
    let label = |i: usize| escape(&g.nodes[i].label);
    let mark = |i: usize| {
        if i == s.center {
            format!("*{}", label(i))
        } else {
            label(i)
        }
    };
    let mut neighbors: Vec<String> = s
        .nodes
        .iter()
        .filter(|&&v| v != s.center)
        .map(|&v| label(v))
        .collect();
    neighbors.sort_unstable();
    let mut edges: Vec<String> = s
        .edges
        .iter()
        .map(|&(a, b)| format!("{}>{}", mark(a), mark(b)))
        .collect();
    edges.sort_unstable();
    format!("{}|{}|{}", label(s.center), neighbors.join(","), edges.join(","))
}

/// Splits a canonical key into the center label and the neighbor labels.
pub fn key_labels(key: &str) -> Option<(String, Vec<String>)> {
    let mut parts = key.splitn(3, '|');
    let center = unescape(parts.next()?);
    let neighbors = parts.next()?;
    let neighbors = if neighbors.is_empty() {
        Vec::new()
    } else {
        neighbors.split(',').map(unescape).collect()
    };
    Some((center, neighbors))
}

fn escape(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        match c {
            '%' | '|' | ',' | '>' | '*' => out.push_str(&format!("%{:02X}", c as u32)),
            _ => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '%' {
            let hex: String = chars.by_ref().take(2).collect();
            if let Ok(v) = u8::from_str_radix(&hex, 16) {
                out.push(v as char);
            }
        } else {
            out.push(c);
        }
    }
    out
}

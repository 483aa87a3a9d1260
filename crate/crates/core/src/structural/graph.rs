use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    /// Component type, e.g. `scale` or `crop`.
    pub label: String,
}

/// One structural snapshot of a running application.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppGraph {
    pub graph_id: String,
    pub app_type: String,
    pub timestamp: i64,
    pub nodes: Vec<Node>,
    pub edges: Vec<(String, String)>,
}

impl AppGraph {
    pub fn new(graph_id: impl Into<String>, app_type: impl Into<String>) -> Self {
        AppGraph {
            graph_id: graph_id.into(),
            app_type: app_type.into(),
            timestamp: 0,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn add_node(&mut self, id: impl Into<String>, label: impl Into<String>) {
        self.nodes.push(Node {
            id: id.into(),
            label: label.into(),
        });
    }

    pub fn add_edge(&mut self, src: impl Into<String>, dst: impl Into<String>) {
        self.edges.push((src.into(), dst.into()));
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::with_capacity(self.nodes.len());
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                return Err(self.invalid(format!("duplicate node id `{}`", n.id)));
            }
        }
        let mut seen = HashSet::with_capacity(self.edges.len());
        for (s, d) in &self.edges {
            if !ids.contains(s.as_str()) || !ids.contains(d.as_str()) {
                return Err(self.invalid(format!("edge {s}->{d} references a missing node")));
            }
            if s == d {
                return Err(self.invalid(format!("self-loop on `{s}`")));
            }
            if !seen.insert((s.as_str(), d.as_str())) {
                return Err(self.invalid(format!("duplicate edge {s}->{d}")));
            }
        }
        Ok(())
    }

    fn invalid(&self, msg: String) -> Error {
        Error::Input(format!("graph `{}`: {msg}", self.graph_id))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: AppGraph = serde_json::from_str(s)?;
        g.validate()?;
        Ok(g)
    }

    /// Reads a single graph document or a JSON-lines stream of them.
    pub fn read_all(path: &Path) -> Result<Vec<AppGraph>> {
        let text = std::fs::read_to_string(path)?;
        let trimmed = text.trim_start();
        if let Ok(g) = serde_json::from_str::<AppGraph>(trimmed) {
            g.validate()?;
            return Ok(vec![g]);
        }
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(AppGraph::from_json)
            .collect()
    }

    pub fn index(&self) -> Result<GraphIndex> {
        GraphIndex::new(self)
    }
}

/// Adjacency view of an [`AppGraph`] keyed by node position.
#[derive(Debug, Clone)]
pub struct GraphIndex {
    pub(crate) position: HashMap<String, usize>,
    /// Direction-blind neighbors, sorted.
    pub(crate) neighbors: Vec<Vec<usize>>,
    /// Out-neighbors, sorted.
    pub(crate) successors: Vec<Vec<usize>>,
}

impl GraphIndex {
    fn new(g: &AppGraph) -> Result<Self> {
        g.validate()?;
        let position: HashMap<String, usize> = g
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        let n = g.nodes.len();
        let mut neighbors = vec![Vec::new(); n];
        let mut successors = vec![Vec::new(); n];
        for (s, d) in &g.edges {
            let (s, d) = (position[s], position[d]);
            successors[s].push(d);
            neighbors[s].push(d);
            neighbors[d].push(s);
        }
        for list in neighbors.iter_mut().chain(successors.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Ok(GraphIndex {
            position,
            neighbors,
            successors,
        })
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.position.get(id).copied()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn successors(&self, node: usize) -> &[usize] {
        &self.successors[node]
    }
}

//! Application graph generator.
//!
//! Every user of a conference application runs a core pipeline of typed
//! components; every pair of users is joined by a short connector chain.
//! The recorded-like family uses one fixed core; the synthetic family
//! varies component types, optional components and wiring per user.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structural::AppGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphFamily {
    RecordedLike,
    Synthetic,
}

impl GraphFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::RecordedLike => "recorded-like",
            Self::Synthetic => "synthetic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub role: String,
    /// First entry is the default type; others are drawn with
    /// probability `label_variation`.
    pub labels: Vec<String>,
    /// Inclusion probability.
    pub presence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreTemplate {
    pub components: Vec<ComponentSpec>,
    /// Edges between roles; dropped when an endpoint is absent.
    pub edges: Vec<(String, String)>,
    /// Alternative wiring, each present with the profile's
    /// `optional_edge_presence`.
    #[serde(default)]
    pub optional_edges: Vec<(String, String)>,
    /// Role receiving connector chains.
    pub entry: String,
    /// Role emitting connector chains.
    pub exit: String,
}

fn component(role: &str, labels: &[&str], presence: f64) -> ComponentSpec {
    ComponentSpec {
        role: role.into(),
        labels: labels.iter().map(|l| l.to_string()).collect(),
        presence,
    }
}

impl CoreTemplate {
    /// The per-user media pipeline of a video conference.
    pub fn conference() -> Self {
        let components = vec![
            component("session", &["session"], 1.0),
            component("src", &["udpsrc"], 1.0),
            component("depay", &["rtpmp4vdepay", "rtph264depay"], 1.0),
            component("dec", &["avdec", "vp8dec"], 1.0),
            component("scale", &["scale"], 1.0),
            component("crop", &["crop"], 1.0),
            component("mix", &["vc2gr"], 1.0),
            component("enc", &["avenc", "vp8enc"], 1.0),
            component("pay", &["rtpmp4vpay", "rtph264pay"], 1.0),
            component("sink", &["udpsink"], 1.0),
            component("asrc", &["audiosrc"], 1.0),
            component("amix", &["audiomixer"], 1.0),
            component("fps", &["fpsdisplay"], 0.25),
        ];
        let edges = [
            ("session", "src"),
            ("session", "sink"),
            ("session", "asrc"),
            ("session", "mix"),
            ("session", "fps"),
            ("src", "depay"),
            ("depay", "dec"),
            ("dec", "scale"),
            ("scale", "crop"),
            ("crop", "mix"),
            ("dec", "mix"),
            ("scale", "mix"),
            ("mix", "enc"),
            ("enc", "pay"),
            ("pay", "sink"),
            ("asrc", "amix"),
            ("amix", "pay"),
            ("amix", "sink"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        CoreTemplate {
            components,
            edges,
            optional_edges: Vec::new(),
            entry: "mix".into(),
            exit: "pay".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        let roles: HashSet<&str> = self.components.iter().map(|c| c.role.as_str()).collect();
        if roles.len() != self.components.len() {
            return Err(Error::config("core template has duplicate roles"));
        }
        for c in &self.components {
            if c.labels.is_empty() || !(0.0..=1.0).contains(&c.presence) {
                return Err(Error::config(format!("component `{}` needs a label and presence in [0, 1]", c.role)));
            }
        }
        for r in self
            .edges
            .iter()
            .chain(&self.optional_edges)
            .flat_map(|(a, b)| [a, b]).chain([&self.entry, &self.exit]) {
            if !roles.contains(r.as_str()) {
                return Err(Error::config(format!("core template references unknown role `{r}`")));
            }
        }
        for role in [&self.entry, &self.exit] {
            if self.components.iter().any(|c| &c.role == role && c.presence < 1.0) {
                return Err(Error::config(format!("connector role `{role}` must always be present")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphGenProfile {
    pub family: GraphFamily,
    pub app_type: String,
    /// Inclusive.
    pub user_count_range: (usize, usize),
    pub core: CoreTemplate,
    /// Relay types by chain position, see [`connector_label`].
    pub connector_labels: Vec<String>,
    /// Inclusive range of relay components per connector.
    pub connector_length_range: (usize, usize),
    /// Probability of an alternative component type.
    pub label_variation: f64,
    pub optional_edge_presence: f64,
    pub seed: u64,
}

impl GraphGenProfile {
    pub fn recorded_like(seed: u64) -> Self {
        GraphGenProfile {
            family: GraphFamily::RecordedLike,
            app_type: "videoconference".into(),
            user_count_range: (5, 6),
            core: CoreTemplate::conference(),
            connector_labels: vec!["queue".into()],
            connector_length_range: (0, 2),
            label_variation: 0.0,
            optional_edge_presence: 0.0,
            seed,
        }
    }

    pub fn synthetic(seed: u64) -> Self {
        let mut core = CoreTemplate::conference();
        for (role, labels, presence) in [
            ("overlay", &["textoverlay"][..], 1.0),
            ("rec", &["filesink", "mp4mux"][..], 1.0),
        ] {
            core.components.push(component(role, labels, presence));
        }
        core.edges.push(("mix".into(), "overlay".into()));
        core.edges.push(("session".into(), "rec".into()));
        core.optional_edges = [("dec", "crop"), ("enc", "sink"), ("session", "enc")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        GraphGenProfile {
            family: GraphFamily::Synthetic,
            app_type: "videoconference".into(),
            user_count_range: (6, 7),
            core,
            connector_labels: vec!["queue".into(), "tee".into()],
            connector_length_range: (0, 3),
            label_variation: 0.0,
            optional_edge_presence: 1.0,
            seed,
        }
    }

    pub fn for_family(family: GraphFamily, seed: u64) -> Self {
        match family {
            GraphFamily::RecordedLike => Self::recorded_like(seed),
            GraphFamily::Synthetic => Self::synthetic(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.user_count_range;
        if lo < 1 || hi < lo {
            return Err(Error::config(format!("user count range ({lo}, {hi}) needs 1 <= min <= max")));
        }
        let (clo, chi) = self.connector_length_range;
        if chi < clo || (chi > 0 && self.connector_labels.is_empty()) {
            return Err(Error::config("invalid connector configuration"));
        }
        if !(0.0..=1.0).contains(&self.label_variation) || !(0.0..=1.0).contains(&self.optional_edge_presence) {
            return Err(Error::config("invalid variation parameters"));
        }
        self.core.validate()
    }
}

/// Generates one benign graph with a user count drawn from the profile's range.
pub fn gen_graph(profile: &GraphGenProfile) -> Result<AppGraph> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let (lo, hi) = profile.user_count_range;
    let users = rng.random_range(lo..=hi);
    build(profile, users, &mut rng)
}

/// Generates one benign graph with exactly `users` users.
pub fn gen_graph_with_users(profile: &GraphGenProfile, users: usize) -> Result<AppGraph> {
    profile.validate()?;
    if users < 1 {
        return Err(Error::config("at least one user is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    build(profile, users, &mut rng)
}

fn build(profile: &GraphGenProfile, users: usize, rng: &mut ChaCha8Rng) -> Result<AppGraph> {
    let mut g = AppGraph::new(format!("{}-{:016x}", profile.family.name(), profile.seed), &profile.app_type);
    let mut present = vec![HashSet::new(); users];
    let mut wired: HashSet<(String, String)> = HashSet::new();
    fn link(g: &mut AppGraph, wired: &mut HashSet<(String, String)>, a: String, b: String) {
        if wired.insert((a.clone(), b.clone())) {
            g.add_edge(a, b);
        }
    }
    let id = |u: usize, role: &str| format!("u{u}.{role}");

    for (u, roles) in present.iter_mut().enumerate() {
        for c in &profile.core.components {
            if c.presence < 1.0 && rng.random::<f64>() >= c.presence {
                continue;
            }
            let label = if c.labels.len() > 1 && rng.random::<f64>() < profile.label_variation {
                c.labels[1..].choose(rng).expect("nonempty")
            } else {
                &c.labels[0]
            };
            g.add_node(id(u, &c.role), label.as_str());
            roles.insert(c.role.clone());
        }
        for (a, b) in &profile.core.edges {
            if roles.contains(a) && roles.contains(b) {
                link(&mut g, &mut wired, id(u, a), id(u, b));
            }
        }
        for (a, b) in &profile.core.optional_edges {
            if roles.contains(a) && roles.contains(b) && rng.random::<f64>() < profile.optional_edge_presence {
                link(&mut g, &mut wired, id(u, a), id(u, b));
            }
        }
    }

    let (clo, chi) = profile.connector_length_range;
    for i in 0..users {
        for j in i + 1..users {
            let len = rng.random_range(clo..=chi);
            let mut prev = id(i, &profile.core.exit);
            for k in 0..len {
                let node = format!("l{i}-{j}.{k}");
                let label = connector_label(&profile.connector_labels, k, len);
                g.add_node(node.clone(), label);
                link(&mut g, &mut wired, prev, node.clone());
                prev = node;
            }
            link(&mut g, &mut wired, prev, id(j, &profile.core.entry));
        }
    }
    g.validate()?;
    Ok(g)
}

/// Type of relay `k` in a chain of `len`: the last relay takes the first
/// label, the first relay the second, and inner relays the rest in turn.
fn connector_label(labels: &[String], k: usize, len: usize) -> &str {
    let from_end = len - 1 - k;
    let idx = if from_end == 0 || labels.len() == 1 {
        0
    } else if k == 0 || labels.len() == 2 {
        1
    } else {
        2 + (k - 1) % (labels.len() - 2)
    };
    &labels[idx.min(labels.len() - 1)]
}

/// Fixed pool of distinct snapshots standing in for a recording.
#[derive(Clone, Debug)]
pub struct RecordingPool {
    pub snapshots: Vec<AppGraph>,
}

impl RecordingPool {
    pub fn new(profile: &GraphGenProfile, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::config("recording pool needs at least one snapshot"));
        }
        let snapshots = (0..size as u64)
            .map(|i| {
                let mut p = profile.clone();
                p.seed = super::derive_seed(profile.seed, i);
                gen_graph(&p)
            })
            .collect::<Result<_>>()?;
        Ok(RecordingPool { snapshots })
    }

    /// Draws with replacement.
    pub fn draw(&self, rng: &mut impl Rng) -> AppGraph {
        self.snapshots.choose(rng).expect("nonempty pool").clone()
    }
}

/// Mean node count, edge count and average degree.
pub fn graph_stats(graphs: &[AppGraph]) -> (f64, f64, f64) {
    let n = graphs.len().max(1) as f64;
    let nodes: usize = graphs.iter().map(|g| g.nodes.len()).sum();
    let edges: usize = graphs.iter().map(|g| g.edges.len()).sum();
    let degree: f64 = graphs
        .iter()
        .map(|g| 2.0 * g.edges.len() as f64 / g.nodes.len().max(1) as f64)
        .sum();
    (nodes as f64 / n, edges as f64 / n, degree / n)
}

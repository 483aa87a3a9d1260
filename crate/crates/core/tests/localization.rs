mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use common::random_graph;
use compguard::datagen::{gen_graph, GraphGenProfile};
use compguard::localization::{export_dot, localize};
use compguard::oneclass::{TrainConfig, OCSVM, SVDD};
use compguard::structural::{score_graph, AppGraph, StructuralModel, Verdict};
use compguard::KernelSpec;

fn train(graphs: &[AppGraph], method: &str) -> StructuralModel {
    StructuralModel::train(graphs, method, &KernelSpec::histogram_intersection(), &TrainConfig::with_c(1.0)).unwrap()
}

/// Statements of a DOT document: node ids with their attributes and edge
/// endpoints with theirs. Panics on anything it does not understand.
fn parse_dot(text: &str) -> (BTreeMap<String, String>, BTreeMap<(String, String), String>) {
    fn quoted(s: &str) -> (String, &str) {
        let mut chars = s.char_indices();
        assert_eq!(chars.next().map(|c| c.1), Some('"'), "expected a quoted id in {s:?}");
        let mut out = String::new();
        let mut escaped = false;
        for (i, c) in chars {
            match (escaped, c) {
                (true, 'n') => {
                    out.push('\n');
                    escaped = false;
                }
                (true, c) => {
                    out.push(c);
                    escaped = false;
                }
                (false, '\\') => escaped = true,
                (false, '"') => return (out, &s[i + 1..]),
                (false, c) => out.push(c),
            }
        }
        panic!("unterminated string in {s:?}");
    }
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("digraph \"") && header.ends_with('{'));
    let (mut nodes, mut edges) = (BTreeMap::new(), BTreeMap::new());
    let mut closed = false;
    for line in lines {
        let l = line.trim();
        if l == "}" {
            closed = true;
            continue;
        }
        assert!(!closed, "content after closing brace");
        if l.starts_with("node [") || l.starts_with("label=") {
            continue;
        }
        let (a, rest) = quoted(l);
        let rest = rest.trim_start();
        if let Some(rest) = rest.strip_prefix("->") {
            let (b, attrs) = quoted(rest.trim_start());
            edges.insert((a, b), attrs.trim().to_string());
        } else {
            nodes.insert(a, rest.to_string());
        }
    }
    assert!(closed);
    (nodes, edges)
}

fn threat(attrs: &str) -> f64 {
    let start = attrs.find("threat=\"").unwrap() + 8;
    let end = start + attrs[start..].find('"').unwrap();
    attrs[start..end].parse().unwrap()
}

#[test]
fn dot_export_parses_back() {
    let train_set: Vec<AppGraph> = (0..20).map(|s| gen_graph(&GraphGenProfile::recorded_like(s)).unwrap()).collect();
    let model = train(&train_set, SVDD);
    let mut g = gen_graph(&GraphGenProfile::recorded_like(99)).unwrap();
    g.graph_id = "odd \"id\" \\ here".into();
    g.add_node("intruder \"x\"", "scale");
    g.add_edge(g.nodes[0].id.clone(), "intruder \"x\"");
    let x = model.embed(&g).unwrap();
    let scores = localize(&model.model, &g, &x, Some(&model.space)).unwrap();

    let (nodes, edges) = parse_dot(&export_dot(&g, &scores));
    let ids: BTreeSet<&str> = g.nodes.iter().map(|n| n.id.as_str()).collect();
    assert_eq!(nodes.keys().map(String::as_str).collect::<BTreeSet<_>>(), ids);
    assert_eq!(edges.len(), g.edges.len());
    for (id, attrs) in &nodes {
        let r = threat(attrs);
        assert!((0.0..=1.0).contains(&r));
        assert!((r - scores.node_scores[id]).abs() <= 0.005 + 1e-12);
    }
    for attrs in edges.values() {
        assert!((0.0..=1.0).contains(&threat(attrs)));
    }
    assert_eq!(threat(&nodes["intruder \"x\""]), 1.0);
}

#[test]
fn inserted_component_is_the_top_suspect() {
    let train_set: Vec<AppGraph> = (0..40).map(|s| gen_graph(&GraphGenProfile::recorded_like(s)).unwrap()).collect();
    for method in [SVDD, OCSVM] {
        let model = train(&train_set, method);
        for base in train_set.iter().take(10) {
            let mut g = base.clone();
            let anchor = g.nodes[g.nodes.len() / 2].id.clone();
            g.add_node("rogue", "exfiltrate");
            g.add_edge(anchor.clone(), "rogue");
            let x = model.embed(&g).unwrap();
            assert_eq!(score_graph(&model.model, &x, 0.0).unwrap().verdict, Verdict::Anomalous);
            let scores = localize(&model.model, &g, &x, Some(&model.space)).unwrap();
            let top = scores.max_score();
            assert_eq!(scores.node_scores["rogue"], top, "{method}");
            // everything far from the insertion scores strictly lower
            let near: BTreeSet<&str> = g
                .edges
                .iter()
                .filter(|(s, d)| *s == anchor || *d == anchor)
                .flat_map(|(s, d)| [s.as_str(), d.as_str()])
                .collect();
            for (v, &r) in &scores.node_scores {
                if !near.contains(v.as_str()) && v != "rogue" {
                    assert!(r < top, "{method}: {v} rated {r}");
                }
            }
        }
    }
}

#[test]
fn model_round_trip_keeps_scores() {
    let train_set: Vec<AppGraph> = (0..30).map(|s| random_graph(15, 1.3, 3, s)).collect();
    for method in [SVDD, OCSVM] {
        let model = train(&train_set, method);
        let back = StructuralModel::from_json(&model.to_json().unwrap()).unwrap();
        for seed in 100..120 {
            let g = random_graph(15, 1.3, 3, seed);
            assert_eq!(model.score(&g).unwrap(), back.score(&g).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ratings_are_unit_interval(seed in any::<u64>(), n in 2usize..30, method in prop::sample::select(vec![SVDD, OCSVM])) {
        let train_set: Vec<AppGraph> = (0..8).map(|s| random_graph(12, 1.2, 3, s)).collect();
        let model = train(&train_set, method);
        let g = random_graph(n, 1.4, 4, seed);
        let x = model.embed(&g).unwrap();
        let scores = localize(&model.model, &g, &x, Some(&model.space)).unwrap();
        prop_assert_eq!(scores.node_scores.len(), g.nodes.len());
        prop_assert_eq!(scores.edge_scores.len(), g.edges.len());
        for r in scores.node_scores.values().chain(scores.edge_scores.values()) {
            prop_assert!((0.0..=1.0).contains(r));
        }
        prop_assert!(scores.global_residual >= 0.0);
    }
}

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::{brute_force_neighborhoods, embed_ns_per_node, extracted_neighborhoods, random_graph, relabel};
use compguard::datagen::{gen_graph_with_users, GraphGenProfile};
use compguard::structural::{canonical_key, embed, extract_substructures, AppGraph};

#[test]
fn extraction_matches_brute_force() {
    for seed in 0..200 {
        let g = random_graph(10, 1.6, 3, seed);
        assert_eq!(extracted_neighborhoods(&g), brute_force_neighborhoods(&g), "seed {seed}");
    }
}

#[test]
fn random_graphs_conserve_nodes() {
    for seed in 0..1000 {
        let n = 1 + (seed as usize * 7) % 60;
        let g = random_graph(n, 1.2, 5, seed);
        let subs = extract_substructures(&g).unwrap();
        assert_eq!(subs.len(), n);
        let x = embed(&g).unwrap();
        assert_eq!(x.raw_counts.values().map(|&c| c as usize).sum::<usize>(), n);
        let nnz = x.entries.nnz() as f64;
        for (_, v) in x.entries.iter() {
            assert!((v - 1.0 / nnz.sqrt()).abs() < 1e-15);
        }
    }
}

#[test]
fn generated_graph_conserves_nodes() {
    let g = gen_graph_with_users(&GraphGenProfile::recorded_like(4), 6).unwrap();
    let x = embed(&g).unwrap();
    assert_eq!(x.raw_counts.values().sum::<u32>() as usize, g.nodes.len());
}

#[test]
fn relabeling_keeps_the_embedding() {
    let g = random_graph(40, 1.5, 4, 3);
    let x = embed(&g).unwrap();
    for seed in 0..100 {
        let y = embed(&relabel(&g, seed)).unwrap();
        assert_eq!(x.entries, y.entries);
        assert_eq!(x.raw_counts, y.raw_counts);
    }
}

#[test]
fn relabeled_substructure_has_one_key() {
    // center with three neighbors and an edge among them
    let mut g = AppGraph::new("s", "demo");
    for (id, label) in [("c", "mix"), ("a", "enc"), ("b", "enc"), ("d", "dec")] {
        g.add_node(id, label);
    }
    for (s, d) in [("a", "c"), ("c", "b"), ("d", "c"), ("a", "b")] {
        g.add_edge(s, d);
    }
    let keys: BTreeSet<String> = (0..50)
        .map(|seed| {
            let h = relabel(&g, seed);
            let subs = extract_substructures(&h).unwrap();
            let center = h.nodes.iter().position(|n| n.label == "mix").unwrap();
            canonical_key(&h, &subs[center])
        })
        .collect();
    assert_eq!(keys.len(), 1);
}

#[test]
fn equal_graphs_embed_bit_equal() {
    let g = random_graph(200, 2.0, 8, 9);
    let a = embed(&g).unwrap();
    let b = embed(&g.clone()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn deleting_an_edge_changes_local_keys_only() {
    for seed in 0..30 {
        let g = random_graph(60, 1.5, 4, 100 + seed);
        let (u, v) = g.edges[seed as usize % g.edges.len()].clone();
        let mut h = g.clone();
        h.edges.retain(|e| *e != (u.clone(), v.clone()));

        let keys = |g: &AppGraph| -> Vec<String> {
            extract_substructures(g)
                .unwrap()
                .iter()
                .map(|s| canonical_key(g, s))
                .collect()
        };
        let (before, after) = (keys(&g), keys(&h));
        let changed: BTreeSet<&str> = g
            .nodes
            .iter()
            .zip(before.iter().zip(&after))
            .filter(|(_, (a, b))| a != b)
            .map(|(n, _)| n.id.as_str())
            .collect();
        assert!(changed.contains(u.as_str()) && changed.contains(v.as_str()));
        // any other change must be a node whose neighborhood held both endpoints
        for w in changed {
            if w == u || w == v {
                continue;
            }
            let adjacent = |x: &str| g.edges.iter().any(|(s, d)| (s == w && d == x) || (d == w && s == x));
            assert!(adjacent(&u) && adjacent(&v), "seed {seed}: {w} changed");
        }
    }
}

#[test]
fn embedding_time_is_linear() {
    let small = embed_ns_per_node(100, 1);
    let mid = embed_ns_per_node(1_000, 2);
    let large = embed_ns_per_node(10_000, 3);
    eprintln!("embedding ns per node: {small:.0} {mid:.0} {large:.0}");
    let (lo, hi) = (small.min(mid).min(large), small.max(mid).max(large));
    assert!(hi / lo <= 2.0, "ns per node: {small:.0} {mid:.0} {large:.0}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn brute_force_agrees_on_any_graph(n in 1usize..25, factor in 0.0f64..3.0, labels in 1usize..5, seed in any::<u64>()) {
        let g = random_graph(n, factor, labels, seed);
        prop_assert_eq!(extracted_neighborhoods(&g), brute_force_neighborhoods(&g));
    }

    #[test]
    fn relabeling_is_invisible(n in 1usize..30, seed in any::<u64>(), perm in any::<u64>()) {
        let g = random_graph(n, 1.5, 3, seed);
        let a = embed(&g).unwrap();
        let b = embed(&relabel(&g, perm)).unwrap();
        prop_assert_eq!(a.entries, b.entries);
        prop_assert_eq!(a.raw_counts, b.raw_counts);
    }
}

//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use compguard::oneclass::{self, OneClassModel, TrainConfig, OCSVM, SVDD};
use compguard::structural::{embed, extract_substructures, AppGraph};
use compguard::{FeatureVector, KernelSpec};

const GRID: i64 = 1000;
const COARSE: i64 = 20;
const WINDOW: i64 = 10;

/// Minimum of `a'Qa + p'a` over `{sum a = 1, 0 <= a <= cap}` on the lattice
/// of multiples of 1e-3.
///
/// Up to three points the whole lattice is enumerated. Beyond that the
/// lattice is too large, so a coarse pass (step 0.02) is followed by
/// exhaustive search of the 1e-3 lattice in a box of +-0.01 per coordinate,
/// re-centered until the best point stops moving. The objective is convex,
/// so a minimum that is interior to the box is within lattice resolution of
/// the global one.
pub fn simplex_grid_min(q: &[f64], p: &[f64], cap: f64) -> f64 {
    let n = p.len();
    let capu = ((cap * GRID as f64) + 1e-9).floor() as i64;
    let capu = capu.min(GRID);
    let eval = |c: &[i64]| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            if c[i] == 0 {
                continue;
            }
            let ai = c[i] as f64 / GRID as f64;
            let mut row = 0.0;
            for j in 0..n {
                row += q[i * n + j] * c[j] as f64 / GRID as f64;
            }
            total += ai * (row + p[i]);
        }
        total
    };
    if n <= 3 {
        let mut best = f64::INFINITY;
        enumerate(n, GRID, 1, capu, &mut |c| best = best.min(eval(c)));
        return best;
    }

    let coarse_cap = capu / COARSE * COARSE;
    let mut center = vec![0i64; n];
    let mut best = f64::INFINITY;
    enumerate(n, GRID, COARSE, coarse_cap, &mut |c| {
        let v = eval(c);
        if v < best {
            best = v;
            center.copy_from_slice(c);
        }
    });
    assert!(best.is_finite(), "cap {cap} leaves no coarse lattice point");
    loop {
        let mut moved = false;
        let mut cand = vec![0i64; n];
        let mut offsets = vec![-WINDOW; n - 1];
        'window: loop {
            let mut free_sum = 0;
            let mut ok = true;
            for k in 0..n - 1 {
                cand[k] = center[k] + offsets[k];
                ok &= (0..=capu).contains(&cand[k]);
                free_sum += cand[k];
            }
            cand[n - 1] = GRID - free_sum;
            if ok && (0..=capu).contains(&cand[n - 1]) {
                let v = eval(&cand);
                if v < best - 1e-15 {
                    best = v;
                    center.copy_from_slice(&cand);
                    moved = true;
                }
            }
            for o in offsets.iter_mut() {
                *o += 1;
                if *o <= WINDOW {
                    continue 'window;
                }
                *o = -WINDOW;
            }
            break;
        }
        if !moved {
            return best;
        }
    }
}

/// Calls `f` on every `c` with `c_i` a multiple of `step` in `[0, cap]` and
/// `sum c = total`.
fn enumerate(n: usize, total: i64, step: i64, cap: i64, f: &mut dyn FnMut(&[i64])) {
    fn rec(c: &mut Vec<i64>, n: usize, left: i64, step: i64, cap: i64, f: &mut dyn FnMut(&[i64])) {
        if c.len() == n - 1 {
            if left <= cap {
                c.push(left);
                f(c);
                c.pop();
            }
            return;
        }
        let mut v = 0;
        while v <= left.min(cap) {
            c.push(v);
            rec(c, n, left - v, step, cap, f);
            c.pop();
            v += step;
        }
    }
    rec(&mut Vec::with_capacity(n), n, total, step, cap, f);
}

pub fn gram(data: &[FeatureVector], kernel: &KernelSpec) -> Vec<f64> {
    let k = kernel.build().unwrap();
    let n = data.len();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            g[i * n + j] = k.evaluate(&data[i], &data[j]).unwrap();
        }
    }
    g
}

/// Grid optimum of the method's dual, in its own convention: the minimized
/// `1/2 a'Ka` for `ocsvm`, the maximized `sum a_i k_ii - a'Ka` for `svdd`.
pub fn oracle_objective(method: &str, data: &[FeatureVector], kernel: &KernelSpec, c: f64) -> f64 {
    let k = gram(data, kernel);
    let n = data.len();
    match method {
        OCSVM => {
            let half: Vec<f64> = k.iter().map(|v| 0.5 * v).collect();
            simplex_grid_min(&half, &vec![0.0; n], c)
        }
        SVDD => {
            let diag: Vec<f64> = (0..n).map(|i| -k[i * n + i]).collect();
            -simplex_grid_min(&k, &diag, c)
        }
        other => panic!("no oracle for {other}"),
    }
}

/// The trained model's dual objective, recomputed from its support points.
pub fn model_objective(model: &OneClassModel) -> f64 {
    let k = model.kernel();
    let (sv, a) = (model.support_points(), model.alphas());
    let mut quad = 0.0;
    let mut lin = 0.0;
    for i in 0..sv.len() {
        lin += a[i] * k.evaluate(&sv[i], &sv[i]).unwrap();
        for j in 0..sv.len() {
            quad += a[i] * a[j] * k.evaluate(&sv[i], &sv[j]).unwrap();
        }
    }
    match model.method_name() {
        OCSVM => 0.5 * quad,
        _ => lin - quad,
    }
}

pub struct OracleInstance {
    pub method: &'static str,
    pub kernel: KernelSpec,
    pub points: usize,
    pub c: f64,
    pub solver: f64,
    pub oracle: f64,
}

/// Random 2-dimensional points in the unit square with a cap that binds
/// for some instances; every cap is a multiple of 0.02 so the coarse
/// lattice stays feasible.
pub fn oracle_instance(method: &'static str, kernel: &KernelSpec, seed: u64) -> OracleInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1 + (seed as usize % 5);
    let data: Vec<FeatureVector> = (0..n)
        .map(|_| FeatureVector::Dense(vec![rng.random::<f64>(), rng.random::<f64>()]))
        .collect();
    let c = if seed.is_multiple_of(2) {
        1.0
    } else {
        match n {
            1 => 1.0,
            2 => 0.6,
            3 => 0.4,
            _ => 0.3,
        }
    };
    let model = oneclass::method(method)
        .unwrap()
        .train(&data, kernel, &TrainConfig::with_c(c))
        .unwrap();
    OracleInstance {
        method,
        kernel: kernel.clone(),
        points: n,
        c,
        solver: model_objective(&model),
        oracle: oracle_objective(method, &data, kernel, c),
    }
}

pub fn oracle_kernels() -> Vec<KernelSpec> {
    vec![KernelSpec::rbf(0.7), KernelSpec::linear(), KernelSpec::histogram_intersection()]
}

/// Random graph with `n` nodes, labels from a small alphabet and about
/// `edge_factor * n` distinct directed edges.
pub fn random_graph(n: usize, edge_factor: f64, labels: usize, seed: u64) -> AppGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = AppGraph::new(format!("random-{seed}"), "demo");
    for i in 0..n {
        g.add_node(format!("v{i}"), format!("L{}", rng.random_range(0..labels)));
    }
    if n < 2 {
        return g;
    }
    let target = (edge_factor * n as f64) as usize;
    let mut seen = BTreeSet::new();
    let mut attempts = 0;
    while seen.len() < target && attempts < 20 * target + 10 {
        attempts += 1;
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && seen.insert((u, v)) {
            g.add_edge(format!("v{u}"), format!("v{v}"));
        }
    }
    g
}

/// Same graph with fresh node ids and shuffled node and edge order.
pub fn relabel(g: &AppGraph, seed: u64) -> AppGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names: Vec<usize> = (0..g.nodes.len()).collect();
    names.shuffle(&mut rng);
    let rename = |id: &str| -> String {
        let pos = g.nodes.iter().position(|n| n.id == id).unwrap();
        format!("x{}-{seed}", names[pos])
    };
    let mut out = AppGraph::new(g.graph_id.clone(), g.app_type.clone());
    let mut nodes: Vec<_> = g.nodes.iter().map(|n| (rename(&n.id), n.label.clone())).collect();
    nodes.shuffle(&mut rng);
    for (id, label) in nodes {
        out.add_node(id, label);
    }
    let mut edges: Vec<_> = g.edges.iter().map(|(s, d)| (rename(s), rename(d))).collect();
    edges.shuffle(&mut rng);
    for (s, d) in edges {
        out.add_edge(s, d);
    }
    out
}

/// `(center id, member ids, member edges)`.
pub type Neighborhood = (String, BTreeSet<String>, BTreeSet<(String, String)>);

/// Degree-1 neighborhood of every node by scanning the full edge list.
pub fn brute_force_neighborhoods(g: &AppGraph) -> BTreeSet<Neighborhood> {
    g.nodes
        .iter()
        .map(|c| {
            let mut members = BTreeSet::from([c.id.clone()]);
            for (s, d) in &g.edges {
                if *s == c.id {
                    members.insert(d.clone());
                }
                if *d == c.id {
                    members.insert(s.clone());
                }
            }
            let edges = g
                .edges
                .iter()
                .filter(|(s, d)| members.contains(s) && members.contains(d))
                .cloned()
                .collect();
            (c.id.clone(), members, edges)
        })
        .collect()
}

pub fn extracted_neighborhoods(g: &AppGraph) -> BTreeSet<Neighborhood> {
    extract_substructures(g)
        .unwrap()
        .into_iter()
        .map(|s| {
            let id = |i: usize| g.nodes[i].id.clone();
            (
                id(s.center),
                s.nodes.iter().map(|&i| id(i)).collect(),
                s.edges.iter().map(|&(a, b)| (id(a), id(b))).collect(),
            )
        })
        .collect()
}

/// Best-of-five wall time per node of a full embedding, in nanoseconds.
/// Small graphs are embedded repeatedly so each batch covers the same
/// total node count.
pub fn embed_ns_per_node(n: usize, seed: u64) -> f64 {
    const WORK: usize = 40_000;
    let graphs: Vec<AppGraph> = (0..(WORK / n).max(1))
        .map(|i| random_graph(n, 1.5, 6, seed + i as u64))
        .collect();
    let mut best = f64::INFINITY;
    for _ in 0..5 {
        let start = Instant::now();
        for g in &graphs {
            std::hint::black_box(embed(g).unwrap());
        }
        let ns = start.elapsed().as_nanos() as f64 / (graphs.len() * n) as f64;
        best = best.min(ns);
    }
    best
}

/// Spearman rank correlation, without tie correction.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ranks = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (rank, i) in idx.into_iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    };
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Random nonnegative sparse vector over dimensions `0..dims`.
pub fn random_sparse(rng: &mut impl Rng, dims: u64, nnz: usize) -> FeatureVector {
    let mut chosen = BTreeSet::new();
    while chosen.len() < nnz {
        chosen.insert(rng.random_range(0..dims));
    }
    FeatureVector::sparse(chosen.into_iter().map(|d| (d, rng.random_range(0.05..1.0))).collect()).unwrap()
}

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{oracle_instance, oracle_kernels, random_sparse, simplex_grid_min, spearman};
use compguard::localization::{dimensional_scores_ocsvm, dimensional_scores_svdd};
use compguard::oneclass::{self, train_ocsvm, train_svdd, TrainConfig, OCSVM, SVDD};
use compguard::{FeatureVector, KernelSpec};

#[test]
fn grid_oracle_on_a_known_problem() {
    // 1/2 a'Ka with K = diag(1, 2): optimum a = (2/3, 1/3), value 1/3.
    let q = [0.5, 0.0, 0.0, 1.0];
    let v = simplex_grid_min(&q, &[0.0, 0.0], 1.0);
    assert!((v - 1.0 / 3.0).abs() < 1e-6, "{v}");
    // The cap binds: a_1 <= 0.6.
    let v = simplex_grid_min(&q, &[0.0, 0.0], 0.6);
    assert!((v - (0.5 * 0.36 + 0.16)).abs() < 1e-12, "{v}");
    // Four identical coordinates: uniform optimum 1/8 for 1/2 |a|^2.
    let q4: Vec<f64> = (0..16).map(|i| if i % 5 == 0 { 0.5 } else { 0.0 }).collect();
    let v = simplex_grid_min(&q4, &[0.0; 4], 1.0);
    assert!((v - 0.125).abs() < 1e-9, "{v}");
}

#[test]
fn solver_matches_grid_oracle() {
    for kernel in oracle_kernels() {
        for method in [OCSVM, SVDD] {
            for seed in 0..20 {
                let r = oracle_instance(method, &kernel, seed);
                assert!(
                    (r.solver - r.oracle).abs() <= 1e-4,
                    "{method}/{kernel} n={} C={}: solver {} oracle {}",
                    r.points,
                    r.c,
                    r.solver,
                    r.oracle
                );
            }
        }
    }
}

#[test]
fn decomposition_reconstructs_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kernel in [KernelSpec::linear(), KernelSpec::histogram_intersection()] {
        for _ in 0..100 {
            let n = rng.random_range(2..10);
            let data: Vec<FeatureVector> = (0..n)
                .map(|_| {
                    let nnz = rng.random_range(1..6);
                    random_sparse(&mut rng, 12, nnz)
                })
                .collect();
            let nnz = rng.random_range(1..6);
            let x = random_sparse(&mut rng, 16, nnz);
            let c = rng.random_range(1.0 / n as f64..=1.0);

            let svdd = train_svdd(&data, &kernel, &TrainConfig::with_c(c)).unwrap();
            let a = svdd.squared_distance(&x).unwrap();
            let sum: f64 = dimensional_scores_svdd(&svdd, &x).unwrap().values().sum();
            assert!((sum - a).abs() <= 1e-9 * a.abs().max(1.0), "{kernel}: {sum} vs {a}");

            let ocsvm = train_ocsvm(&data, &kernel, &TrainConfig::with_c(c)).unwrap();
            let fb = ocsvm.decision(&x).unwrap() + ocsvm.offset();
            let sum: f64 = dimensional_scores_ocsvm(&ocsvm, &x).unwrap().values().sum();
            assert!((sum - fb).abs() <= 1e-9 * fb.abs().max(1.0), "{kernel}: {sum} vs {fb}");
        }
    }
}

#[test]
fn rbf_ocsvm_and_svdd_rank_alike() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let point = |rng: &mut ChaCha8Rng| FeatureVector::Dense((0..3).map(|_| rng.random_range(-1.0..1.0)).collect());
    let data: Vec<FeatureVector> = (0..40).map(|_| point(&mut rng)).collect();
    let kernel = KernelSpec::rbf(0.8);
    let cfg = TrainConfig::with_c(0.1);
    let ocsvm = train_ocsvm(&data, &kernel, &cfg).unwrap();
    let svdd = train_svdd(&data, &kernel, &cfg).unwrap();
    for (a, b) in ocsvm.alphas().iter().zip(svdd.alphas()) {
        assert!((a - b).abs() < 1e-9);
    }
    let tests: Vec<FeatureVector> = (0..100).map(|_| point(&mut rng)).collect();
    let f1: Vec<f64> = tests.iter().map(|x| ocsvm.decision(x).unwrap()).collect();
    let f2: Vec<f64> = tests.iter().map(|x| svdd.decision(x).unwrap()).collect();
    assert_eq!(spearman(&f1, &f2), 1.0);
}

fn dense_points(max: usize) -> impl Strategy<Value = Vec<FeatureVector>> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..max)
        .prop_map(|v| v.into_iter().map(FeatureVector::Dense).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn training_points_with_slack_are_capped(
        data in dense_points(25),
        c_frac in 0.0f64..1.0,
        method in prop::sample::select(vec![OCSVM, SVDD]),
    ) {
        let n = data.len() as f64;
        let c = 1.0 / n + c_frac * (1.0 - 1.0 / n);
        let cfg = TrainConfig::with_c(c);
        let model = oneclass::method(method).unwrap().train(&data, &KernelSpec::rbf(0.5), &cfg).unwrap();
        let total: f64 = model.alphas().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        for x in &data {
            let f = model.decision(x).unwrap();
            if f < -1e-5 {
                // only bounded support vectors may fall outside
                let capped = model
                    .support_points()
                    .iter()
                    .zip(model.alphas())
                    .any(|(sv, &a)| sv == x && a >= c - 1e-9);
                prop_assert!(capped, "f = {f} on a point below the cap");
            }
        }
    }

    #[test]
    fn svdd_distance_matches_explicit_centroid(data in dense_points(12), x in prop::collection::vec(-1.0f64..2.0, 3)) {
        // Linear kernel: a(x) is the plain squared distance to sum a_i x_i.
        let model = train_svdd(&data, &KernelSpec::linear(), &TrainConfig::with_c(1.0)).unwrap();
        let mut center = [0.0; 3];
        for (sv, a) in model.support_points().iter().zip(model.alphas()) {
            for (d, v) in sv.iter() {
                center[d as usize] += a * v;
            }
        }
        let expected: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        let got = model.squared_distance(&FeatureVector::Dense(x)).unwrap();
        prop_assert!((got - expected).abs() < 1e-9 * expected.max(1.0));
    }
}

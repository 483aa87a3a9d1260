use proptest::prelude::*;

use compguard::behavioral::{BehavioralDetector, StreamMonitor};
use compguard::datagen::{behavioral_bundle, BehavioralBundleConfig, Split, TimelineKind};
use compguard::eval::{roc, run_behavioral_sweep, threshold_baseline, train_component, Experiment, SweepParams};

/// `P(anomalous score < normal score) + 1/2 P(tie)` over all pairs.
fn pair_count_auc(scores: &[(f64, bool)]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for &(a, pa) in scores {
        for &(b, pb) in scores {
            if pa && !pb {
                pairs += 1.0;
                wins += if a < b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

#[test]
fn hand_listed_auc() {
    let scores = [(-2.0, true), (0.5, true), (0.1, false), (0.5, false), (1.0, false), (-1.0, true)];
    let r = roc(&scores).unwrap();
    assert!((r.auc - pair_count_auc(&scores)).abs() < 1e-12);
    assert!((r.auc - 7.5 / 9.0).abs() < 1e-12);
    assert_eq!(roc(&[(1.0, true), (1.0, false)]).unwrap().auc, 0.5);
}

fn small_bundle_config() -> BehavioralBundleConfig {
    BehavioralBundleConfig {
        components: 3,
        length: 400,
        validation_runs: 3,
        anomalous_runs: 3,
        ..Default::default()
    }
}

#[test]
fn replaying_validation_never_alerts() {
    let bundle = behavioral_bundle(&small_bundle_config()).unwrap();
    let sweep = SweepParams::default();
    for s in [20, 60, 100] {
        for normal in [TimelineKind::Normal1, TimelineKind::Normal2] {
            for component in bundle.component_ids() {
                let detector = train_component(&bundle, &component, normal, &sweep.detector_params(s)).unwrap();
                // through JSON, as a deployed detector would be
                let detector = BehavioralDetector::from_json(&detector.to_json().unwrap()).unwrap();
                let mut monitor = StreamMonitor::new([detector]);
                for stream in bundle.streams_of(&component, normal, Split::Validation) {
                    for r in &stream.records {
                        assert!(monitor.push(r.clone()).unwrap().is_none(), "s={s} {component}");
                    }
                }
            }
        }
    }
}

#[test]
fn sweeps_are_deterministic() {
    let bundle = behavioral_bundle(&small_bundle_config()).unwrap();
    let params = SweepParams {
        s_grid: vec![20, 40],
        ..Default::default()
    };
    let a = run_behavioral_sweep(&bundle, Experiment::N1vA1, &params).unwrap();
    let b = run_behavioral_sweep(&bundle, Experiment::N1vA1, &params).unwrap();
    assert_eq!(a, b);
    for row in &a.rows {
        assert!((0.0..=1.0).contains(&row.tpr) && (0.0..=1.0).contains(&row.fpr));
    }
}

#[test]
fn baseline_rejects_bad_rates() {
    let bundle = behavioral_bundle(&small_bundle_config()).unwrap();
    assert!(threshold_baseline(&bundle, Experiment::N1vA1, 1.0).is_err());
    assert!(threshold_baseline(&bundle, Experiment::N1vA1, -0.1).is_err());
    let b = threshold_baseline(&bundle, Experiment::N1vA1, 0.0).unwrap();
    assert!((0.0..=1.0).contains(&b.tpr) && (0.0..=1.0).contains(&b.fpr));
}

proptest! {
    #[test]
    fn roc_matches_pair_counting(raw in prop::collection::vec((0u8..12, any::<bool>()), 2..60)) {
        let mut scores: Vec<(f64, bool)> = raw.into_iter().map(|(s, a)| (s as f64 / 4.0, a)).collect();
        scores[0].1 = true;
        scores[1].1 = false;
        let r = roc(&scores).unwrap();
        prop_assert!((r.auc - pair_count_auc(&scores)).abs() < 1e-12);
        prop_assert!(r.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        prop_assert_eq!(r.points.first().copied(), Some((0.0, 0.0)));
        prop_assert_eq!(r.points.last().copied(), Some((1.0, 1.0)));
    }
}

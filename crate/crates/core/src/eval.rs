//! Experiment drivers: behavioral window-size sweeps and structural ROC
//! analysis for graph-wise and local predictions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::behavioral::{stream_windows, train_detector, BehavioralDetector, BehavioralParams, Label, MEASURED_VALUES};
use crate::datagen::{AnomalyCategory, BehavioralBundle, LabeledGraph, LabeledStream, Split, StructuralBundle, TimelineKind};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::localization::{self, LocalScores};
use crate::oneclass::TrainConfig;
use crate::structural::{score_graph, StructuralModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC over all thresholds for `(score, is_anomalous)` pairs, where a lower
/// score is more anomalous. Tied scores enter the curve together.
pub fn roc(scores: &[(f64, bool)]) -> Result<RocCurve> {
    let positives = scores.iter().filter(|(_, a)| *a).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::input("ROC needs both anomalous and normal samples"));
    }
    if scores.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::input("ROC scores contain NaN"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == v {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// Normal-versus-anomalous pairing of the behavioral experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Experiment {
    N1vA1,
    N1vA2,
    N2vA1,
    N2vA2,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Self::N1vA1, Self::N1vA2, Self::N2vA1, Self::N2vA2];

    pub fn normal(self) -> TimelineKind {
        match self {
            Self::N1vA1 | Self::N1vA2 => TimelineKind::Normal1,
            Self::N2vA1 | Self::N2vA2 => TimelineKind::Normal2,
        }
    }

    pub fn anomaly(self) -> TimelineKind {
        match self {
            Self::N1vA1 | Self::N2vA1 => TimelineKind::Anomaly1,
            Self::N1vA2 | Self::N2vA2 => TimelineKind::Anomaly2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::N1vA1 => "N1vA1",
            Self::N1vA2 => "N1vA2",
            Self::N2vA1 => "N2vA1",
            Self::N2vA2 => "N2vA2",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub s_grid: Vec<usize>,
    pub c: f64,
    /// RBF bandwidth per window value; the kernel uses
    /// `sigma_per_value * sqrt(5 s)` so distances stay comparable across `s`.
    pub sigma_per_value: f64,
    pub target_fpr: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            s_grid: (1..=8).map(|k| 20 * k).collect(),
            c: 1.0,
            sigma_per_value: 0.25,
            target_fpr: 0.0,
        }
    }
}

impl SweepParams {
    pub fn detector_params(&self, s: usize) -> BehavioralParams {
        BehavioralParams {
            s,
            c: self.c,
            sigma: self.sigma_per_value * ((MEASURED_VALUES * s) as f64).sqrt(),
            target_fpr: self.target_fpr,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s: usize,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub experiment: Experiment,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, s: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.s == s)
    }
}

/// Detection counts of one detector on one set of test streams.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DetectionCounts {
    pub events: usize,
    pub detected: usize,
    pub normal_windows: usize,
    pub false_alarms: usize,
}

impl DetectionCounts {
    pub fn tpr(&self) -> f64 {
        if self.events == 0 {
            0.0
        } else {
            self.detected as f64 / self.events as f64
        }
    }

    pub fn fpr(&self) -> f64 {
        if self.normal_windows == 0 {
            0.0
        } else {
            self.false_alarms as f64 / self.normal_windows as f64
        }
    }
}

/// An event counts as detected when any window overlapping its interval is
/// flagged. False positives are counted over the windows of normal-profile
/// streams only; the undisturbed parts of anomalous runs are not scored.
pub fn evaluate_streams<'a>(
    detector: &BehavioralDetector,
    streams: impl IntoIterator<Item = &'a LabeledStream>,
) -> Result<DetectionCounts> {
    let mut counts = DetectionCounts::default();
    let span = (detector.window.s as i64 - 1) * detector.window.sample_interval;
    for stream in streams {
        let mut hit = vec![false; stream.anomalous.len()];
        for (t, x) in stream_windows(&stream.records, &detector.window)? {
            let newest = stream.records[t].t;
            let flagged = detector.classify_features(x)?.label == Label::Anomalous;
            for (k, &(a, b)) in stream.anomalous.iter().enumerate() {
                if newest >= a && newest - span <= b {
                    hit[k] |= flagged;
                }
            }
            if !stream.kind.is_anomalous() {
                counts.normal_windows += 1;
                counts.false_alarms += flagged as usize;
            }
        }
        counts.events += hit.len();
        counts.detected += hit.iter().filter(|&&h| h).count();
    }
    Ok(counts)
}

fn records_of<'a>(streams: impl Iterator<Item = &'a LabeledStream>) -> Vec<Vec<crate::behavioral::MeasurementRecord>> {
    streams.map(|s| s.records.clone()).collect()
}

/// Trains one detector per component on the experiment's normal profile.
pub fn train_component(
    bundle: &BehavioralBundle,
    component: &str,
    normal: TimelineKind,
    params: &BehavioralParams,
) -> Result<BehavioralDetector> {
    let train = records_of(bundle.streams_of(component, normal, Split::Train));
    let validation = records_of(bundle.streams_of(component, normal, Split::Validation));
    train_detector(&train, &validation, params)
}

/// Test streams of an experiment: normal test runs plus anomalous runs.
pub fn test_streams<'a>(
    bundle: &'a BehavioralBundle,
    component: &'a str,
    experiment: Experiment,
) -> impl Iterator<Item = &'a LabeledStream> + 'a {
    bundle
        .streams_of(component, experiment.normal(), Split::Test)
        .chain(bundle.streams_of(component, experiment.anomaly(), Split::Test))
}

/// Window-size sweeps for several experiments, averaged over components.
/// Detectors are shared between experiments with the same normal profile.
pub fn run_behavioral_sweeps(
    bundle: &BehavioralBundle,
    experiments: &[Experiment],
    params: &SweepParams,
) -> Result<Vec<SweepResult>> {
    let components = bundle.component_ids();
    if components.is_empty() {
        return Err(Error::input("bundle holds no components"));
    }
    let mut rows: BTreeMap<Experiment, Vec<SweepRow>> = BTreeMap::new();
    for &s in &params.s_grid {
        let dp = params.detector_params(s);
        let mut sums: BTreeMap<Experiment, (f64, f64)> = BTreeMap::new();
        for normal in [TimelineKind::Normal1, TimelineKind::Normal2] {
            let relevant: Vec<Experiment> = experiments.iter().copied().filter(|e| e.normal() == normal).collect();
            if relevant.is_empty() {
                continue;
            }
            for c in &components {
                let det = train_component(bundle, c, normal, &dp)?;
                for &e in &relevant {
                    let counts = evaluate_streams(&det, test_streams(bundle, c, e))?;
                    let sum = sums.entry(e).or_default();
                    sum.0 += counts.tpr();
                    sum.1 += counts.fpr();
                }
            }
        }
        let n = components.len() as f64;
        for (e, (tpr, fpr)) in sums {
            rows.entry(e).or_default().push(SweepRow {
                s,
                tpr: tpr / n,
                fpr: fpr / n,
            });
        }
    }
    Ok(experiments
        .iter()
        .map(|&e| SweepResult {
            experiment: e,
            rows: rows.get(&e).cloned().unwrap_or_default(),
        })
        .collect())
}

pub fn run_behavioral_sweep(bundle: &BehavioralBundle, experiment: Experiment, params: &SweepParams) -> Result<SweepResult> {
    Ok(run_behavioral_sweeps(bundle, &[experiment], params)?.remove(0))
}

pub fn sweep_csv(results: &[SweepResult]) -> String {
    let mut out = String::from("experiment,s,tpr,fpr\n");
    for r in results {
        for row in &r.rows {
            out.push_str(&format!("{},{},{:.6},{:.6}\n", r.experiment.name(), row.s, row.tpr, row.fpr));
        }
    }
    out
}

/// Single-threshold detector on one raw measured value, flagging samples
/// above the threshold. The threshold is calibrated like the detector's: on
/// the validation runs of the normal profile, the most sensitive one that
/// leaves at most `target_fpr` of those samples above it. Per component the
/// measured value that detects the most test events is kept. Rates are
/// averaged over components.
pub fn threshold_baseline(bundle: &BehavioralBundle, experiment: Experiment, target_fpr: f64) -> Result<BaselineResult> {
    if !(0.0..1.0).contains(&target_fpr) {
        return Err(Error::config(format!("target_fpr must be in [0, 1), got {target_fpr}")));
    }
    let mut tpr_sum = 0.0;
    let mut fpr_sum = 0.0;
    let components = bundle.component_ids();
    for c in &components {
        let mut best: Option<DetectionCounts> = None;
        for d in 0..MEASURED_VALUES {
            let mut calib: Vec<f64> = bundle
                .streams_of(c, experiment.normal(), Split::Validation)
                .flat_map(|s| s.records.iter().map(move |r| r.values()[d]))
                .collect();
            if calib.is_empty() {
                return Err(Error::input(format!("no validation samples for `{c}`")));
            }
            calib.sort_by(|a, b| b.total_cmp(a));
            let threshold = calib[((target_fpr * calib.len() as f64 + 1e-9).floor() as usize).min(calib.len() - 1)];
            let mut counts = DetectionCounts::default();
            for s in test_streams(bundle, c, experiment) {
                for &(a, b) in &s.anomalous {
                    counts.events += 1;
                    counts.detected += s.records.iter().any(|r| r.t >= a && r.t <= b && r.values()[d] > threshold) as usize;
                }
                if !s.kind.is_anomalous() {
                    counts.normal_windows += s.records.len();
                    counts.false_alarms += s.records.iter().filter(|r| r.values()[d] > threshold).count();
                }
            }
            if best.is_none_or(|b| counts.detected > b.detected) {
                best = Some(counts);
            }
        }
        let best = best.expect("at least one measured value");
        tpr_sum += best.tpr();
        fpr_sum += best.fpr();
    }
    let n = components.len().max(1) as f64;
    Ok(BaselineResult {
        tpr: tpr_sum / n,
        fpr: fpr_sum / n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralParams {
    pub method: String,
    pub kernel: KernelSpec,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub category: AnomalyCategory,
    pub graphs: usize,
    pub anomalous: usize,
    pub graph_roc: RocCurve,
    pub local_roc: RocCurve,
    /// Fraction of anomalous graphs whose top 10% objects by rating include
    /// a ground-truth element or one of its direct neighbors.
    pub top_decile_hit_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralResult {
    pub method: String,
    pub kernel: KernelSpec,
    pub categories: Vec<CategoryResult>,
}

impl StructuralResult {
    pub fn category(&self, c: AnomalyCategory) -> Option<&CategoryResult> {
        self.categories.iter().find(|r| r.category == c)
    }
}

/// Whether an object is a ground-truth element or directly adjacent to one.
fn near_truth(item: &LabeledGraph, object: &Object) -> bool {
    let t = &item.truth;
    let touches = |v: &String| t.nodes.contains(v) || t.edges.iter().any(|(a, b)| a == v || b == v);
    match object {
        Object::Node(v) => {
            touches(v)
                || item
                    .graph
                    .edges
                    .iter()
                    .any(|(a, b)| (a == v && t.nodes.contains(b)) || (b == v && t.nodes.contains(a)))
        }
        Object::Edge(a, b) => t.edges.contains(&(a.clone(), b.clone())) || touches(a) || touches(b),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Object {
    Node(String),
    Edge(String, String),
}

fn ranked_objects(scores: &LocalScores) -> Vec<(f64, Object)> {
    let mut objects: Vec<(f64, Object)> = scores
        .node_scores
        .iter()
        .map(|(v, &r)| (r, Object::Node(v.clone())))
        .chain(
            scores
                .edge_scores
                .iter()
                .map(|((a, b), &r)| (r, Object::Edge(a.clone(), b.clone()))),
        )
        .collect();
    objects.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(&y.1)));
    objects
}

/// Whether the top decile of rated objects reaches the ground truth.
pub fn top_decile_hit(item: &LabeledGraph, scores: &LocalScores) -> bool {
    let ranked = ranked_objects(scores);
    let k = (ranked.len() as f64 * 0.1).ceil() as usize;
    ranked.iter().take(k.max(1)).any(|(_, o)| near_truth(item, o))
}

/// `(1 - r', positive)` for every node and edge of an anomalous graph.
/// A node is positive when it is new or lost an incident element; an edge
/// when it is new.
pub fn local_labels(item: &LabeledGraph, scores: &LocalScores) -> Vec<(f64, bool)> {
    let t = &item.truth;
    let removed_neighbor: BTreeSet<&String> = t
        .removed_edges
        .iter()
        .flat_map(|(a, b)| [a, b])
        .collect();
    scores
        .node_scores
        .iter()
        .map(|(v, &r)| (1.0 - r, t.nodes.contains(v) || removed_neighbor.contains(v)))
        .chain(
            scores
                .edge_scores
                .iter()
                .map(|(e, &r)| (1.0 - r, t.edges.contains(e))),
        )
        .collect()
}

pub fn run_structural_experiment(bundle: &StructuralBundle, params: &StructuralParams) -> Result<StructuralResult> {
    let model = StructuralModel::train(&bundle.train, &params.method, &params.kernel, &TrainConfig::with_c(params.c))?;
    let mut categories = Vec::new();
    for (&category, items) in &bundle.tests {
        let mut graph_scores = Vec::with_capacity(items.len());
        let mut local = Vec::new();
        let mut hits = 0;
        let mut anomalous = 0;
        for item in items {
            let x = model.embed(&item.graph)?;
            let s = score_graph(&model.model, &x, model.threshold)?;
            graph_scores.push((s.f, item.truth.anomalous));
            if item.truth.anomalous {
                anomalous += 1;
                let scores = localization::localize(&model.model, &item.graph, &x, Some(&model.space))?;
                hits += top_decile_hit(item, &scores) as usize;
                local.extend(local_labels(item, &scores));
            }
        }
        categories.push(CategoryResult {
            category,
            graphs: items.len(),
            anomalous,
            graph_roc: roc(&graph_scores)?,
            local_roc: roc(&local)?,
            top_decile_hit_rate: if anomalous == 0 {
                0.0
            } else {
                hits as f64 / anomalous as f64
            },
        });
    }
    Ok(StructuralResult {
        method: params.method.clone(),
        kernel: params.kernel.clone(),
        categories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_and_tied() {
        let sep = roc(&[(0.1, true), (0.2, true), (0.5, false), (0.9, false)]).unwrap();
        assert_eq!(sep.auc, 1.0);
        let tied = roc(&[(0.3, true), (0.3, false), (0.3, true), (0.3, false)]).unwrap();
        assert_eq!(tied.auc, 0.5);
        assert_eq!(tied.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!(roc(&[(0.1, true)]).is_err());
    }

    #[test]
    fn inverted_scores_give_zero() {
        let r = roc(&[(0.9, true), (0.1, false)]).unwrap();
        assert_eq!(r.auc, 0.0);
    }

    #[test]
    fn experiment_pairs() {
        assert_eq!(Experiment::N2vA1.normal(), TimelineKind::Normal2);
        assert_eq!(Experiment::N2vA1.anomaly(), TimelineKind::Anomaly1);
        assert_eq!(serde_json::to_string(&Experiment::N1vA2).unwrap(), "\"N1vA2\"");
    }

    #[test]
    fn csv_layout() {
        let r = SweepResult {
            experiment: Experiment::N1vA1,
            rows: vec![SweepRow {
                s: 20,
                tpr: 0.9,
                fpr: 0.001,
            }],
        };
        assert_eq!(sweep_csv(&[r]), "experiment,s,tpr,fpr\nN1vA1,20,0.900000,0.001000\n");
    }
}

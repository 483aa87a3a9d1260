//! Synthetic benchmark data: component telemetry and application graphs
//! with injected structural anomalies, bundled into train, validation and
//! test splits.

mod graphs;
mod inject;
mod timeline;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use graphs::{
    gen_graph, gen_graph_with_users, graph_stats, ComponentSpec, CoreTemplate, GraphFamily, GraphGenProfile,
    RecordingPool,
};
pub use inject::{inject_anomaly, AnomalyCategory, AnomalySpec, GroundTruth};
pub use timeline::{gen_timeline, SigmoidBump, TimelineKind, TimelineProfile};

use crate::behavioral::MeasurementRecord;
use crate::error::{Error, Result};
use crate::structural::AppGraph;

/// Independent sub-seed for stream `index` (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehavioralBundleConfig {
    pub components: usize,
    pub app_type: String,
    pub length: usize,
    pub sample_interval: i64,
    /// Normal runs per split, for each of the two normal profiles.
    pub train_runs: usize,
    pub validation_runs: usize,
    pub test_runs: usize,
    /// Runs per anomalous profile.
    pub anomalous_runs: usize,
    /// Peak gain of every bump.
    pub amplitude: f64,
    pub normal2_width: f64,
    pub normal2_tau: f64,
    pub anomaly1_width: f64,
    pub anomaly2_width: f64,
    pub anomaly_tau: f64,
    pub anomaly_noise_scale: f64,
    pub seed: u64,
}

impl Default for BehavioralBundleConfig {
    fn default() -> Self {
        BehavioralBundleConfig {
            components: 10,
            app_type: "videoconference".into(),
            length: 600,
            sample_interval: 10,
            train_runs: 2,
            validation_runs: 8,
            test_runs: 2,
            anomalous_runs: 10,
            amplitude: 1.0,
            normal2_width: 200.0,
            normal2_tau: 12.0,
            anomaly1_width: 30.0,
            anomaly2_width: 200.0,
            anomaly_tau: 2.0,
            anomaly_noise_scale: 1.0,
            seed: 1,
        }
    }
}

impl BehavioralBundleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 || self.train_runs == 0 || self.validation_runs == 0 {
            return Err(Error::config("need at least one component, training run and validation run"));
        }
        let widest = self.normal2_width.max(self.anomaly1_width).max(self.anomaly2_width);
        if !(widest + 20.0 < self.length as f64) {
            return Err(Error::config(format!(
                "runs of {} samples cannot hold a bump of width {widest}",
                self.length
            )));
        }
        if [self.normal2_width, self.anomaly1_width, self.anomaly2_width]
            .iter()
            .any(|w| !(*w > 0.0))
        {
            return Err(Error::config("bump widths must be positive"));
        }
        Ok(())
    }
}

/// One run of one component.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledStream {
    pub component_id: String,
    pub kind: TimelineKind,
    pub split: Split,
    /// Timestamp intervals of anomalous behavior, inclusive.
    pub anomalous: Vec<(i64, i64)>,
    pub records: Vec<MeasurementRecord>,
}

impl LabeledStream {
    pub fn instance(&self) -> &str {
        self.records.first().map(|r| r.app_instance.as_str()).unwrap_or("")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BehavioralBundle {
    pub config: BehavioralBundleConfig,
    pub streams: Vec<LabeledStream>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct IntervalRecord {
    component_id: String,
    app_instance: String,
    intervals: Vec<(i64, i64)>,
}

/// Per-component `(mean, std)` of the five values.
pub fn component_stats(seed: u64, component: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5eed_0000 + component as u64));
    let ranges = [(20.0, 60.0), (50.0, 200.0), (50.0, 200.0), (400.0, 1200.0), (400.0, 1200.0)];
    ranges
        .iter()
        .map(|&(lo, hi)| {
            let mean: f64 = rng.random_range(lo..hi);
            let rel: f64 = rng.random_range(0.08..0.12);
            (mean, rel * mean)
        })
        .collect()
}

pub fn behavioral_bundle(config: &BehavioralBundleConfig) -> Result<BehavioralBundle> {
    config.validate()?;
    let mut streams = Vec::new();
    let mut run_index = 0u64;
    for c in 0..config.components {
        let component_id = format!("component-{c:02}");
        let stats = component_stats(config.seed, c);
        let mut runs: Vec<(TimelineKind, Split)> = Vec::new();
        for kind in [TimelineKind::Normal1, TimelineKind::Normal2] {
            for (split, n) in [
                (Split::Train, config.train_runs),
                (Split::Validation, config.validation_runs),
                (Split::Test, config.test_runs),
            ] {
                runs.extend(std::iter::repeat_n((kind, split), n));
            }
        }
        for kind in [TimelineKind::Anomaly1, TimelineKind::Anomaly2] {
            runs.extend(std::iter::repeat_n((kind, Split::Test), config.anomalous_runs));
        }
        for (r, (kind, split)) in runs.into_iter().enumerate() {
            run_index += 1;
            let seed = derive_seed(config.seed, run_index);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
            let (width, tau) = match kind {
                TimelineKind::Normal1 => (0.0, 1.0),
                TimelineKind::Normal2 => (config.normal2_width, config.normal2_tau),
                TimelineKind::Anomaly1 => (config.anomaly1_width, config.anomaly_tau),
                TimelineKind::Anomaly2 => (config.anomaly2_width, config.anomaly_tau),
            };
            let bumps = if kind == TimelineKind::Normal1 {
                Vec::new()
            } else {
                let margin = 10.0;
                let t0 = rng.random_range(margin..config.length as f64 - width - margin).floor();
                vec![SigmoidBump {
                    t0,
                    t1: t0 + width,
                    tau,
                    amplitude: config.amplitude,
                }]
            };
            let profile = TimelineProfile {
                kind,
                length: config.length,
                base_stats: stats.clone(),
                bumps,
                noise_std_scale: if kind.is_anomalous() {
                    config.anomaly_noise_scale
                } else {
                    0.0
                },
                seed,
                component_id: component_id.clone(),
                app_type: config.app_type.clone(),
                app_instance: format!("{}-{}-{r:02}", kind.name(), split.name()),
                start_t: 0,
                sample_interval: config.sample_interval,
            };
            streams.push(LabeledStream {
                component_id: component_id.clone(),
                kind,
                split,
                anomalous: profile.anomalous_intervals(),
                records: gen_timeline(&profile)?,
            });
        }
    }
    Ok(BehavioralBundle {
        config: config.clone(),
        streams,
    })
}

impl BehavioralBundle {
    pub fn streams_of<'a>(
        &'a self,
        component: &'a str,
        kind: TimelineKind,
        split: Split,
    ) -> impl Iterator<Item = &'a LabeledStream> + 'a {
        self.streams
            .iter()
            .filter(move |s| s.component_id == component && s.kind == kind && s.split == split)
    }

    pub fn component_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.streams.iter().map(|s| s.component_id.clone()).collect();
        ids.dedup();
        ids
    }

    /// `<kind>/<split>.jsonl` per present pair, plus `<kind>/test.truth.json`
    /// for anomalous kinds and a manifest.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut files: BTreeMap<(TimelineKind, Split), String> = BTreeMap::new();
        let mut truth: BTreeMap<TimelineKind, Vec<IntervalRecord>> = BTreeMap::new();
        for s in &self.streams {
            let text = files.entry((s.kind, s.split)).or_default();
            for r in &s.records {
                text.push_str(&serde_json::to_string(r)?);
                text.push('\n');
            }
            if s.kind.is_anomalous() {
                truth.entry(s.kind).or_default().push(IntervalRecord {
                    component_id: s.component_id.clone(),
                    app_instance: s.instance().to_string(),
                    intervals: s.anomalous.clone(),
                });
            }
        }
        for ((kind, split), text) in &files {
            let sub = dir.join(kind.name());
            fs::create_dir_all(&sub)?;
            fs::write(sub.join(format!("{}.jsonl", split.name())), text)?;
        }
        for (kind, records) in &truth {
            fs::write(
                dir.join(kind.name()).join("test.truth.json"),
                serde_json::to_string_pretty(records)? + "\n",
            )?;
        }
        let manifest = Manifest {
            kind: "behavioral".into(),
            seed: self.config.seed,
            config: serde_json::to_value(&self.config)?,
        };
        manifest.write(dir)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest = Manifest::read(dir)?;
        if manifest.kind != "behavioral" {
            return Err(Error::input(format!("{} holds a {} bundle", dir.display(), manifest.kind)));
        }
        let config: BehavioralBundleConfig = serde_json::from_value(manifest.config)?;
        let mut streams = Vec::new();
        for kind in TimelineKind::ALL {
            let truth: Vec<IntervalRecord> = match fs::read_to_string(dir.join(kind.name()).join("test.truth.json")) {
                Ok(text) => serde_json::from_str(&text)?,
                Err(_) => Vec::new(),
            };
            for split in [Split::Train, Split::Validation, Split::Test] {
                let path = dir.join(kind.name()).join(format!("{}.jsonl", split.name()));
                let Ok(text) = fs::read_to_string(&path) else {
                    continue;
                };
                for records in group_streams(MeasurementRecord::read_jsonl(&text)?) {
                    let first = &records[0];
                    let anomalous = truth
                        .iter()
                        .find(|t| t.component_id == first.component_id && t.app_instance == first.app_instance)
                        .map(|t| t.intervals.clone())
                        .unwrap_or_default();
                    streams.push(LabeledStream {
                        component_id: first.component_id.clone(),
                        kind,
                        split,
                        anomalous,
                        records,
                    });
                }
            }
        }
        streams.sort_by(|a, b| a.component_id.cmp(&b.component_id));
        Ok(BehavioralBundle { config, streams })
    }
}

/// Splits interleaved telemetry into per-(component, instance) streams in
/// order of first appearance.
pub fn group_streams(records: Vec<MeasurementRecord>) -> Vec<Vec<MeasurementRecord>> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<MeasurementRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.component_id.clone(), r.app_instance.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order.into_iter().map(|k| groups.remove(&k).expect("grouped")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructuralBundleConfig {
    pub family: GraphFamily,
    pub train_graphs: usize,
    /// Test graphs per anomaly category.
    pub test_graphs: usize,
    pub fraction_anomalous: f64,
    /// Defaults to 5 for recorded-like and 8 for synthetic graphs.
    pub max_edit_distance: Option<usize>,
    /// Distinct snapshots in the recorded-like pool.
    pub pool_size: usize,
    /// Overrides the family's default generator profile.
    pub profile: Option<GraphGenProfile>,
    pub seed: u64,
}

impl Default for StructuralBundleConfig {
    fn default() -> Self {
        StructuralBundleConfig {
            family: GraphFamily::RecordedLike,
            train_graphs: 400,
            test_graphs: 400,
            fraction_anomalous: 0.10,
            max_edit_distance: None,
            pool_size: 16,
            profile: None,
            seed: 1,
        }
    }
}

impl StructuralBundleConfig {
    pub fn profile(&self) -> GraphGenProfile {
        let mut p = self
            .profile
            .clone()
            .unwrap_or_else(|| GraphGenProfile::for_family(self.family, self.seed));
        p.seed = self.seed;
        p
    }

    pub fn anomaly_spec(&self, category: AnomalyCategory) -> AnomalySpec {
        let mut spec = AnomalySpec::for_family(self.family, category);
        spec.fraction_anomalous = self.fraction_anomalous;
        if let Some(d) = self.max_edit_distance {
            spec.max_edit_distance = d;
        }
        spec
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledGraph {
    pub graph: AppGraph,
    pub truth: GroundTruth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructuralBundle {
    pub config: StructuralBundleConfig,
    pub train: Vec<AppGraph>,
    pub tests: BTreeMap<AnomalyCategory, Vec<LabeledGraph>>,
}

/// Draws benign graphs: from a fixed snapshot pool (recorded-like) or
/// freshly generated (synthetic).
struct GraphSource {
    pool: Option<RecordingPool>,
    profile: GraphGenProfile,
}

impl GraphSource {
    fn new(config: &StructuralBundleConfig) -> Result<Self> {
        let profile = config.profile();
        profile.validate()?;
        let pool = match config.family {
            GraphFamily::RecordedLike => Some(RecordingPool::new(&profile, config.pool_size)?),
            GraphFamily::Synthetic => None,
        };
        Ok(GraphSource { pool, profile })
    }

    fn draw(&self, rng: &mut ChaCha8Rng, id: String, timestamp: i64) -> Result<AppGraph> {
        let mut g = match &self.pool {
            Some(pool) => pool.draw(rng),
            None => {
                let mut p = self.profile.clone();
                p.seed = rng.random();
                gen_graph(&p)?
            }
        };
        g.graph_id = id;
        g.timestamp = timestamp;
        Ok(g)
    }
}

pub fn structural_bundle(config: &StructuralBundleConfig) -> Result<StructuralBundle> {
    if !(config.fraction_anomalous > 0.0 && config.fraction_anomalous < 1.0) {
        return Err(Error::config("fraction_anomalous must lie in (0, 1)"));
    }
    if config.train_graphs == 0 {
        return Err(Error::config("need at least one training graph"));
    }
    let source = GraphSource::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 100));
    let train = (0..config.train_graphs)
        .map(|i| source.draw(&mut rng, format!("train-{i:04}"), i as i64))
        .collect::<Result<Vec<_>>>()?;

    let mut tests = BTreeMap::new();
    for (k, category) in AnomalyCategory::ALL.into_iter().enumerate() {
        let spec = config.anomaly_spec(category);
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 200 + k as u64));
        let mut set = Vec::with_capacity(config.test_graphs);
        for i in 0..config.test_graphs {
            let g = source.draw(&mut rng, format!("test-{}-{i:04}", category.name()), i as i64)?;
            if rng.random_bool(spec.fraction_anomalous) {
                let (graph, truth) = inject_anomaly(&g, &spec, rng.random())?;
                set.push(LabeledGraph { graph, truth });
            } else {
                set.push(LabeledGraph {
                    graph: g,
                    truth: GroundTruth::benign(),
                });
            }
        }
        tests.insert(category, set);
    }
    Ok(StructuralBundle {
        config: config.clone(),
        train,
        tests,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(&item)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

impl StructuralBundle {
    /// `train.jsonl`, and per category `test-<category>.jsonl` with a
    /// line-aligned `test-<category>.truth.jsonl` sidecar.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_jsonl(&dir.join("train.jsonl"), &self.train)?;
        for (category, set) in &self.tests {
            write_jsonl(
                &dir.join(format!("test-{}.jsonl", category.name())),
                set.iter().map(|l| &l.graph),
            )?;
            write_jsonl(
                &dir.join(format!("test-{}.truth.jsonl", category.name())),
                set.iter().map(|l| &l.truth),
            )?;
        }
        Manifest {
            kind: "structural".into(),
            seed: self.config.seed,
            config: serde_json::to_value(&self.config)?,
        }
        .write(dir)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest = Manifest::read(dir)?;
        if manifest.kind != "structural" {
            return Err(Error::input(format!("{} holds a {} bundle", dir.display(), manifest.kind)));
        }
        let config: StructuralBundleConfig = serde_json::from_value(manifest.config)?;
        let train = AppGraph::read_all(&dir.join("train.jsonl"))?;
        let mut tests = BTreeMap::new();
        for category in AnomalyCategory::ALL {
            let graphs_path = dir.join(format!("test-{}.jsonl", category.name()));
            if !graphs_path.exists() {
                continue;
            }
            let graphs = AppGraph::read_all(&graphs_path)?;
            let truth_text = fs::read_to_string(dir.join(format!("test-{}.truth.jsonl", category.name())))?;
            let truths = truth_text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| serde_json::from_str::<GroundTruth>(l).map_err(Error::from))
                .collect::<Result<Vec<_>>>()?;
            if truths.len() != graphs.len() {
                return Err(Error::input(format!("ground truth of `{}` is not aligned", category.name())));
            }
            tests.insert(
                category,
                graphs
                    .into_iter()
                    .zip(truths)
                    .map(|(graph, truth)| LabeledGraph { graph, truth })
                    .collect(),
            );
        }
        Ok(StructuralBundle { config, train, tests })
    }
}

/// Bundle description sufficient to regenerate it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.json"))
            .map_err(|e| Error::input(format!("{}: no readable manifest.json ({e})", dir.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

//! `compguard`: generate data, train detectors, monitor telemetry, score
//! application graphs and rerun the evaluation experiments.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime
//! failure, 3 anomaly reported.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use compguard::behavioral::{train_detector, BehavioralDetector, BehavioralParams, MeasurementRecord, StreamMonitor};
use compguard::datagen::{
    behavioral_bundle, group_streams, structural_bundle, GraphFamily, StructuralBundleConfig,
};
use compguard::eval::{
    run_behavioral_sweeps, run_structural_experiment, sweep_csv, threshold_baseline, Experiment, StructuralParams,
};
use compguard::kernels::KernelSpec;
use compguard::localization::{export_dot, localize};
use compguard::oneclass::TrainConfig;
use compguard::structural::{score_graph, AppGraph, StructuralModel, Verdict};

use config::{Config, UsageError, CONFIG_ENV};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_ANOMALY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "compguard", version, about = "One-class anomaly detection for component-based applications")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic data bundle.
    #[command(subcommand)]
    Generate(GenerateCmd),
    /// Train detectors from benign data.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Classify JSON-lines telemetry with trained behavioral detectors.
    Detect(DetectArgs),
    /// Score application graphs with a structural model.
    ScoreGraph(ScoreGraphArgs),
    /// Rerun an evaluation experiment on freshly generated data.
    #[command(subcommand)]
    Reproduce(ReproduceCmd),
}

#[derive(Subcommand, Debug)]
enum GenerateCmd {
    /// Telemetry timelines for the four behavioral profiles.
    Behavioral {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        components: Option<usize>,
        /// Samples per run.
        #[arg(long)]
        length: Option<usize>,
    },
    /// Benign training graphs plus one labeled test set per anomaly category.
    Structural {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        family: Option<Family>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        train_graphs: Option<usize>,
        /// Test graphs per category.
        #[arg(long)]
        test_graphs: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    RecordedLike,
    Synthetic,
}

impl From<Family> for GraphFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::RecordedLike => GraphFamily::RecordedLike,
            Family::Synthetic => GraphFamily::Synthetic,
        }
    }
}

#[derive(Subcommand, Debug)]
enum TrainCmd {
    /// One detector per (component, application type), written as
    /// `detector-<component>-<app_type>.json`.
    Behavioral(TrainBehavioralArgs),
    /// One model per application type, written as `structural-<app_type>.json`.
    Structural(TrainStructuralArgs),
}

#[derive(Args, Debug)]
struct TrainBehavioralArgs {
    /// Behavioral bundle; uses `<profile>/train.jsonl` and `<profile>/validation.jsonl`.
    #[arg(long, conflicts_with_all = ["train", "validation"])]
    bundle: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "normal2", requires = "bundle")]
    profile: NormalProfile,
    /// Benign training telemetry (JSON lines).
    #[arg(long, requires = "validation")]
    train: Option<PathBuf>,
    /// Benign validation telemetry used to calibrate the threshold.
    #[arg(long, requires = "train")]
    validation: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Window size in samples.
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    c: Option<f64>,
    /// RBF width per window value; the kernel uses sigma_per_value * sqrt(5 s).
    #[arg(long)]
    sigma_per_value: Option<f64>,
    #[arg(long)]
    target_fpr: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormalProfile {
    Normal1,
    Normal2,
}

#[derive(Args, Debug)]
struct TrainStructuralArgs {
    /// Benign graphs, one JSON document or JSON lines.
    #[arg(long, conflicts_with = "bundle")]
    graphs: Option<PathBuf>,
    /// Structural bundle; uses its `train.jsonl`.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    c: Option<f64>,
    /// Decision threshold stored with the model.
    #[arg(long, allow_hyphen_values = true)]
    threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Directory holding `detector-*.json` files.
    #[arg(long)]
    detectors: PathBuf,
    /// Telemetry file; standard input when omitted or `-`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Added to every calibrated threshold; positive values raise sensitivity.
    #[arg(long, allow_hyphen_values = true)]
    threshold_shift: Option<f64>,
}

#[derive(Args, Debug)]
struct ScoreGraphArgs {
    #[arg(long)]
    model: PathBuf,
    /// One graph document or JSON lines of graphs.
    #[arg(long)]
    graph: PathBuf,
    /// Overrides the threshold stored in the model.
    #[arg(long, allow_hyphen_values = true)]
    threshold: Option<f64>,
    /// Attach per-node and per-edge anomaly ratings.
    #[arg(long)]
    localize: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Output file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Format {
    Json,
    Dot,
}

#[derive(Subcommand, Debug)]
enum ReproduceCmd {
    /// Window-size sweep for the four behavioral experiments (CSV).
    BehavioralSweep {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated window sizes.
        #[arg(long, value_delimiter = ',')]
        s_grid: Option<Vec<usize>>,
        /// Also print the raw-value threshold baseline to standard error.
        #[arg(long)]
        baseline: bool,
    },
    /// Structural experiment on recorded-like graphs (JSON).
    StructuralRecorded(ReproduceStructuralArgs),
    /// Structural experiment on synthetic graphs (JSON).
    StructuralSynthetic(ReproduceStructuralArgs),
}

#[derive(Args, Debug)]
struct ReproduceStructuralArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `svdd`, `ocsvm`, or both when omitted.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    c: Option<f64>,
}

enum Outcome {
    Ok,
    Anomaly,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Anomaly) => ExitCode::from(EXIT_ANOMALY),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(err) = cause.downcast_ref::<compguard::Error>() {
            return match err {
                compguard::Error::Config(_)
                | compguard::Error::UnknownStrategy { .. }
                | compguard::Error::UnsupportedKernel(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            };
        }
    }
    EXIT_RUNTIME
}

fn run(cli: Cli) -> Result<Outcome> {
    let config = config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(cmd) => generate(cmd, &config),
        Command::Train(TrainCmd::Behavioral(args)) => train_behavioral(args, &config),
        Command::Train(TrainCmd::Structural(args)) => train_structural(args, &config),
        Command::Detect(args) => detect(args),
        Command::ScoreGraph(args) => score_graphs(args),
        Command::Reproduce(cmd) => reproduce(cmd, &config),
    }
}

fn generate(cmd: GenerateCmd, config: &Config) -> Result<Outcome> {
    match cmd {
        GenerateCmd::Behavioral {
            out,
            seed,
            components,
            length,
        } => {
            let mut cfg = config.generate.behavioral.clone();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(c) = components {
                cfg.components = c;
            }
            if let Some(l) = length {
                cfg.length = l;
            }
            let bundle = behavioral_bundle(&cfg)?;
            bundle
                .write(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {} streams to {}", bundle.streams.len(), out.display());
        }
        GenerateCmd::Structural {
            out,
            family,
            seed,
            train_graphs,
            test_graphs,
        } => {
            let mut cfg = config.generate.structural.clone();
            if let Some(f) = family {
                cfg.family = f.into();
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = train_graphs {
                cfg.train_graphs = n;
            }
            if let Some(n) = test_graphs {
                cfg.test_graphs = n;
            }
            let bundle = structural_bundle(&cfg)?;
            bundle
                .write(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            let tests: usize = bundle.tests.values().map(Vec::len).sum();
            eprintln!(
                "wrote {} training and {tests} test graphs to {}",
                bundle.train.len(),
                out.display()
            );
        }
    }
    Ok(Outcome::Ok)
}

fn read_telemetry(path: &Path) -> Result<Vec<MeasurementRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    MeasurementRecord::read_jsonl(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Groups streams by (component, application type).
fn by_detector_key(records: Vec<MeasurementRecord>) -> BTreeMap<(String, String), Vec<Vec<MeasurementRecord>>> {
    let mut out: BTreeMap<(String, String), Vec<Vec<MeasurementRecord>>> = BTreeMap::new();
    for stream in group_streams(records) {
        let key = (stream[0].component_id.clone(), stream[0].app_type.clone());
        out.entry(key).or_default().push(stream);
    }
    out
}

/// File-name safe rendering of an identifier.
fn file_part(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn train_behavioral(args: TrainBehavioralArgs, config: &Config) -> Result<Outcome> {
    let (train_path, validation_path) = match (&args.bundle, &args.train, &args.validation) {
        (Some(dir), _, _) => {
            let profile = match args.profile {
                NormalProfile::Normal1 => "normal1",
                NormalProfile::Normal2 => "normal2",
            };
            (dir.join(profile).join("train.jsonl"), dir.join(profile).join("validation.jsonl"))
        }
        (None, Some(t), Some(v)) => (t.clone(), v.clone()),
        _ => return Err(UsageError("give either --bundle or both --train and --validation".into()).into()),
    };
    let defaults = &config.train.behavioral;
    let s = args.s.unwrap_or(defaults.s);
    let sigma_per_value = args.sigma_per_value.unwrap_or(defaults.sigma_per_value);
    let params = BehavioralParams {
        s,
        c: args.c.unwrap_or(defaults.c),
        sigma: sigma_per_value * ((compguard::behavioral::MEASURED_VALUES * s) as f64).sqrt(),
        target_fpr: args.target_fpr.unwrap_or(defaults.target_fpr),
    };

    let train = by_detector_key(read_telemetry(&train_path)?);
    let mut validation = by_detector_key(read_telemetry(&validation_path)?);
    if train.is_empty() {
        bail!("{} holds no telemetry", train_path.display());
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for ((component, app_type), streams) in train {
        let val = validation.remove(&(component.clone(), app_type.clone())).unwrap_or_default();
        let detector = train_detector(&streams, &val, &params)
            .with_context(|| format!("training detector for `{component}`/`{app_type}`"))?;
        let path = args
            .out
            .join(format!("detector-{}-{}.json", file_part(&component), file_part(&app_type)));
        fs::write(&path, detector.to_json()? + "\n").with_context(|| format!("writing {}", path.display()))?;
        eprintln!(
            "{component}/{app_type}: {} support vectors, threshold {:.6} -> {}",
            detector.model.alphas().len(),
            detector.threshold,
            path.display()
        );
    }
    Ok(Outcome::Ok)
}

fn train_structural(args: TrainStructuralArgs, config: &Config) -> Result<Outcome> {
    let path = match (&args.graphs, &args.bundle) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join("train.jsonl"),
        (None, None) => return Err(UsageError("give --graphs or --bundle".into()).into()),
    };
    let graphs = AppGraph::read_all(&path).with_context(|| format!("reading {}", path.display()))?;
    let defaults = &config.train.structural;
    let method = args.method.unwrap_or_else(|| defaults.method.clone());
    let kernel = KernelSpec {
        kind: args.kernel.unwrap_or_else(|| defaults.kernel.clone()),
        sigma: None,
    };
    let cfg = TrainConfig::with_c(args.c.unwrap_or(defaults.c));
    let threshold = args.threshold.unwrap_or(defaults.threshold);

    let mut by_type: BTreeMap<String, Vec<AppGraph>> = BTreeMap::new();
    for g in graphs {
        by_type.entry(g.app_type.clone()).or_default().push(g);
    }
    if by_type.is_empty() {
        bail!("{} holds no graphs", path.display());
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for (app_type, graphs) in by_type {
        let mut model = StructuralModel::train(&graphs, &method, &kernel, &cfg)
            .with_context(|| format!("training structural model for `{app_type}`"))?;
        model.threshold = threshold;
        let out = args.out.join(format!("structural-{}.json", file_part(&app_type)));
        fs::write(&out, model.to_json()? + "\n").with_context(|| format!("writing {}", out.display()))?;
        eprintln!(
            "{app_type}: {} graphs, {} substructure keys, {} support vectors -> {}",
            graphs.len(),
            model.space.len(),
            model.model.alphas().len(),
            out.display()
        );
    }
    Ok(Outcome::Ok)
}

fn load_detectors(dir: &Path) -> Result<Vec<BehavioralDetector>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("detector-") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(UsageError(format!("no detector-*.json files in {}", dir.display())).into());
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            BehavioralDetector::from_json(&text).with_context(|| format!("loading {}", p.display()))
        })
        .collect()
}

fn detect(args: DetectArgs) -> Result<Outcome> {
    let mut monitor = StreamMonitor::new(load_detectors(&args.detectors)?);
    if let Some(delta) = args.threshold_shift {
        monitor.shift_thresholds(delta);
    }
    let input: Box<dyn BufRead> = match &args.input {
        Some(p) if p.as_os_str() != "-" => {
            Box::new(BufReader::new(fs::File::open(p).with_context(|| format!("opening {}", p.display()))?))
        }
        _ => Box::new(BufReader::new(io::stdin())),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut alerts = 0usize;
    for (n, line) in input.lines().enumerate() {
        let line = line.context("reading telemetry")?;
        if line.trim().is_empty() {
            continue;
        }
        let record: MeasurementRecord =
            serde_json::from_str(&line).with_context(|| format!("telemetry line {}", n + 1))?;
        if let Some(alert) = monitor.push(record).with_context(|| format!("telemetry line {}", n + 1))? {
            alerts += 1;
            let written = writeln!(out, "{}", serde_json::to_string(&alert)?).and_then(|_| out.flush());
            match written {
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => break,
                other => other?,
            }
        }
    }
    Ok(if alerts > 0 { Outcome::Anomaly } else { Outcome::Ok })
}

fn score_graphs(args: ScoreGraphArgs) -> Result<Outcome> {
    if args.format == Format::Dot && !args.localize {
        return Err(UsageError("--format dot needs --localize".into()).into());
    }
    let text = fs::read_to_string(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let model = StructuralModel::from_json(&text).with_context(|| format!("loading {}", args.model.display()))?;
    let threshold = args.threshold.unwrap_or(model.threshold);
    let graphs = AppGraph::read_all(&args.graph).with_context(|| format!("reading {}", args.graph.display()))?;

    let mut rendered = String::new();
    let mut anomalous = 0usize;
    for g in &graphs {
        if g.app_type != model.app_type {
            bail!(
                "graph `{}` has application type `{}`, the model covers `{}`",
                g.graph_id,
                g.app_type,
                model.app_type
            );
        }
        let x = model.embed(g)?;
        let score = score_graph(&model.model, &x, threshold)?;
        anomalous += (score.verdict == Verdict::Anomalous) as usize;
        let local = if args.localize {
            Some(localize(&model.model, g, &x, Some(&model.space))?)
        } else {
            None
        };
        match args.format {
            Format::Json => {
                let mut doc = serde_json::json!({
                    "graph_id": g.graph_id,
                    "f": score.f,
                    "threshold": threshold,
                    "verdict": score.verdict,
                });
                if let Some(l) = &local {
                    doc["localization"] = l.to_json();
                }
                rendered.push_str(&serde_json::to_string(&doc)?);
                rendered.push('\n');
            }
            Format::Dot => rendered.push_str(&export_dot(g, local.as_ref().expect("checked above"))),
        }
    }
    write_output(args.out.as_deref(), &rendered)?;
    Ok(if anomalous > 0 { Outcome::Anomaly } else { Outcome::Ok })
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn reproduce(cmd: ReproduceCmd, config: &Config) -> Result<Outcome> {
    match cmd {
        ReproduceCmd::BehavioralSweep {
            out,
            seed,
            s_grid,
            baseline,
        } => {
            let mut cfg = config.generate.behavioral.clone();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let mut params = config.sweep.clone();
            if let Some(grid) = s_grid {
                params.s_grid = grid;
            }
            let bundle = behavioral_bundle(&cfg)?;
            let results = run_behavioral_sweeps(&bundle, &Experiment::ALL, &params)?;
            write_output(out.as_deref(), &sweep_csv(&results))?;
            if baseline {
                for e in Experiment::ALL {
                    let b = threshold_baseline(&bundle, e, params.target_fpr)?;
                    eprintln!("baseline {}: tpr {:.4} fpr {:.6}", e.name(), b.tpr, b.fpr);
                }
            }
        }
        ReproduceCmd::StructuralRecorded(args) => reproduce_structural(args, GraphFamily::RecordedLike, config)?,
        ReproduceCmd::StructuralSynthetic(args) => reproduce_structural(args, GraphFamily::Synthetic, config)?,
    }
    Ok(Outcome::Ok)
}

fn reproduce_structural(args: ReproduceStructuralArgs, family: GraphFamily, config: &Config) -> Result<()> {
    let mut cfg = StructuralBundleConfig {
        family,
        ..config.generate.structural.clone()
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let methods: Vec<String> = match args.method {
        Some(m) => vec![m],
        None => vec!["svdd".into(), "ocsvm".into()],
    };
    let defaults = &config.train.structural;
    let kernel = KernelSpec {
        kind: defaults.kernel.clone(),
        sigma: None,
    };
    let bundle = structural_bundle(&cfg)?;
    let results = methods
        .iter()
        .map(|m| {
            run_structural_experiment(
                &bundle,
                &StructuralParams {
                    method: m.clone(),
                    kernel: kernel.clone(),
                    c: args.c.unwrap_or(defaults.c),
                },
            )
        })
        .collect::<compguard::Result<Vec<_>>>()?;
    for r in &results {
        for c in &r.categories {
            eprintln!(
                "{} {:<8} graph auc {:.4}  local auc {:.4}  top-decile hits {:.3}",
                r.method,
                c.category.name(),
                c.graph_roc.auc,
                c.local_roc.auc,
                c.top_decile_hit_rate
            );
        }
    }
    let doc = serde_json::json!({
        "family": family,
        "seed": cfg.seed,
        "results": results,
    });
    write_output(args.out.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))
}

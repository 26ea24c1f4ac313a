//! On-disk formats: scenario JSON, JSONL logs and traces, trees, PEM
//! parameters, run manifests and the metrics CSV.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use drivestack_core::pem::{DetectionLogFrame, PemParams, PEM_SCHEMA_VERSION};
use drivestack_core::prediction::{GoalSample, GoalTree, TreeProperty, FEATURE_NAMES};
use drivestack_core::simulator::{Metrics, Perception, PredictionMode, SimTrace, StepRecord, TraceHeader};
use drivestack_core::Scenario;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const TREES_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}:{column}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("{}: {msg}", path.display())]
    Invalid { path: PathBuf, msg: String },
}

impl FormatError {
    fn invalid(path: &Path, msg: impl std::fmt::Display) -> Self {
        FormatError::Invalid {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    let io = |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, text).map_err(io)
}

fn parse_at<T: DeserializeOwned>(path: &Path, text: &str, line_offset: usize) -> Result<T, FormatError> {
    serde_json::from_str(text).map_err(|e| FormatError::Parse {
        path: path.to_path_buf(),
        line: e.line() + line_offset,
        column: e.column(),
        msg: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    parse_at(path, &read_text(path)?, 0)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

/// One JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_at(path, l, i))
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).expect("serializable value"));
        s.push('\n');
    }
    s
}

pub fn load_scenario(path: &Path) -> Result<Scenario, FormatError> {
    let sc: Scenario = read_json(path)?;
    sc.validate().map_err(|e| FormatError::invalid(path, e))?;
    Ok(sc)
}

pub fn load_detection_log(path: &Path) -> Result<Vec<DetectionLogFrame>, FormatError> {
    read_jsonl(path)
}

pub fn load_dataset(path: &Path) -> Result<Vec<GoalSample>, FormatError> {
    read_jsonl(path)
}

pub fn load_pem(path: &Path) -> Result<PemParams, FormatError> {
    let p: PemParams = read_json(path)?;
    if p.schema_version != PEM_SCHEMA_VERSION {
        return Err(FormatError::invalid(
            path,
            format!("unsupported schema_version {} (expected {PEM_SCHEMA_VERSION})", p.schema_version),
        ));
    }
    if !(p.sigma0 >= 0.0 && p.sigma1 >= 0.0) {
        return Err(FormatError::invalid(path, "sigma0 and sigma1 must be >= 0"));
    }
    Ok(p)
}

/// Trained trees with the feature schema they expect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreesDocument {
    pub schema_version: u32,
    pub features: Vec<String>,
    pub trees: Vec<GoalTree>,
}

impl TreesDocument {
    pub fn new(trees: Vec<GoalTree>) -> Self {
        let nf = trees.first().map_or(FEATURE_NAMES.len(), |t| t.num_features);
        let features = if nf == FEATURE_NAMES.len() {
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..nf).map(|i| format!("f{i}")).collect()
        };
        Self {
            schema_version: TREES_SCHEMA_VERSION,
            features,
            trees,
        }
    }
}

pub fn load_trees(path: &Path) -> Result<Vec<GoalTree>, FormatError> {
    let d: TreesDocument = read_json(path)?;
    if d.schema_version != TREES_SCHEMA_VERSION {
        return Err(FormatError::invalid(
            path,
            format!("unsupported schema_version {} (expected {TREES_SCHEMA_VERSION})", d.schema_version),
        ));
    }
    if let Some(t) = d.trees.iter().find(|t| t.num_features != d.features.len()) {
        return Err(FormatError::invalid(path, format!("tree {} does not match the feature list", t.goal)));
    }
    Ok(d.trees)
}

pub fn load_property(path: &Path) -> Result<TreeProperty, FormatError> {
    read_json(path)
}

/// Header line followed by one line per step record.
pub fn trace_to_jsonl(trace: &SimTrace) -> String {
    let mut s = serde_json::to_string(&trace.header).expect("serializable header");
    s.push('\n');
    s.push_str(&to_jsonl(&trace.records));
    s
}

pub fn load_trace(path: &Path) -> Result<SimTrace, FormatError> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| FormatError::invalid(path, "empty trace"))?;
    let header: TraceHeader = parse_at(path, first, 0)?;
    let records: Vec<StepRecord> = lines.map(|(i, l)| parse_at(path, l, i)).collect::<Result<_, _>>()?;
    Ok(SimTrace { header, records })
}

/// Batch description; scenario paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub scenarios: Vec<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub steps: Option<usize>,
    pub prediction: Option<PredictionMode>,
    pub perception: Option<Perception>,
    pub pem: Option<PathBuf>,
    pub trees: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub nlp_budget: Option<usize>,
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, FormatError> {
    let mut m: RunManifest = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    m.scenarios.iter_mut().for_each(resolve);
    for p in [&mut m.overrides.pem, &mut m.overrides.trees, &mut m.overrides.rules].into_iter().flatten() {
        resolve(p);
    }
    if let Some(p) = m.scenarios.iter().find(|p| !p.exists()) {
        return Err(FormatError::invalid(path, format!("scenario {} does not exist", p.display())));
    }
    Ok(m)
}

/// Column order of the metrics CSV.
pub const METRICS_HEADER: [&str; 16] = [
    "scenario",
    "seed",
    "steps",
    "collision",
    "first_collision_step",
    "min_separation",
    "progress",
    "max_jerk_accel",
    "max_jerk_steer",
    "nlp_converged",
    "milp_seed_fallback",
    "emergency_brake",
    "mean_cycle_time",
    "p95_cycle_time",
    "prediction_accuracy",
    "first_detection_step",
];

#[derive(Debug, Serialize)]
struct MetricsRow<'a> {
    scenario: &'a str,
    seed: u64,
    steps: usize,
    collision: bool,
    first_collision_step: Option<usize>,
    min_separation: Option<f64>,
    progress: f64,
    max_jerk_accel: f64,
    max_jerk_steer: f64,
    nlp_converged: usize,
    milp_seed_fallback: usize,
    emergency_brake: usize,
    mean_cycle_time: f64,
    p95_cycle_time: f64,
    prediction_accuracy: Option<f64>,
    first_detection_step: Option<usize>,
}

/// CSV with the fixed header and one row per `(scenario, seed, metrics)`.
pub fn metrics_csv(rows: &[(String, u64, Metrics)]) -> String {
    use drivestack_core::planner::PlanSource;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(METRICS_HEADER).expect("in-memory write");
    for (name, seed, m) in rows {
        w.serialize(MetricsRow {
            scenario: name,
            seed: *seed,
            steps: m.steps,
            collision: m.collision,
            first_collision_step: m.first_collision_step,
            min_separation: m.min_separation,
            progress: m.progress,
            max_jerk_accel: m.max_jerk_accel,
            max_jerk_steer: m.max_jerk_steer,
            nlp_converged: m.source_count(PlanSource::NlpConverged),
            milp_seed_fallback: m.source_count(PlanSource::MilpSeedFallback),
            emergency_brake: m.source_count(PlanSource::EmergencyBrake),
            mean_cycle_time: m.mean_cycle_time,
            p95_cycle_time: m.p95_cycle_time,
            prediction_accuracy: m.prediction_accuracy,
            first_detection_step: m.first_detection_step(),
        })
        .expect("in-memory write");
    }
    let mut bytes = w.into_inner().expect("in-memory flush");
    bytes.flush().expect("in-memory flush");
    String::from_utf8(bytes).expect("utf-8 csv")
}

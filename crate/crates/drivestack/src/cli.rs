//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation error, 3 a fallback
//! plan was used, 4 tree verification found a counterexample.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use drivestack_core::clock::{Clock, FrozenClock};
use drivestack_core::milp_stage::build_milp;
use drivestack_core::pem::fit_pem;
use drivestack_core::planner::{plan_cycle, PlanSource, PlannerConfig};
use drivestack_core::prediction::{grit_train, grit_verify, Verification};
use drivestack_core::rules::{parse_rule, parse_rules, robustness, StlFormula};
use drivestack_core::simulator::{evaluate, nominal_scenarios, run_sim, script_agents, signal_trace, Perception, PredictionMode, SimConfig};
use drivestack_core::world::ObstaclePrediction;
use rayon::prelude::*;

use crate::formats::{self, FormatError, Overrides, TreesDocument};
use crate::svg::render_svg;
use crate::WallClock;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DEGRADED: i32 = 3;
pub const EXIT_COUNTEREXAMPLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "drivestack", version, about = "MILP-seeded trajectory planning with goal prediction and perception error models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan one cycle for a scenario and print the plan as JSON.
    Plan(PlanArgs),
    /// Run the closed loop on one scenario.
    Simulate(SimulateArgs),
    /// Simulate every scenario of a manifest in parallel.
    Batch(BatchArgs),
    /// Fit PEM parameters to a JSONL detection log.
    PemFit(PemFitArgs),
    /// Train one goal tree per class from a JSONL dataset.
    GritTrain(GritTrainArgs),
    /// Check a box property against trained trees.
    GritVerify(GritVerifyArgs),
    /// Robustness of formulas against the ego signals of a trace.
    RulesCheck(RulesCheckArgs),
    /// Write the built-in nominal scenarios and a manifest.
    Suite(SuiteArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PredictionArg {
    Inverse,
    Trees,
    Cv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PerceptionArg {
    Gt,
    Surrogate,
}

#[derive(Debug, Args)]
struct PlannerArgs {
    /// Rule file: one formula per line, `#` comments.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Outer augmented-Lagrangian iterations; 0 forces a fallback.
    #[arg(long)]
    nlp_budget: Option<usize>,
    /// Measure wall time; solver time limits then apply.
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args)]
struct PlanArgs {
    scenario: PathBuf,
    #[command(flatten)]
    planner: PlannerArgs,
    /// Output directory for plan.json (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the MILP as text to <out>/milp.txt.
    #[arg(long, requires = "out")]
    dump_milp: bool,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    steps: Option<usize>,
    /// PEM parameters JSON.
    #[arg(long)]
    pem: Option<PathBuf>,
    /// Trained trees JSON.
    #[arg(long)]
    trees: Option<PathBuf>,
    #[arg(long, value_enum)]
    prediction: Option<PredictionArg>,
    #[arg(long, value_enum)]
    perception: Option<PerceptionArg>,
    #[command(flatten)]
    planner: PlannerArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    scenario: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
    /// Output directory for trace.jsonl and metrics.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write <out>/trace.svg.
    #[arg(long, requires = "out")]
    svg: bool,
}

#[derive(Debug, Args)]
struct BatchArgs {
    manifest: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides the manifest seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the manifest output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Measure wall time; solver time limits then apply.
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args)]
struct PemFitArgs {
    log: PathBuf,
    /// Association gate in meters.
    #[arg(long, default_value_t = 2.0)]
    gate: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GritTrainArgs {
    dataset: PathBuf,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 5)]
    min_leaf: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GritVerifyArgs {
    trees: PathBuf,
    property: PathBuf,
}

#[derive(Debug, Args)]
struct RulesCheckArgs {
    trace: PathBuf,
    /// A single formula.
    #[arg(long, conflicts_with = "rules")]
    formula: Option<String>,
    #[arg(long, required_unless_present = "formula")]
    rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SuiteArgs {
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    fn validation(e: impl std::fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }
}

type Outcome = Result<i32, CliError>;

/// Parses `argv` (program name first) and runs the subcommand.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let r = match cli.command {
        Command::Plan(a) => plan(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Batch(a) => batch(a, out),
        Command::PemFit(a) => pem_fit(a, out),
        Command::GritTrain(a) => grit_train_cmd(a, out),
        Command::GritVerify(a) => grit_verify_cmd(a, out),
        Command::RulesCheck(a) => rules_check(a, out),
        Command::Suite(a) => suite(a, out),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_VALIDATION
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) {
    let _ = out.write_all(text.as_bytes());
}

fn load_rules(path: &Path) -> Result<Vec<StlFormula>, CliError> {
    let text = formats::read_text(path)?;
    parse_rules(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn planner_config(a: &PlannerArgs) -> Result<PlannerConfig, CliError> {
    let mut c = PlannerConfig::default();
    if let Some(p) = &a.rules {
        c.rules = load_rules(p)?;
    }
    if let Some(n) = a.nlp_budget {
        c.nlp_budget.max_outer = n;
    }
    Ok(c)
}

fn with_clock<R>(timing: bool, f: impl FnOnce(&dyn Clock) -> R) -> R {
    if timing {
        f(&WallClock::new())
    } else {
        f(&FrozenClock)
    }
}

fn plan(a: PlanArgs, out: &mut dyn Write) -> Outcome {
    let sc = formats::load_scenario(&a.scenario)?;
    let config = planner_config(&a.planner)?;
    let n = sc.horizon_steps;
    let futures = script_agents(&sc, n).map_err(CliError::validation)?;
    let preds: Vec<ObstaclePrediction> = sc
        .obstacles
        .iter()
        .zip(futures)
        .map(|(o, states)| ObstaclePrediction {
            id: o.id.clone(),
            half_length: o.half_length,
            half_width: o.half_width,
            states,
        })
        .collect();
    let result = with_clock(a.planner.timing, |clock| plan_cycle(&sc, &preds, &config, None, &clock))
        .map_err(CliError::validation)?;
    let json = formats::to_json(&result);
    match &a.out {
        Some(dir) => {
            formats::write_text(&dir.join("plan.json"), &json)?;
            if a.dump_milp {
                let text = match build_milp(&sc, &preds, &config.milp, &config.rules) {
                    Ok(p) => p.to_text(),
                    Err(e) => format!("# MILP could not be built: {e}\n"),
                };
                formats::write_text(&dir.join("milp.txt"), &text)?;
            }
        }
        None => emit(out, &json),
    }
    Ok(if result.source == PlanSource::NlpConverged {
        EXIT_OK
    } else {
        EXIT_DEGRADED
    })
}

fn sim_config(a: &SimArgs) -> Result<SimConfig, CliError> {
    let mut c = SimConfig {
        seed: a.seed,
        planner: planner_config(&a.planner)?,
        ..SimConfig::default()
    };
    if let Some(s) = a.steps {
        c.steps = s;
    }
    if let Some(p) = &a.pem {
        c.pem = Some(formats::load_pem(p)?);
    }
    if let Some(p) = &a.trees {
        c.trees = formats::load_trees(p)?;
    }
    if let Some(p) = a.prediction {
        c.prediction = match p {
            PredictionArg::Inverse => PredictionMode::InversePlanning,
            PredictionArg::Trees => PredictionMode::Trees,
            PredictionArg::Cv => PredictionMode::ConstantVelocity,
        };
    }
    if let Some(p) = a.perception {
        c.perception = match p {
            PerceptionArg::Gt => Perception::GroundTruth,
            PerceptionArg::Surrogate => Perception::Surrogate,
        };
    }
    Ok(c)
}

fn scenario_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> Outcome {
    let sc = formats::load_scenario(&a.scenario)?;
    let config = sim_config(&a.sim)?;
    let trace = with_clock(a.sim.planner.timing, |clock| run_sim(&sc, &config, &clock)).map_err(CliError::validation)?;
    let metrics = evaluate(&trace);
    let csv = formats::metrics_csv(&[(scenario_name(&a.scenario), config.seed, metrics)]);
    if let Some(dir) = &a.out {
        formats::write_text(&dir.join("trace.jsonl"), &formats::trace_to_jsonl(&trace))?;
        formats::write_text(&dir.join("metrics.csv"), &csv)?;
        if a.svg {
            formats::write_text(&dir.join("trace.svg"), &render_svg(&trace))?;
        }
    }
    emit(out, &csv);
    Ok(EXIT_OK)
}

fn apply_overrides(o: &Overrides, seed: u64) -> Result<SimConfig, CliError> {
    let mut c = SimConfig {
        seed,
        ..SimConfig::default()
    };
    if let Some(s) = o.steps {
        c.steps = s;
    }
    if let Some(p) = o.prediction {
        c.prediction = p;
    }
    if let Some(p) = o.perception {
        c.perception = p;
    }
    if let Some(p) = &o.pem {
        c.pem = Some(formats::load_pem(p)?);
    }
    if let Some(p) = &o.trees {
        c.trees = formats::load_trees(p)?;
    }
    if let Some(p) = &o.rules {
        c.planner.rules = load_rules(p)?;
    }
    if let Some(n) = o.nlp_budget {
        c.planner.nlp_budget.max_outer = n;
    }
    Ok(c)
}

fn batch(a: BatchArgs, out: &mut dyn Write) -> Outcome {
    if a.jobs == 0 {
        return Err(CliError::validation("--jobs must be at least 1"));
    }
    let m = formats::load_manifest(&a.manifest)?;
    let seed = a.seed.unwrap_or(m.seed);
    let base = apply_overrides(&m.overrides, seed)?;
    let scenarios = m
        .scenarios
        .iter()
        .map(|p| formats::load_scenario(p).map(|s| (scenario_name(p), s)))
        .collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(CliError::validation)?;
    let rows = pool.install(|| {
        scenarios
            .par_iter()
            .enumerate()
            .map(|(i, (name, sc))| {
                let config = SimConfig {
                    seed: seed.wrapping_add(i as u64),
                    ..base.clone()
                };
                with_clock(a.timing, |clock| run_sim(sc, &config, &clock))
                    .map(|t| (name.clone(), config.seed, evaluate(&t)))
                    .map_err(|e| CliError::Validation(format!("{name}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let csv = formats::metrics_csv(&rows);
    if let Some(dir) = a.out.as_ref().or(m.output_dir.as_ref()) {
        formats::write_text(&dir.join("metrics.csv"), &csv)?;
    }
    emit(out, &csv);
    Ok(EXIT_OK)
}

fn pem_fit(a: PemFitArgs, out: &mut dyn Write) -> Outcome {
    let frames = formats::load_detection_log(&a.log)?;
    let params = fit_pem(&frames, a.gate).map_err(CliError::validation)?;
    let json = formats::to_json(&params);
    match &a.out {
        Some(dir) => formats::write_text(&dir.join("pem.json"), &json)?,
        None => emit(out, &json),
    }
    Ok(EXIT_OK)
}

fn grit_train_cmd(a: GritTrainArgs, out: &mut dyn Write) -> Outcome {
    let data = formats::load_dataset(&a.dataset)?;
    let (x, y): (Vec<Vec<f64>>, Vec<String>) = data.into_iter().map(|s| (s.features, s.goal)).unzip();
    let trees = grit_train(&x, &y, a.depth, a.min_leaf).map_err(CliError::validation)?;
    let json = formats::to_json(&TreesDocument::new(trees));
    match &a.out {
        Some(dir) => formats::write_text(&dir.join("trees.json"), &json)?,
        None => emit(out, &json),
    }
    Ok(EXIT_OK)
}

fn grit_verify_cmd(a: GritVerifyArgs, out: &mut dyn Write) -> Outcome {
    let trees = formats::load_trees(&a.trees)?;
    let prop = formats::load_property(&a.property)?;
    let v = grit_verify(&trees, &prop).map_err(CliError::validation)?;
    emit(out, &formats::to_json(&v));
    Ok(match v {
        Verification::Verified => EXIT_OK,
        Verification::Counterexample { .. } => EXIT_COUNTEREXAMPLE,
    })
}

fn rules_check(a: RulesCheckArgs, out: &mut dyn Write) -> Outcome {
    let trace = formats::load_trace(&a.trace)?;
    let formulas = match (&a.formula, &a.rules) {
        (Some(f), _) => vec![parse_rule(f).map_err(CliError::validation)?],
        (None, Some(p)) => load_rules(p)?,
        (None, None) => unreachable!("clap requires one of --formula and --rules"),
    };
    let signals = signal_trace(&trace);
    for f in &formulas {
        let r = robustness(f, &signals).map_err(CliError::validation)?;
        emit(out, &format!("{r:.6}\t{f}\n"));
    }
    Ok(EXIT_OK)
}

fn suite(a: SuiteArgs, out: &mut dyn Write) -> Outcome {
    let mut names = Vec::new();
    for (name, sc) in nominal_scenarios() {
        let file = format!("{name}.json");
        formats::write_text(&a.out.join(&file), &formats::to_json(&sc))?;
        names.push(PathBuf::from(file));
    }
    let manifest = formats::RunManifest {
        scenarios: names,
        seed: 0,
        output_dir: None,
        overrides: Overrides::default(),
    };
    let path = a.out.join("manifest.json");
    formats::write_text(&path, &formats::to_json(&manifest))?;
    emit(out, &format!("{}\n", path.display()));
    Ok(EXIT_OK)
}

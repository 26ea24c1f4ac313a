//! Deterministic closed-loop execution: scripted agents, optional perception
//! errors, prediction, planning and ego integration.

mod metrics;
mod suite;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::pem::{apply_pem_seeded, salient_vars, ObjectObservation, PemParams};
use crate::planner::{emergency_brake, plan_cycle, PlanSource, PlannerConfig};
use crate::prediction::{
    extract_goals, goal_posterior, grit_infer, predict_trajectories, speed_profile, tree_features, GoalPosterior,
    GoalTree, InverseConfig, PredictionSet, Route,
};
use crate::prelude::*;
use crate::world::{bicycle_step, AgentPolicy, AgentState, ObstaclePrediction, OrientedBox, RoadCorridor, Scenario, VehicleParams, WorldError};

pub use metrics::{evaluate, signal_trace, Metrics};
pub use suite::{exit_ramp_scenario, nominal_scenarios, scripted_driver_samples};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] WorldError),
    #[error("steps must be at least 1")]
    Steps,
    #[error("surrogate perception needs PEM parameters")]
    MissingPem,
    #[error("tree prediction needs trained trees")]
    MissingTrees,
    #[error("obstacle {id}: route {route} is not reachable from its start")]
    Route { id: String, route: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perception {
    #[default]
    GroundTruth,
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    #[default]
    InversePlanning,
    Trees,
    ConstantVelocity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub steps: usize,
    pub pem: Option<PemParams>,
    pub perception: Perception,
    pub prediction: PredictionMode,
    pub seed: u64,
    pub planner: PlannerConfig,
    pub inverse: InverseConfig,
    pub trees: Vec<GoalTree>,
    /// Observed states kept per object for inverse planning.
    pub history: usize,
    /// Modes below this weight are not passed to the planner.
    pub mode_threshold: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            pem: None,
            perception: Perception::GroundTruth,
            prediction: PredictionMode::InversePlanning,
            seed: 0,
            planner: PlannerConfig::default(),
            inverse: InverseConfig::default(),
            trees: Vec::new(),
            history: 20,
            mode_threshold: 0.25,
        }
    }
}

/// Serializable summary of the configuration that produced a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub steps: usize,
    pub perception: Perception,
    pub prediction: PredictionMode,
    pub seed: u64,
    pub pem: Option<PemParams>,
    pub rules: Vec<String>,
    pub cycle_budget: Option<f64>,
    pub nlp_max_outer: usize,
    pub trees: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedPath {
    pub object: String,
    pub goal: String,
    pub weight: f64,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub ego: AgentState,
    pub ground_truth: Vec<ObjectObservation>,
    pub perceived: Vec<ObjectObservation>,
    pub posteriors: Vec<(String, GoalPosterior)>,
    pub predicted: Vec<PredictedPath>,
    pub source: PlanSource,
    /// Executed `(accel, steer)`.
    pub control: (f64, f64),
    pub cycle_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub config: ConfigEcho,
    pub dt: f64,
    pub v_ref: f64,
    pub corridor: RoadCorridor,
    pub ego_params: VehicleParams,
    pub initial_ego: AgentState,
    pub final_ego: AgentState,
    /// Ground-truth goal per scripted agent.
    pub goals: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub header: TraceHeader,
    pub records: Vec<StepRecord>,
}

/// Ground-truth states of every obstacle for steps `0..=steps`.
pub fn script_agents(scenario: &Scenario, steps: usize) -> Result<Vec<Vec<AgentState>>, SimError> {
    let dt = scenario.dt;
    let mut out = Vec::with_capacity(scenario.obstacles.len());
    for o in &scenario.obstacles {
        let s0 = o.trajectory[0];
        let states = match &o.policy {
            AgentPolicy::Replay => (0..=steps).map(|t| o.trajectory[t.min(o.trajectory.len() - 1)]).collect(),
            AgentPolicy::ConstantVelocity => {
                let mut s = AgentState {
                    accel: 0.0,
                    steer: 0.0,
                    ..s0
                };
                let mut v = vec![s];
                for _ in 0..steps {
                    s = bicycle_step(&s, 0.0, 0.0, 1.0, dt);
                    v.push(s);
                }
                v
            }
            AgentPolicy::Follow { route, speed } => {
                let goal = extract_goals(scenario, &s0).into_iter().find(|g| &g.id == route);
                let r = goal.and_then(|g| Route::new(scenario, &s0, &g)).ok_or_else(|| SimError::Route {
                    id: o.id.clone(),
                    route: route.clone(),
                })?;
                let prof = speed_profile(s0.speed, *speed, r.length(), steps, dt, &Default::default());
                r.states(&prof, VehicleParams::default().wheelbase, dt)
            }
        };
        out.push(states);
    }
    Ok(out)
}

fn predict_object(
    snapshot: &Scenario,
    obj: &ObjectObservation,
    history: &[AgentState],
    config: &SimConfig,
) -> (Option<GoalPosterior>, PredictionSet) {
    let n = snapshot.horizon_steps;
    let dt = snapshot.dt;
    let cv = || PredictionSet::constant_velocity(&obj.state, n, dt, &config.inverse);
    if config.prediction == PredictionMode::ConstantVelocity {
        return (None, cv());
    }
    let goals = extract_goals(snapshot, &obj.state);
    if goals.is_empty() {
        return (None, cv());
    }
    let posterior = match config.prediction {
        PredictionMode::Trees => {
            let raw = grit_infer(&config.trees, &tree_features(snapshot, &obj.state));
            let mut goals_p: Vec<(String, f64)> = goals
                .iter()
                .map(|g| (g.id.clone(), raw.probability(&g.id).unwrap_or(0.0)))
                .collect();
            let total: f64 = goals_p.iter().map(|g| g.1).sum();
            if total > 0.0 {
                goals_p.iter_mut().for_each(|g| g.1 /= total);
                GoalPosterior {
                    goals: goals_p,
                    underflow: false,
                }
            } else {
                GoalPosterior::uniform(&goals.iter().map(|g| g.id.clone()).collect::<Vec<_>>())
            }
        }
        _ => match goal_posterior(snapshot, history, &goals, None, &config.inverse) {
            Ok(p) => p,
            Err(_) => return (None, cv()),
        },
    };
    let set = predict_trajectories(snapshot, &obj.state, &goals, &posterior, n, &config.inverse);
    (Some(posterior), set)
}

/// Runs the closed loop for `config.steps` steps.
pub fn run_sim(scenario: &Scenario, config: &SimConfig, clock: &impl Clock) -> Result<SimTrace, SimError> {
    scenario.validate()?;
    if config.steps < 1 {
        return Err(SimError::Steps);
    }
    let pem = match (config.perception, &config.pem) {
        (Perception::Surrogate, None) => return Err(SimError::MissingPem),
        (Perception::Surrogate, Some(p)) => Some(p),
        _ => None,
    };
    if config.prediction == PredictionMode::Trees && config.trees.is_empty() {
        return Err(SimError::MissingTrees);
    }
    let gt = script_agents(scenario, config.steps)?;
    let ego_params = config.planner.ego;
    let b = scenario.bounds;
    let dt = scenario.dt;
    let mut ego = scenario.ego;
    let mut histories: BTreeMap<String, Vec<AgentState>> = BTreeMap::new();
    let mut records = Vec::with_capacity(config.steps);

    for t in 0..config.steps {
        let boxes: Vec<OrientedBox> = scenario
            .obstacles
            .iter()
            .zip(&gt)
            .map(|(o, s)| OrientedBox {
                center: s[t].position(),
                heading: s[t].heading,
                half_length: o.half_length,
                half_width: o.half_width,
            })
            .collect();
        let truth: Vec<ObjectObservation> = scenario
            .obstacles
            .iter()
            .zip(&gt)
            .zip(&boxes)
            .map(|((o, s), bx)| ObjectObservation {
                id: o.id.clone(),
                state: s[t],
                half_length: o.half_length,
                half_width: o.half_width,
                salient: salient_vars(&ego, bx, &boxes),
            })
            .collect();
        let perceived = match pem {
            Some(p) => apply_pem_seeded(&truth, p, config.seed, t as u64),
            None => truth.clone(),
        };

        let snapshot = scenario.with_ego(ego);
        let mut posteriors = Vec::new();
        let mut predicted = Vec::new();
        let mut preds = Vec::new();
        for obj in &perceived {
            let h = histories.entry(obj.id.clone()).or_default();
            h.push(obj.state);
            if h.len() > config.history.max(1) {
                h.remove(0);
            }
            let (post, set) = predict_object(&snapshot, obj, h, config);
            if let Some(p) = post {
                posteriors.push((obj.id.clone(), p));
            }
            let best = set.most_likely().map(|m| m.goal.clone());
            for m in &set.modes {
                predicted.push(PredictedPath {
                    object: obj.id.clone(),
                    goal: m.goal.clone(),
                    weight: m.weight,
                    points: m.states.iter().map(|s| (s.x, s.y)).collect(),
                });
                if m.weight >= config.mode_threshold || Some(&m.goal) == best.as_ref() {
                    preds.push(ObstaclePrediction {
                        id: format!("{}#{}", obj.id, m.goal),
                        half_length: obj.half_length,
                        half_width: obj.half_width,
                        states: m.states.clone(),
                    });
                }
            }
        }

        let (traj, source, cycle_time) = match plan_cycle(&snapshot, &preds, &config.planner, None, clock) {
            Ok(r) => (r.trajectory, r.source, r.diagnostics.cycle_time),
            Err(_) => (emergency_brake(&snapshot), PlanSource::EmergencyBrake, 0.0),
        };
        let next = traj.states.get(1).copied().unwrap_or(ego);
        let accel = next.accel.clamp(b.a_min, b.a_max).max(-ego.speed / dt);
        let steer = next.steer.clamp(-b.steer_max, b.steer_max);
        records.push(StepRecord {
            step: t,
            ego,
            ground_truth: truth,
            perceived,
            posteriors,
            predicted,
            source,
            control: (accel, steer),
            cycle_time,
        });
        ego = bicycle_step(&ego, accel, steer, ego_params.wheelbase, dt);
        ego.speed = ego.speed.max(0.0);
    }

    let goals = scenario
        .obstacles
        .iter()
        .filter_map(|o| match (&o.goal, &o.policy) {
            (Some(g), _) => Some((o.id.clone(), g.clone())),
            (None, AgentPolicy::Follow { route, .. }) => Some((o.id.clone(), route.clone())),
            _ => None,
        })
        .collect();
    Ok(SimTrace {
        header: TraceHeader {
            version: TRACE_VERSION,
            config: ConfigEcho {
                steps: config.steps,
                perception: config.perception,
                prediction: config.prediction,
                seed: config.seed,
                pem: config.pem.clone(),
                rules: config.planner.rules.iter().map(|r| format!("{r}")).collect(),
                cycle_budget: config.planner.cycle_budget,
                nlp_max_outer: config.planner.nlp_budget.max_outer,
                trees: config.trees.len(),
            },
            dt,
            v_ref: scenario.v_ref,
            corridor: scenario.corridor.clone(),
            ego_params,
            initial_ego: scenario.ego,
            final_ego: ego,
            goals,
        },
        records,
    })
}

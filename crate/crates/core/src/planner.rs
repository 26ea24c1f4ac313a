//! One receding-horizon planning cycle: MILP seed, NLP refinement, fallbacks.

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::milp_stage::{build_milp, extract_seed, solve_milp, MilpConfig, MilpOptions, MilpStatus};
use crate::nlp_stage::{build_nlp, solve_nlp, NlpBudget, NlpStatus, NlpWeights};
use crate::prelude::*;
use crate::rules::StlFormula;
use crate::world::{AgentState, ObstaclePrediction, Scenario, Trajectory, VehicleParams, WorldError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("invalid snapshot: {0}")]
    Snapshot(#[from] WorldError),
    #[error("prediction for {id} has {got} states, expected {expected}")]
    Horizon { id: String, expected: usize, got: usize },
    #[error("external seed: {0}")]
    Seed(WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlanSource {
    NlpConverged,
    MilpSeedFallback,
    EmergencyBrake,
}

impl PlanSource {
    pub const ALL: [PlanSource; 3] = [PlanSource::NlpConverged, PlanSource::MilpSeedFallback, PlanSource::EmergencyBrake];

    pub fn name(self) -> &'static str {
        match self {
            PlanSource::NlpConverged => "nlp_converged",
            PlanSource::MilpSeedFallback => "milp_seed_fallback",
            PlanSource::EmergencyBrake => "emergency_brake",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSummary {
    pub status: MilpStatus,
    pub has_incumbent: bool,
    pub objective: f64,
    pub gap: f64,
    pub nodes: usize,
    pub binaries: usize,
    pub solve_time: f64,
    /// Set when the problem could not be built.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlpSummary {
    pub status: NlpStatus,
    pub objective: f64,
    pub max_violation: f64,
    pub kkt_residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub solve_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    pub milp: Option<MilpSummary>,
    pub nlp: Option<NlpSummary>,
    pub external_seed: bool,
    pub nlp_error: Option<String>,
    pub cycle_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub trajectory: Trajectory,
    pub source: PlanSource,
    pub diagnostics: PlanDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub milp: MilpConfig,
    pub milp_options: MilpOptions,
    pub nlp_weights: NlpWeights,
    pub nlp_budget: NlpBudget,
    /// Per-cycle wall-time budget in seconds; half goes to the MILP, the NLP
    /// gets whatever is left.
    pub cycle_budget: Option<f64>,
    pub ego: VehicleParams,
    pub rules: Vec<StlFormula>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            milp: MilpConfig::default(),
            milp_options: MilpOptions::default(),
            nlp_weights: NlpWeights::default(),
            nlp_budget: NlpBudget::default(),
            cycle_budget: Some(0.1),
            ego: VehicleParams::default(),
            rules: Vec::new(),
        }
    }
}

/// Maximum-deceleration profile along the corridor at the current lateral
/// offset, steering relaxed toward zero within the rate limit.
pub fn emergency_brake(snapshot: &Scenario) -> Trajectory {
    let c = &snapshot.corridor;
    let b = &snapshot.bounds;
    let dt = snapshot.dt;
    let ego = snapshot.ego;
    let f = c.to_frenet(ego.position());
    let (mut s, mut v, mut steer) = (f.s, ego.speed.max(0.0), ego.steer);
    let mut states = vec![ego];
    for _ in 0..snapshot.horizon_steps {
        let vn = (v + dt * b.a_min).max(0.0);
        s += dt * v;
        let rate = b.steer_rate_max * dt;
        steer -= steer.clamp(-rate, rate);
        let p = c.point_at(s, f.n);
        states.push(AgentState {
            x: p.x,
            y: p.y,
            heading: c.heading(s),
            speed: vn,
            accel: (vn - v) / dt,
            steer,
        });
        v = vn;
    }
    Trajectory::with_derived_controls(states, dt)
}

/// Runs MILP (unless `external_seed` is given), then the NLP, degrading to
/// the seed or an emergency brake. Always yields a plan for a valid snapshot.
pub fn plan_cycle(
    snapshot: &Scenario,
    predictions: &[ObstaclePrediction],
    config: &PlannerConfig,
    external_seed: Option<&Trajectory>,
    clock: &impl Clock,
) -> Result<PlanResult, PlanError> {
    let t0 = clock.seconds();
    snapshot.validate()?;
    let n = snapshot.horizon_steps;
    for p in predictions {
        if p.states.len() != n + 1 {
            return Err(PlanError::Horizon {
                id: p.id.clone(),
                expected: n + 1,
                got: p.states.len(),
            });
        }
    }
    if let Some(s) = external_seed {
        s.validate(n).map_err(PlanError::Seed)?;
    }

    let mut diag = PlanDiagnostics {
        milp: None,
        nlp: None,
        external_seed: external_seed.is_some(),
        nlp_error: None,
        cycle_time: 0.0,
    };
    let mut seed: Option<Trajectory> = external_seed.cloned();
    let mut milp_seed = false;
    if seed.is_none() {
        let mut opts = config.milp_options;
        if let Some(b) = config.cycle_budget {
            let half = 0.5 * b;
            opts.time_limit = Some(opts.time_limit.map_or(half, |t| t.min(half)));
        }
        let built = build_milp(snapshot, predictions, &config.milp, &config.rules);
        match built {
            Ok(problem) => {
                let binaries = problem.num_binaries();
                match solve_milp(&problem, &opts, clock) {
                    Ok(out) => {
                        if out.has_incumbent() {
                            if let Ok(t) = extract_seed(&out, &problem, snapshot, config.ego.wheelbase) {
                                seed = Some(t);
                                milp_seed = true;
                            }
                        }
                        diag.milp = Some(MilpSummary {
                            status: out.status,
                            has_incumbent: out.has_incumbent(),
                            objective: out.objective,
                            gap: out.gap,
                            nodes: out.nodes,
                            binaries,
                            solve_time: out.solve_time,
                            error: None,
                        });
                    }
                    Err(e) => diag.milp = Some(failed_milp(format!("{e}"), binaries)),
                }
            }
            Err(e) => diag.milp = Some(failed_milp(format!("{e}"), 0)),
        }
    }

    let mut result: Option<(Trajectory, PlanSource)> = None;
    if let Some(seed) = &seed {
        let mut budget = config.nlp_budget;
        if let Some(b) = config.cycle_budget {
            let left = (b - (clock.seconds() - t0)).max(0.0);
            budget.time_cap = Some(budget.time_cap.map_or(left, |t| t.min(left)));
        }
        match build_nlp(snapshot, predictions, &config.nlp_weights, &config.ego) {
            Ok(problem) => match solve_nlp(&problem, seed, &budget, clock) {
                Ok(out) => {
                    if out.status == NlpStatus::Converged {
                        result = Some((problem.trajectory(&out.solution), PlanSource::NlpConverged));
                    }
                    diag.nlp = Some(NlpSummary {
                        status: out.status,
                        objective: out.objective,
                        max_violation: out.max_violation,
                        kkt_residual: out.kkt_residual,
                        outer_iterations: out.outer_iterations,
                        inner_iterations: out.inner_iterations,
                        solve_time: out.solve_time,
                    });
                }
                Err(e) => diag.nlp_error = Some(format!("{e}")),
            },
            Err(e) => diag.nlp_error = Some(format!("{e}")),
        }
    }
    let (trajectory, source) = match (result, seed) {
        (Some(r), _) => r,
        (None, Some(s)) if milp_seed => (s, PlanSource::MilpSeedFallback),
        _ => (emergency_brake(snapshot), PlanSource::EmergencyBrake),
    };
    diag.cycle_time = clock.seconds() - t0;
    Ok(PlanResult {
        trajectory,
        source,
        diagnostics: diag,
    })
}

fn failed_milp(error: String, binaries: usize) -> MilpSummary {
    MilpSummary {
        status: MilpStatus::Infeasible,
        has_incumbent: false,
        objective: f64::INFINITY,
        gap: f64::INFINITY,
        nodes: 0,
        binaries,
        solve_time: 0.0,
        error: Some(error),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FrozenClock;
    use crate::world::{RoadCorridor, Vec2};

    fn road(width: f64, speed: f64) -> Scenario {
        let c = RoadCorridor::straight(Vec2::new(0.0, 0.0), 0.0, 400.0, width).unwrap();
        let ego = AgentState {
            speed,
            ..Default::default()
        };
        Scenario::new(c, ego, 0.1, 20, 10.0).unwrap()
    }

    #[test]
    fn empty_road_is_straight_constant_speed() {
        let r = plan_cycle(&road(7.0, 10.0), &[], &PlannerConfig::default(), None, &FrozenClock).unwrap();
        assert_eq!(r.source, PlanSource::NlpConverged);
        assert_eq!(r.trajectory.states.len(), 21);
        for s in &r.trajectory.states {
            assert!(s.accel.abs() < 1e-4 && s.steer.abs() < 1e-4);
        }
    }

    #[test]
    fn zero_budget_falls_back_to_seed() {
        let mut cfg = PlannerConfig::default();
        cfg.nlp_budget.max_outer = 0;
        let r = plan_cycle(&road(7.0, 10.0), &[], &cfg, None, &FrozenClock).unwrap();
        assert_eq!(r.source, PlanSource::MilpSeedFallback);
        assert_eq!(r.diagnostics.nlp.as_ref().unwrap().status, NlpStatus::MaxIter);
    }

    #[test]
    fn blocked_corridor_brakes() {
        let sc = road(1.0, 10.0);
        let r = plan_cycle(&sc, &[], &PlannerConfig::default(), None, &FrozenClock).unwrap();
        assert_eq!(r.source, PlanSource::EmergencyBrake);
        let mut v = 10.0f64;
        for s in &r.trajectory.states[1..] {
            v = (v + 0.1 * sc.bounds.a_min).max(0.0);
            assert!((s.speed - v).abs() < 1e-12);
        }
    }
}

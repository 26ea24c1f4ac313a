use serde::{Deserialize, Serialize};

use crate::prelude::*;
use crate::world::{bicycle_step, AgentState, Scenario};

use super::route::{speed_profile, ProfileLimits, Route};
use super::{GoalHypothesis, GoalPosterior, PredictionError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseConfig {
    pub beta: f64,
    /// Steps of optimal completion appended after the observed prefix.
    pub completion_steps: usize,
    pub speed_weight: f64,
    pub jerk_weight: f64,
    pub limits: ProfileLimits,
    pub sigma0: f64,
    pub sigma1: f64,
    pub wheelbase: f64,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            completion_steps: 30,
            speed_weight: 1.0,
            jerk_weight: 0.5,
            limits: ProfileLimits::default(),
            sigma0: 0.2,
            sigma1: 0.3,
            wheelbase: 2.7,
        }
    }
}

/// Speed tracking plus jerk cost of a speed sequence sampled every `dt`.
pub fn profile_cost(speeds: &[f64], target: f64, dt: f64, config: &InverseConfig) -> f64 {
    let track: f64 = speeds.iter().skip(1).map(|v| (v - target) * (v - target)).sum();
    let acc: Vec<f64> = speeds.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    let jerk: f64 = acc.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum();
    config.speed_weight * track + config.jerk_weight * jerk
}

/// Posterior from per-goal cost gaps. Returns the prior with `underflow` set
/// when every likelihood is zero.
pub fn posterior_from_costs(
    ids: &[String],
    prior: &[f64],
    delta_costs: &[f64],
    beta: f64,
) -> Result<GoalPosterior, PredictionError> {
    check_prior(prior, ids.len())?;
    if !(beta > 0.0) {
        return Err(PredictionError::Beta);
    }
    let w: Vec<f64> = prior
        .iter()
        .zip(delta_costs)
        .map(|(p, dc)| p * libm::exp(-beta * dc))
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Ok(GoalPosterior {
            goals: ids.iter().cloned().zip(prior.iter().copied()).collect(),
            underflow: true,
        });
    }
    Ok(GoalPosterior {
        goals: ids.iter().cloned().zip(w.iter().map(|x| x / total)).collect(),
        underflow: false,
    })
}

fn check_prior(prior: &[f64], n: usize) -> Result<(), PredictionError> {
    if prior.len() != n {
        return Err(PredictionError::PriorLength {
            got: prior.len(),
            expected: n,
        });
    }
    let sum: f64 = prior.iter().sum();
    if prior.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(PredictionError::PriorNotNormalized);
    }
    Ok(())
}

/// Cost gap of each goal given the observed states (oldest first).
/// Unreachable goals get an infinite gap.
pub(crate) fn cost_gaps(
    scenario: &Scenario,
    observed: &[AgentState],
    goals: &[GoalHypothesis],
    config: &InverseConfig,
) -> Vec<f64> {
    let (Some(first), Some(last)) = (observed.first(), observed.last()) else {
        return vec![0.0; goals.len()];
    };
    let dt = scenario.dt;
    let m = observed.len() - 1;
    let h = config.completion_steps;
    goals
        .iter()
        .map(|g| {
            let (Some(full), Some(now)) = (Route::new(scenario, first, g), Route::new(scenario, last, g)) else {
                return f64::INFINITY;
            };
            let target = full.target_speed;
            let best: Vec<f64> = speed_profile(first.speed, target, full.length(), m + h, dt, &config.limits)
                .iter()
                .map(|e| e.1)
                .collect();
            let mut seen: Vec<f64> = observed.iter().map(|s| s.speed.max(0.0)).collect();
            let tail = speed_profile(last.speed, target, now.length(), h, dt, &config.limits);
            seen.extend(tail.iter().skip(1).map(|e| e.1));
            profile_cost(&seen, target, dt, config) - profile_cost(&best, target, dt, config)
        })
        .collect()
}

/// Bayesian inverse-planning posterior over `goals`. `prior` defaults to
/// uniform.
pub fn goal_posterior(
    scenario: &Scenario,
    observed: &[AgentState],
    goals: &[GoalHypothesis],
    prior: Option<&[f64]>,
    config: &InverseConfig,
) -> Result<GoalPosterior, PredictionError> {
    let ids: Vec<String> = goals.iter().map(|g| g.id.clone()).collect();
    let uniform = vec![1.0 / goals.len().max(1) as f64; goals.len()];
    let prior = prior.unwrap_or(&uniform);
    let gaps = cost_gaps(scenario, observed, goals, config);
    posterior_from_costs(&ids, prior, &gaps, config.beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedMode {
    pub goal: String,
    pub weight: f64,
    /// States for steps `0..=horizon`.
    pub states: Vec<AgentState>,
    /// Positional standard deviation per step, m.
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub modes: Vec<PredictedMode>,
    /// Goals with positive probability whose route could not be built.
    pub dropped: Vec<String>,
}

impl PredictionSet {
    /// Constant speed and heading, used when no goal is available.
    pub fn constant_velocity(agent: &AgentState, horizon: usize, dt: f64, config: &InverseConfig) -> Self {
        let mut s = AgentState {
            accel: 0.0,
            steer: 0.0,
            ..*agent
        };
        let mut states = vec![s];
        for _ in 0..horizon {
            s = bicycle_step(&s, 0.0, 0.0, config.wheelbase, dt);
            states.push(s);
        }
        Self {
            modes: vec![PredictedMode {
                goal: "cv".into(),
                weight: 1.0,
                states,
                sigma: sigmas(horizon, dt, config),
            }],
            dropped: Vec::new(),
        }
    }

    /// Highest-weight mode; ties go to the earlier one.
    pub fn most_likely(&self) -> Option<&PredictedMode> {
        let mut best: Option<&PredictedMode> = None;
        for m in &self.modes {
            if best.map_or(true, |b| m.weight > b.weight) {
                best = Some(m);
            }
        }
        best
    }

    pub fn is_flagged(&self) -> bool {
        !self.dropped.is_empty()
    }
}

fn sigmas(horizon: usize, dt: f64, config: &InverseConfig) -> Vec<f64> {
    (0..=horizon).map(|k| config.sigma0 + config.sigma1 * k as f64 * dt).collect()
}

/// One mode per goal with positive probability, following the goal route
/// with a trapezoidal speed profile. Falls back to constant velocity when no
/// mode survives.
pub fn predict_trajectories(
    scenario: &Scenario,
    agent: &AgentState,
    goals: &[GoalHypothesis],
    posterior: &GoalPosterior,
    horizon: usize,
    config: &InverseConfig,
) -> PredictionSet {
    let dt = scenario.dt;
    let mut modes = Vec::new();
    let mut dropped = Vec::new();
    for (id, p) in &posterior.goals {
        if !(*p > 0.0) {
            continue;
        }
        let route = goals.iter().find(|g| &g.id == id).and_then(|g| Route::new(scenario, agent, g));
        let Some(route) = route else {
            dropped.push(id.clone());
            continue;
        };
        let profile = speed_profile(agent.speed, route.target_speed, route.length(), horizon, dt, &config.limits);
        let mut states = route.states(&profile, config.wheelbase, dt);
        states[0] = *agent;
        modes.push(PredictedMode {
            goal: id.clone(),
            weight: *p,
            states,
            sigma: sigmas(horizon, dt, config),
        });
    }
    let total: f64 = modes.iter().map(|m| m.weight).sum();
    if modes.is_empty() || !(total > 0.0) {
        let mut cv = PredictionSet::constant_velocity(agent, horizon, dt, config);
        cv.dropped = dropped;
        return cv;
    }
    for m in &mut modes {
        m.weight /= total;
    }
    PredictionSet { modes, dropped }
}

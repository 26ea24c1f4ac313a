//! Goal recognition and trajectory prediction for other agents.
//!
//! Two interpretable predictors share the goal hypotheses extracted from the
//! road map: Bayesian inverse planning over analytic motion profiles, and
//! one-vs-rest decision trees that can be verified exhaustively.

mod grit;
mod inverse;
mod route;

use serde::{Deserialize, Serialize};

use crate::prelude::*;
use crate::world::{AgentState, GoalLocation, Scenario};

pub use grit::{
    grit_infer, grit_train, grit_verify, tree_features, GoalTree, TreeNode, TreeProperty, Verification, FEATURE_NAMES,
    NUM_FEATURES,
};
pub use inverse::{
    goal_posterior, posterior_from_costs, predict_trajectories, profile_cost, InverseConfig, PredictedMode,
    PredictionSet,
};
pub use route::{speed_profile, ProfileLimits, Route};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictionError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dataset needs at least two goals, found {0}")]
    TooFewClasses(usize),
    #[error("non-finite feature in sample {0}")]
    NonFinite(usize),
    #[error("feature vector has {got} entries, expected {expected}")]
    FeatureCount { got: usize, expected: usize },
    #[error("prior has {got} entries for {expected} goals")]
    PriorLength { got: usize, expected: usize },
    #[error("prior must be non-negative and sum to 1")]
    PriorNotNormalized,
    #[error("beta must be positive")]
    Beta,
    #[error("empty interval for feature {0}")]
    EmptyInterval(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalHypothesis {
    pub id: String,
    pub location: GoalLocation,
    pub label: String,
}

/// One labelled observation: features in schema order and the true goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSample {
    pub features: Vec<f64>,
    pub goal: String,
}

/// Probability per goal, in the order of the hypotheses it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalPosterior {
    pub goals: Vec<(String, f64)>,
    /// Set when every likelihood underflowed and the prior was returned.
    #[serde(default)]
    pub underflow: bool,
}

impl GoalPosterior {
    pub fn uniform(ids: &[String]) -> Self {
        let p = 1.0 / ids.len().max(1) as f64;
        Self {
            goals: ids.iter().map(|id| (id.clone(), p)).collect(),
            underflow: false,
        }
    }

    pub fn probability(&self, id: &str) -> Option<f64> {
        self.goals.iter().find(|(g, _)| g == id).map(|(_, p)| *p)
    }

    /// Most likely goal; ties go to the earlier entry.
    pub fn argmax(&self) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (g, p) in &self.goals {
            if best.map_or(true, |(_, bp)| *p > bp) {
                best = Some((g, *p));
            }
        }
        best.map(|(g, _)| g)
    }

    pub fn total(&self) -> f64 {
        self.goals.iter().map(|(_, p)| p).sum()
    }
}

/// Identifier of the corridor-end goal.
pub const END_GOAL: &str = "end";

/// Goals reachable by `agent`: the corridor end, exit branches whose fork is
/// still ahead, and declared station goals ahead. Sorted by id.
pub fn extract_goals(scenario: &Scenario, agent: &AgentState) -> Vec<GoalHypothesis> {
    let c = &scenario.corridor;
    let s = c.to_frenet(agent.position()).s;
    let mut out = Vec::new();
    if s < c.length() - 1e-6 {
        out.push(GoalHypothesis {
            id: END_GOAL.into(),
            location: GoalLocation::Station { s: c.length() },
            label: "corridor end".into(),
        });
    }
    for b in &scenario.branches {
        if b.fork_s > s {
            out.push(GoalHypothesis {
                id: b.id.clone(),
                location: GoalLocation::Branch { branch: b.id.clone() },
                label: format!("exit {}", b.id),
            });
        }
    }
    for g in &scenario.goals {
        if let GoalLocation::Station { s: gs } = g {
            let id = format!("s={gs}");
            if *gs > s && *gs < c.length() - 1e-6 && !out.iter().any(|h| h.id == id) {
                out.push(GoalHypothesis {
                    id,
                    location: g.clone(),
                    label: format!("station {gs}"),
                });
            }
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{ExitBranch, RoadCorridor, Vec2};

    fn scenario_with_exit() -> Scenario {
        let c = RoadCorridor::straight(Vec2::new(0.0, 0.0), 0.0, 200.0, 7.0).unwrap();
        let mut sc = Scenario::new(c, AgentState::default(), 0.1, 10, 10.0).unwrap();
        let path = RoadCorridor::new(vec![Vec2::new(80.0, 0.0), Vec2::new(100.0, -10.0), Vec2::new(120.0, -30.0)], 4.0)
            .unwrap();
        sc.branches.push(ExitBranch {
            id: "exit".into(),
            fork_s: 80.0,
            path,
            speed: Some(6.0),
        });
        sc
    }

    #[test]
    fn goals_ahead_of_agent() {
        let sc = scenario_with_exit();
        let a = AgentState {
            x: 10.0,
            ..Default::default()
        };
        let ids: Vec<String> = extract_goals(&sc, &a).into_iter().map(|g| g.id).collect();
        assert_eq!(ids, ["end", "exit"]);
        let past = AgentState {
            x: 90.0,
            ..Default::default()
        };
        assert_eq!(extract_goals(&sc, &past).len(), 1);
        let mut plain = sc.clone();
        plain.branches.clear();
        assert_eq!(extract_goals(&plain, &a).len(), 1);
    }

    #[test]
    fn posterior_helpers() {
        let p = GoalPosterior {
            goals: vec![("a".into(), 0.25), ("b".into(), 0.75)],
            underflow: false,
        };
        assert_eq!(p.argmax(), Some("b"));
        assert_eq!(p.probability("a"), Some(0.25));
        assert_eq!(p.total(), 1.0);
    }
}

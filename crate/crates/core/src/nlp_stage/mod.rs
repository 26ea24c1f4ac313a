//! Nonlinear refinement on the kinematic bicycle model.

mod problem;
mod solver;

pub use problem::{
    build_nlp, ellipse_axes, eval_constraints, eval_objective, max_violation, ConstraintEval, NlpObstacle, NlpProblem,
    NlpWeights, SparseJacobian, OBSTACLE_MARGIN,
};
pub use solver::{solve_from, solve_nlp, NlpBudget, NlpOutcome, NlpStatus, CONSTRAINT_TOL, KKT_TOL};

use crate::prelude::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NlpError {
    #[error("prediction for obstacle {id} has {got} states, expected {expected}")]
    HorizonMismatch { id: String, expected: usize, got: usize },
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
}

//! Desk-scale safe-by-design planning stack.
//!
//! The crate is `no_std` (with `alloc`) so the planning core can be embedded;
//! file formats, wall clocks and the command-line front end live in the
//! `drivestack` companion crate.
//!
//! Pipeline overview:
//!
//! * [`world`] carries the road corridor, agents and scenarios.
//! * [`milp_stage`] linearizes the planning problem in the road frame and
//!   solves it with branch and bound on top of a bounded simplex.
//! * [`nlp_stage`] refines the seed on the kinematic bicycle model with an
//!   augmented-Lagrangian solver.
//! * [`rules`] compiles a bounded temporal-logic fragment into MILP rows.
//! * [`prediction`] infers goals of other agents (inverse planning and
//!   decision trees with exhaustive verification).
//! * [`pem`] fits and applies a perception error model.
//! * [`planner`] and [`simulator`] close the loop.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod prelude;

pub mod clock;
pub mod linalg;
pub mod milp_stage;
pub mod nlp_stage;
pub mod pem;
pub mod planner;
pub mod prediction;
pub mod rng;
pub mod rules;
pub mod simulator;
pub mod world;

pub use world::{AgentState, Obstacle, RoadCorridor, Scenario, Trajectory, Vec2};

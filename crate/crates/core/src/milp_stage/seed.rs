//! Conversion of a MILP incumbent into a Cartesian warm start.

use super::{MilpError, MilpOutcome, MilpProblem};
use crate::prelude::*;
use crate::world::{normalize_angle, AgentState, Scenario, Trajectory};

/// Reconstructs an `N + 1` state trajectory from the road-frame incumbent.
///
/// Headings follow the velocity direction and fall back to the corridor
/// tangent below 0.1 m/s; steering angles invert the bicycle heading update.
pub fn extract_seed(
    outcome: &MilpOutcome,
    problem: &MilpProblem,
    scenario: &Scenario,
    wheelbase: f64,
) -> Result<Trajectory, MilpError> {
    let x = outcome.incumbent.as_ref().ok_or(MilpError::NoIncumbent)?;
    let lay = problem.layout.as_ref().ok_or(MilpError::NoLayout)?;
    let corridor = &scenario.corridor;
    let dt = lay.dt;
    let mut states: Vec<AgentState> = (0..=lay.steps)
        .map(|k| {
            let (s, n) = (x[lay.s[k]], x[lay.n[k]]);
            let p = corridor.point_at(s, n);
            let sc = s.clamp(0.0, corridor.length());
            let t = corridor.tangent(sc);
            let v = t * x[lay.vs[k]] + t.perp() * x[lay.vn[k]];
            let speed = v.norm();
            let heading = if speed < 0.1 { corridor.heading(sc) } else { v.angle() };
            AgentState {
                x: p.x,
                y: p.y,
                heading,
                speed,
                accel: 0.0,
                steer: 0.0,
            }
        })
        .collect();
    states[0].accel = scenario.ego.accel;
    states[0].steer = scenario.ego.steer;
    let steer_max = scenario.bounds.steer_max;
    for k in 0..lay.steps {
        let v = states[k].speed;
        let dtheta = normalize_angle(states[k + 1].heading - states[k].heading);
        let steer = if v > 0.1 {
            libm::atan(wheelbase * dtheta / (dt * v)).clamp(-steer_max, steer_max)
        } else {
            states[k].steer
        };
        states[k + 1].accel = (states[k + 1].speed - v) / dt;
        states[k + 1].steer = steer;
    }
    Ok(Trajectory::with_derived_controls(states, dt))
}

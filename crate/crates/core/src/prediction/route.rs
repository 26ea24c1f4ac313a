use crate::prelude::*;
use crate::world::{normalize_angle, AgentState, GoalLocation, RoadCorridor, Scenario, Vec2};

use super::{GoalHypothesis, END_GOAL};

/// Distance over which a lateral offset blends out after entering a branch.
const BRANCH_BLEND: f64 = 10.0;

/// Centerline path from an agent to one goal, offset by the agent's lateral
/// position on the main corridor.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub path: RoadCorridor,
    /// Distance along `path` where the branch starts, if any.
    pub fork_distance: Option<f64>,
    pub lateral: f64,
    pub target_speed: f64,
}

impl Route {
    /// `None` when the goal is unknown or no longer reachable.
    pub fn new(scenario: &Scenario, agent: &AgentState, goal: &GoalHypothesis) -> Option<Route> {
        let c = &scenario.corridor;
        let f = c.to_frenet(agent.position());
        let (end_s, branch) = match &goal.location {
            GoalLocation::Station { s } => (*s, None),
            GoalLocation::Branch { branch } => {
                let b = scenario.branch(branch)?;
                (b.fork_s, Some(b))
            }
        };
        if end_s <= f.s + 1e-6 || (goal.id == END_GOAL && f.s >= c.length() - 1e-6) {
            return None;
        }
        let mut pts = vec![c.point_at(f.s, 0.0)];
        for (p, s) in c.centerline().iter().zip(c.cumulative_arclength()) {
            if *s > f.s && *s < end_s {
                push_distinct(&mut pts, *p);
            }
        }
        push_distinct(&mut pts, c.point_at(end_s.min(c.length()), 0.0));
        let mut fork_distance = None;
        let mut target_speed = scenario.v_ref;
        if let Some(b) = branch {
            fork_distance = Some(polyline_length(&pts));
            for p in b.path.centerline() {
                push_distinct(&mut pts, *p);
            }
            target_speed = b.speed.unwrap_or(scenario.v_ref);
        }
        if pts.len() < 2 {
            return None;
        }
        let path = RoadCorridor::new(pts, c.width()).ok()?;
        Some(Route {
            path,
            fork_distance,
            lateral: f.n,
            target_speed,
        })
    }

    pub fn length(&self) -> f64 {
        self.path.length()
    }

    fn lateral_at(&self, d: f64) -> f64 {
        match self.fork_distance {
            Some(fd) if d > fd => self.lateral * (1.0 - (d - fd) / BRANCH_BLEND).max(0.0),
            _ => self.lateral,
        }
    }

    /// Position and heading after travelling `d` metres along the route.
    pub fn pose(&self, d: f64) -> (Vec2, f64) {
        let d = d.clamp(0.0, self.length());
        (self.path.point_at(d, self.lateral_at(d)), self.path.heading(d))
    }

    /// Agent states along the route for a speed profile.
    pub fn states(&self, profile: &[(f64, f64, f64)], wheelbase: f64, dt: f64) -> Vec<AgentState> {
        let mut out: Vec<AgentState> = Vec::with_capacity(profile.len());
        for &(d, v, a) in profile {
            let (p, h) = self.pose(d);
            let steer = match out.last() {
                Some(prev) if v > 0.1 => {
                    let dh = normalize_angle(h - prev.heading);
                    libm::atan(wheelbase * dh / (dt * v))
                }
                _ => 0.0,
            };
            out.push(AgentState {
                x: p.x,
                y: p.y,
                heading: h,
                speed: v,
                accel: a,
                steer,
            });
        }
        out
    }
}

fn push_distinct(pts: &mut Vec<Vec2>, p: Vec2) {
    if pts.last().map_or(true, |q| (*q - p).norm() > 1e-6) {
        pts.push(p);
    }
}

fn polyline_length(pts: &[Vec2]) -> f64 {
    pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Acceleration limits of a motion profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileLimits {
    pub accel: f64,
    /// Comfortable deceleration, positive.
    pub decel: f64,
    /// Hard deceleration used only to stop before the route end, positive.
    pub brake: f64,
}

impl Default for ProfileLimits {
    fn default() -> Self {
        Self {
            accel: 2.0,
            decel: 3.0,
            brake: 6.0,
        }
    }
}

/// Trapezoidal speed profile toward `target`, stopping at `length`.
///
/// Returns `(distance, speed, accel)` for steps `0..=steps`; the accel of
/// entry `k` is the one applied during step `k`, the last entry repeats it.
pub fn speed_profile(v0: f64, target: f64, length: f64, steps: usize, dt: f64, lim: &ProfileLimits) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut d = 0.0;
    let mut v = v0.max(0.0);
    for _ in 0..steps {
        let rem = (length - d).max(0.0);
        let mut vn = target.clamp(v - lim.decel * dt, v + lim.accel * dt);
        vn = vn.min(libm::sqrt(2.0 * lim.decel * rem)).max((v - lim.brake * dt).max(0.0));
        let mut dn = d + 0.5 * dt * (v + vn);
        if dn >= length {
            dn = length;
            vn = 0.0;
        }
        out.push((d, v, (vn - v) / dt));
        d = dn;
        v = vn;
    }
    let a_last = out.last().map_or(0.0, |e: &(f64, f64, f64)| e.2);
    out.push((d, v, a_last));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::ExitBranch;

    #[test]
    fn profile_reaches_target_and_respects_limits() {
        let lim = ProfileLimits::default();
        let p = speed_profile(4.0, 10.0, 1e6, 60, 0.1, &lim);
        assert!((p[60].1 - 10.0).abs() < 1e-12);
        assert!(p.iter().all(|e| e.2 <= lim.accel + 1e-12 && e.2 >= -lim.brake - 1e-12));
        let stop = speed_profile(10.0, 10.0, 30.0, 200, 0.1, &lim);
        assert!((stop[200].0 - 30.0).abs() < 1e-9);
        assert_eq!(stop[200].1, 0.0);
    }

    #[test]
    fn branch_route_passes_fork() {
        let c = RoadCorridor::straight(Vec2::new(0.0, 0.0), 0.0, 200.0, 7.0).unwrap();
        let mut sc = Scenario::new(c, AgentState::default(), 0.1, 10, 10.0).unwrap();
        let path = RoadCorridor::new(vec![Vec2::new(80.0, 0.0), Vec2::new(100.0, -20.0)], 4.0).unwrap();
        sc.branches.push(ExitBranch {
            id: "x".into(),
            fork_s: 80.0,
            path,
            speed: Some(5.0),
        });
        let agent = AgentState {
            x: 20.0,
            y: -1.5,
            ..Default::default()
        };
        let g = GoalHypothesis {
            id: "x".into(),
            location: GoalLocation::Branch { branch: "x".into() },
            label: String::new(),
        };
        let r = Route::new(&sc, &agent, &g).unwrap();
        assert!((r.fork_distance.unwrap() - 60.0).abs() < 1e-9);
        assert_eq!(r.target_speed, 5.0);
        let (p0, _) = r.pose(0.0);
        assert!((p0 - agent.position()).norm() < 1e-9);
        let (pe, _) = r.pose(r.length());
        assert!((pe - Vec2::new(100.0, -20.0)).norm() < 1e-9);
    }
}

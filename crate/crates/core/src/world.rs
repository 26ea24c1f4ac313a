//! Road corridor, agents, scenarios and trajectories.
//!
//! The corridor is a polyline centerline with constant width. Road-frame
//! (Frenet) coordinates `(s, n)` use normals that are interpolated linearly
//! between vertex normals along each segment, which makes the map
//! `(s, n) -> point` continuous across vertices and exactly invertible in
//! closed form (one quadratic per segment).

use core::f64::consts::PI;
use core::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prelude::*;

const COINCIDENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("centerline needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("consecutive centerline points {0} and {1} coincide")]
    CoincidentPoints(usize, usize),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("station {s} outside corridor [0, {length}]")]
    StationOutOfRange { s: f64, length: f64 },
}

fn invariant(msg: impl Into<String>) -> WorldError {
    WorldError::Invariant(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    /// Rotated by +90 degrees.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn from_angle(theta: f64) -> Vec2 {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = libm::remainder(theta, 2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Road-frame coordinates: arclength and signed lateral offset (left positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frenet {
    pub s: f64,
    pub n: f64,
}

/// Result of projecting a point onto the (conceptually extended) centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arclength; negative before the start and above `length` past the end.
    pub s: f64,
    pub n: f64,
    /// Gradient of `n` with respect to the projected point.
    pub grad_n: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CorridorParts", into = "CorridorParts")]
pub struct RoadCorridor {
    centerline: Vec<Vec2>,
    arclength: Vec<f64>,
    width: f64,
    seg_dir: Vec<Vec2>,
    seg_len: Vec<f64>,
    vertex_normal: Vec<Vec2>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorridorParts {
    centerline: Vec<Vec2>,
    width: f64,
}

impl TryFrom<CorridorParts> for RoadCorridor {
    type Error = WorldError;
    fn try_from(p: CorridorParts) -> Result<Self, WorldError> {
        RoadCorridor::new(p.centerline, p.width)
    }
}

impl From<RoadCorridor> for CorridorParts {
    fn from(c: RoadCorridor) -> Self {
        CorridorParts {
            centerline: c.centerline,
            width: c.width,
        }
    }
}

impl RoadCorridor {
    pub fn new(centerline: Vec<Vec2>, width: f64) -> Result<Self, WorldError> {
        if centerline.len() < 2 {
            return Err(WorldError::TooFewPoints(centerline.len()));
        }
        if centerline.iter().any(|p| !p.is_finite()) {
            return Err(WorldError::NonFinite("centerline".into()));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(invariant("width > 0"));
        }
        let mut arclength = Vec::with_capacity(centerline.len());
        let mut seg_dir = Vec::with_capacity(centerline.len() - 1);
        let mut seg_len = Vec::with_capacity(centerline.len() - 1);
        arclength.push(0.0);
        for (i, w) in centerline.windows(2).enumerate() {
            let d = w[1] - w[0];
            let len = d.norm();
            if len <= COINCIDENT_EPS {
                return Err(WorldError::CoincidentPoints(i, i + 1));
            }
            seg_dir.push(d * (1.0 / len));
            seg_len.push(len);
            arclength.push(arclength[i] + len);
        }
        let nseg = seg_dir.len();
        let mut vertex_normal = Vec::with_capacity(centerline.len());
        for v in 0..centerline.len() {
            let nrm = if v == 0 {
                seg_dir[0].perp()
            } else if v == nseg {
                seg_dir[nseg - 1].perp()
            } else {
                let avg = seg_dir[v - 1].perp() + seg_dir[v].perp();
                let len = avg.norm();
                if len < 1e-9 {
                    return Err(invariant("centerline must not reverse direction"));
                }
                avg * (1.0 / len)
            };
            vertex_normal.push(nrm);
        }
        Ok(Self {
            centerline,
            arclength,
            width,
            seg_dir,
            seg_len,
            vertex_normal,
        })
    }

    /// Straight corridor from `start` along `heading`.
    pub fn straight(start: Vec2, heading: f64, length: f64, width: f64) -> Result<Self, WorldError> {
        let end = start + Vec2::from_angle(heading) * length;
        Self::new(vec![start, end], width)
    }

    pub fn centerline(&self) -> &[Vec2] {
        &self.centerline
    }

    pub fn cumulative_arclength(&self) -> &[f64] {
        &self.arclength
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn length(&self) -> f64 {
        *self.arclength.last().unwrap_or(&0.0)
    }

    /// Returns the same corridor translated by `offset`.
    pub fn translated(&self, offset: Vec2) -> Self {
        let pts = self.centerline.iter().map(|&p| p + offset).collect();
        Self::new(pts, self.width).expect("translation preserves validity")
    }

    fn segment_at(&self, s: f64) -> usize {
        let nseg = self.seg_len.len();
        match self
            .arclength
            .binary_search_by(|a| a.partial_cmp(&s).unwrap_or(core::cmp::Ordering::Less))
        {
            Ok(i) => i.min(nseg - 1),
            Err(i) => i.saturating_sub(1).min(nseg - 1),
        }
    }

    /// Interpolated (unnormalized) normal on segment `i` at parameter `t`.
    fn normal_at(&self, i: usize, t: f64) -> Vec2 {
        self.vertex_normal[i] * (1.0 - t) + self.vertex_normal[i + 1] * t
    }

    /// Unit left normal at station `s` (clamped to the corridor).
    pub fn normal(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let t = ((s - self.arclength[i]) / self.seg_len[i]).clamp(0.0, 1.0);
        let n = self.normal_at(i, t);
        n * (1.0 / n.norm())
    }

    /// Unit tangent at station `s` (clamped to the corridor).
    pub fn tangent(&self, s: f64) -> Vec2 {
        let n = self.normal(s);
        Vec2::new(n.y, -n.x)
    }

    pub fn heading(&self, s: f64) -> f64 {
        self.tangent(s).angle()
    }

    /// Converts road-frame coordinates back to a point.
    pub fn from_frenet(&self, s: f64, n: f64) -> Result<Vec2, WorldError> {
        let len = self.length();
        if !(s.is_finite() && n.is_finite()) {
            return Err(WorldError::NonFinite("frenet coordinates".into()));
        }
        if s < -1e-9 || s > len + 1e-9 {
            return Err(WorldError::StationOutOfRange { s, length: len });
        }
        Ok(self.point_at(s, n))
    }

    /// Like [`from_frenet`](Self::from_frenet) but extends the first and last
    /// segments as straight lines outside `[0, length]`.
    pub fn point_at(&self, s: f64, n: f64) -> Vec2 {
        let len = self.length();
        let last = self.centerline.len() - 1;
        if s < 0.0 {
            let d = self.seg_dir[0];
            return self.centerline[0] + d * s + d.perp() * n;
        }
        if s > len {
            let d = self.seg_dir[last - 1];
            return self.centerline[last] + d * (s - len) + d.perp() * n;
        }
        let i = self.segment_at(s);
        let t = ((s - self.arclength[i]) / self.seg_len[i]).clamp(0.0, 1.0);
        let c = self.centerline[i] + (self.centerline[i + 1] - self.centerline[i]) * t;
        let nrm = self.normal_at(i, t);
        c + nrm * (n / nrm.norm())
    }

    /// Road-frame coordinates of `p`; `s` is clamped to `[0, length]`.
    pub fn to_frenet(&self, p: Vec2) -> Frenet {
        let pr = self.project(p);
        Frenet {
            s: pr.s.clamp(0.0, self.length()),
            n: pr.n,
        }
    }

    /// Projection onto the centerline extended by straight rays at both ends.
    ///
    /// Each segment is solved analytically; among all valid feet the one with
    /// the smallest `|n|` wins (ties go to the lower station). Points that no
    /// normal line reaches fall back to the closest vertex.
    pub fn project(&self, p: Vec2) -> Projection {
        let mut best: Option<(f64, f64, Vec2)> = None;
        let mut consider = |s: f64, n: f64, g: Vec2| match best {
            Some((bs, bn, _)) if n.abs() > bn.abs() || (n.abs() == bn.abs() && s >= bs) => {}
            _ => best = Some((s, n, g)),
        };

        let nseg = self.seg_len.len();
        let first = self.seg_dir[0];
        let lead = (p - self.centerline[0]).dot(first);
        if lead < 0.0 {
            consider(lead, first.cross(p - self.centerline[0]), first.perp());
        }
        let lastd = self.seg_dir[nseg - 1];
        let tail = (p - self.centerline[nseg]).dot(lastd);
        if tail > 0.0 {
            consider(
                self.length() + tail,
                lastd.cross(p - self.centerline[nseg]),
                lastd.perp(),
            );
        }

        for i in 0..nseg {
            let a = self.centerline[i];
            let e = self.centerline[i + 1] - a;
            let na = self.vertex_normal[i];
            let dn = self.vertex_normal[i + 1] - na;
            let d = p - a;
            // cross(d - t e, na + t dn) = 0, quadratic in t
            let c0 = d.cross(na);
            let c1 = d.cross(dn) - e.cross(na);
            let c2 = -e.cross(dn);
            let mut roots = [f64::NAN; 2];
            if c2.abs() <= 1e-12 * (c1.abs() + c0.abs()).max(1e-300) {
                if c1 != 0.0 {
                    roots[0] = -c0 / c1;
                }
            } else {
                let disc = c1 * c1 - 4.0 * c2 * c0;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    let q = -0.5 * (c1 + if c1 >= 0.0 { sq } else { -sq });
                    roots[0] = q / c2;
                    if q != 0.0 {
                        roots[1] = c0 / q;
                    }
                }
            }
            for &t in roots.iter() {
                if !(t.is_finite() && (-1e-12..=1.0 + 1e-12).contains(&t)) {
                    continue;
                }
                let t = t.clamp(0.0, 1.0);
                let c = a + e * t;
                let nvec = na + dn * t;
                let nlen = nvec.norm();
                let nh = nvec * (1.0 / nlen);
                let off = p - c;
                let n = off.dot(nh);
                // implicit differentiation of the foot parameter t(p)
                let f_t = (-e).cross(nvec) + off.cross(dn);
                let grad = if f_t.abs() > 1e-12 {
                    let f_p = Vec2::new(nvec.y, -nvec.x);
                    let dt_dp = f_p * (-1.0 / f_t);
                    nh - dt_dp * e.dot(nh)
                } else {
                    nh
                };
                consider(self.arclength[i] + t * self.seg_len[i], n, grad);
            }
        }

        match best {
            Some((s, n, grad_n)) => Projection { s, n, grad_n },
            None => {
                let (v, dist) = self
                    .centerline
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| (i, (p - c).norm()))
                    .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
                let off = p - self.centerline[v];
                let tan = Vec2::new(self.vertex_normal[v].y, -self.vertex_normal[v].x);
                let sign = if tan.cross(off) >= 0.0 { 1.0 } else { -1.0 };
                let grad = if dist > 0.0 { off * (sign / dist) } else { self.vertex_normal[v] };
                Projection {
                    s: self.arclength[v],
                    n: sign * dist,
                    grad_n: grad,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    #[serde(default)]
    pub accel: f64,
    #[serde(default)]
    pub steer: f64,
}

impl AgentState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.heading, self.speed, self.accel, self.steer]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Ego footprint and wheelbase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub half_length: f64,
    pub half_width: f64,
    pub wheelbase: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            half_length: 2.25,
            half_width: 0.9,
            wheelbase: 2.7,
        }
    }
}

/// Explicit-Euler kinematic bicycle step. `accel` and `steer` are held over
/// the step; the returned state records them as its actuator values.
pub fn bicycle_step(s: &AgentState, accel: f64, steer: f64, wheelbase: f64, dt: f64) -> AgentState {
    AgentState {
        x: s.x + dt * s.speed * s.heading.cos(),
        y: s.y + dt * s.speed * s.heading.sin(),
        heading: s.heading + dt * s.speed * steer.tan() / wheelbase,
        speed: s.speed + dt * accel,
        accel,
        steer,
    }
}

/// How a scripted agent moves during simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentPolicy {
    /// Replays the listed trajectory, holding the last state.
    Replay,
    /// Constant speed and heading from the first listed state.
    ConstantVelocity,
    /// Follows the route of a goal with a trapezoidal speed profile.
    Follow { route: String, speed: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ObstacleParts")]
pub struct Obstacle {
    pub id: String,
    pub half_length: f64,
    pub half_width: f64,
    pub trajectory: Vec<AgentState>,
    pub policy: AgentPolicy,
    /// Ground-truth goal of the agent, used for prediction accuracy.
    pub goal: Option<String>,
}

impl Obstacle {
    /// Static or trajectory-replaying obstacle with the default policy.
    pub fn new(id: impl Into<String>, half_length: f64, half_width: f64, trajectory: Vec<AgentState>) -> Self {
        let policy = if trajectory.len() > 1 {
            AgentPolicy::Replay
        } else {
            AgentPolicy::ConstantVelocity
        };
        Self {
            id: id.into(),
            half_length,
            half_width,
            trajectory,
            policy,
            goal: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleParts {
    id: String,
    half_length: f64,
    half_width: f64,
    trajectory: Vec<AgentState>,
    #[serde(default)]
    policy: Option<AgentPolicy>,
    #[serde(default)]
    goal: Option<String>,
}

impl From<ObstacleParts> for Obstacle {
    fn from(p: ObstacleParts) -> Self {
        let mut o = Obstacle::new(p.id, p.half_length, p.half_width, p.trajectory);
        if let Some(policy) = p.policy {
            o.policy = policy;
        }
        o.goal = p.goal;
        o
    }
}

/// A side road leaving the main corridor at `fork_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitBranch {
    pub id: String,
    pub fork_s: f64,
    pub path: RoadCorridor,
    /// Target speed on the branch; the scenario's `v_ref` when absent.
    pub speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoalLocation {
    Station { s: f64 },
    Branch { branch: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub v_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub steer_max: f64,
    pub steer_rate_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            v_max: 20.0,
            a_min: -6.0,
            a_max: 3.0,
            steer_max: 0.5,
            steer_rate_max: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub corridor: RoadCorridor,
    #[serde(default)]
    pub branches: Vec<ExitBranch>,
    pub ego: AgentState,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub goals: Vec<GoalLocation>,
    pub dt: f64,
    pub horizon_steps: usize,
    pub v_ref: f64,
    #[serde(default)]
    pub bounds: Bounds,
}

impl Scenario {
    /// Minimal scenario on `corridor` with default bounds and no agents.
    pub fn new(corridor: RoadCorridor, ego: AgentState, dt: f64, horizon_steps: usize, v_ref: f64) -> Result<Self, WorldError> {
        let s = Self {
            corridor,
            branches: Vec::new(),
            ego,
            obstacles: Vec::new(),
            goals: Vec::new(),
            dt,
            horizon_steps,
            v_ref,
            bounds: Bounds::default(),
        };
        s.validate()?;
        Ok(s)
    }

    /// Checks every invariant; the first violation is returned by name.
    pub fn validate(&self) -> Result<(), WorldError> {
        let b = &self.bounds;
        for (name, v) in [
            ("dt", self.dt),
            ("v_ref", self.v_ref),
            ("bounds.v_max", b.v_max),
            ("bounds.a_min", b.a_min),
            ("bounds.a_max", b.a_max),
            ("bounds.steer_max", b.steer_max),
            ("bounds.steer_rate_max", b.steer_rate_max),
        ] {
            if !v.is_finite() {
                return Err(WorldError::NonFinite(name.into()));
            }
        }
        if self.dt <= 0.0 {
            return Err(invariant("dt > 0"));
        }
        if self.horizon_steps < 1 {
            return Err(invariant("horizon_steps >= 1"));
        }
        if !(self.v_ref > 0.0 && self.v_ref <= b.v_max) {
            return Err(invariant("0 < v_ref <= v_max"));
        }
        if !(b.a_min < 0.0 && b.a_max > 0.0) {
            return Err(invariant("a_min < 0 < a_max"));
        }
        if b.steer_max <= 0.0 || b.steer_rate_max <= 0.0 {
            return Err(invariant("steer_max > 0 and steer_rate_max > 0"));
        }
        check_agent("ego", &self.ego, b)?;
        let mut ids = BTreeSet::new();
        for o in &self.obstacles {
            if !ids.insert(o.id.as_str()) {
                return Err(invariant(format!("obstacle ids unique ({})", o.id)));
            }
            if !(o.half_length > 0.0 && o.half_width > 0.0) {
                return Err(invariant(format!("obstacle {}: half_length, half_width > 0", o.id)));
            }
            if o.trajectory.is_empty() {
                return Err(invariant(format!("obstacle {}: trajectory non-empty", o.id)));
            }
            for st in &o.trajectory {
                if !st.is_finite() {
                    return Err(WorldError::NonFinite(format!("obstacle {} trajectory", o.id)));
                }
                if st.speed < 0.0 {
                    return Err(invariant(format!("obstacle {}: speed >= 0", o.id)));
                }
            }
            if let AgentPolicy::Follow { route, speed } = &o.policy {
                if !(speed.is_finite() && *speed >= 0.0) {
                    return Err(invariant(format!("obstacle {}: follow speed >= 0", o.id)));
                }
                if route != "end" && !self.branches.iter().any(|br| &br.id == route) {
                    return Err(invariant(format!("obstacle {}: route {} names a branch", o.id, route)));
                }
            }
        }
        let mut bids = BTreeSet::new();
        for br in &self.branches {
            if !bids.insert(br.id.as_str()) || br.id == "end" {
                return Err(invariant(format!("branch ids unique and not 'end' ({})", br.id)));
            }
            if !(br.fork_s >= 0.0 && br.fork_s <= self.corridor.length()) {
                return Err(invariant(format!("branch {}: 0 <= fork_s <= corridor length", br.id)));
            }
            if let Some(v) = br.speed {
                if !(v > 0.0 && v <= b.v_max) {
                    return Err(invariant(format!("branch {}: 0 < speed <= v_max", br.id)));
                }
            }
        }
        for g in &self.goals {
            match g {
                GoalLocation::Station { s } => {
                    if !(*s >= 0.0 && *s <= self.corridor.length()) {
                        return Err(invariant("goal station within corridor"));
                    }
                }
                GoalLocation::Branch { branch } => {
                    if !self.branches.iter().any(|br| &br.id == branch) {
                        return Err(invariant(format!("goal branch {branch} exists")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn branch(&self, id: &str) -> Option<&ExitBranch> {
        self.branches.iter().find(|b| b.id == id)
    }

    /// Copy with a new ego state (the corridor and agents are shared values).
    pub fn with_ego(&self, ego: AgentState) -> Self {
        Self { ego, ..self.clone() }
    }

    /// Every coordinate shifted by `offset`.
    pub fn translated(&self, offset: Vec2) -> Self {
        let mv = |s: &AgentState| AgentState {
            x: s.x + offset.x,
            y: s.y + offset.y,
            ..*s
        };
        Self {
            corridor: self.corridor.translated(offset),
            branches: self
                .branches
                .iter()
                .map(|b| ExitBranch {
                    path: b.path.translated(offset),
                    ..b.clone()
                })
                .collect(),
            ego: mv(&self.ego),
            obstacles: self
                .obstacles
                .iter()
                .map(|o| Obstacle {
                    trajectory: o.trajectory.iter().map(mv).collect(),
                    ..o.clone()
                })
                .collect(),
            ..self.clone()
        }
    }
}

fn check_agent(name: &str, a: &AgentState, b: &Bounds) -> Result<(), WorldError> {
    if !a.is_finite() {
        return Err(WorldError::NonFinite(name.into()));
    }
    if a.speed < 0.0 {
        return Err(invariant(format!("{name}: speed >= 0")));
    }
    if a.steer.abs() > b.steer_max {
        return Err(invariant(format!("{name}: |steer| <= steer_max")));
    }
    if a.heading <= -PI || a.heading > PI {
        return Err(invariant(format!("{name}: heading in (-pi, pi]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    #[default]
    Cartesian,
    Frenet,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub accel: f64,
    pub steer_rate: f64,
}

/// `states[k + 1]` is reached from `states[k]` by applying
/// `(controls[k].accel, states[k + 1].steer)`; the steering angle of each state
/// is the one used to reach it, so `steer_rate` is the per-step difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<AgentState>,
    pub controls: Vec<Control>,
    pub frame: Frame,
}

impl Trajectory {
    /// Number of steps `N` (one less than the number of states).
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn validate(&self, horizon_steps: usize) -> Result<(), WorldError> {
        if self.states.len() != horizon_steps + 1 || self.controls.len() != horizon_steps {
            return Err(invariant(format!(
                "trajectory lengths N+1 / N for N = {horizon_steps} (got {} / {})",
                self.states.len(),
                self.controls.len()
            )));
        }
        if !self.states.iter().all(AgentState::is_finite)
            || !self.controls.iter().all(|c| c.accel.is_finite() && c.steer_rate.is_finite())
        {
            return Err(WorldError::NonFinite("trajectory".into()));
        }
        Ok(())
    }

    /// Rebuilds the control list from consecutive states.
    pub fn with_derived_controls(states: Vec<AgentState>, dt: f64) -> Self {
        let controls = states
            .windows(2)
            .map(|w| Control {
                accel: w[1].accel,
                steer_rate: (w[1].steer - w[0].steer) / dt,
            })
            .collect();
        Self {
            states,
            controls,
            frame: Frame::Cartesian,
        }
    }
}

/// Oriented rectangle footprint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedBox {
    pub fn corners(&self) -> [Vec2; 4] {
        let f = Vec2::from_angle(self.heading);
        let l = f.perp();
        let (a, b) = (f * self.half_length, l * self.half_width);
        [
            self.center + a + b,
            self.center - a + b,
            self.center - a - b,
            self.center + a - b,
        ]
    }

    /// Separating-axis overlap test (touching counts as overlap).
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let ca = self.corners();
        let cb = other.corners();
        let axes = [
            Vec2::from_angle(self.heading),
            Vec2::from_angle(self.heading).perp(),
            Vec2::from_angle(other.heading),
            Vec2::from_angle(other.heading).perp(),
        ];
        for ax in axes {
            let (amin, amax) = extent(&ca, ax);
            let (bmin, bmax) = extent(&cb, ax);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
        true
    }

    /// Euclidean distance between the two rectangles (0 when overlapping).
    pub fn distance(&self, other: &OrientedBox) -> f64 {
        if self.overlaps(other) {
            return 0.0;
        }
        let ca = self.corners();
        let cb = other.corners();
        let mut best = f64::INFINITY;
        for i in 0..4 {
            let (a0, a1) = (ca[i], ca[(i + 1) % 4]);
            for j in 0..4 {
                let (b0, b1) = (cb[j], cb[(j + 1) % 4]);
                best = best
                    .min(point_segment_distance(a0, b0, b1))
                    .min(point_segment_distance(a1, b0, b1))
                    .min(point_segment_distance(b0, a0, a1))
                    .min(point_segment_distance(b1, a0, a1));
            }
        }
        best
    }
}

/// Predicted footprint of one obstacle for steps `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstaclePrediction {
    pub id: String,
    pub half_length: f64,
    pub half_width: f64,
    pub states: Vec<AgentState>,
}

impl ObstaclePrediction {
    pub fn footprint(&self, k: usize) -> OrientedBox {
        let s = &self.states[k];
        OrientedBox {
            center: s.position(),
            heading: s.heading,
            half_length: self.half_length,
            half_width: self.half_width,
        }
    }
}

fn extent(c: &[Vec2; 4], ax: Vec2) -> (f64, f64) {
    c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p.dot(ax);
        (lo.min(d), hi.max(d))
    })
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let e = b - a;
    let l2 = e.dot(e);
    let t = if l2 > 0.0 { ((p - a).dot(e) / l2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + e * t)).norm()
}

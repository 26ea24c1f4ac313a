use serde::{Deserialize, Serialize};

use super::NlpError;
use crate::prelude::*;
use crate::world::{Bounds, ObstaclePrediction, RoadCorridor, Scenario, Vec2, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlpWeights {
    pub progress: f64,
    pub accel: f64,
    pub jerk_accel: f64,
    pub jerk_steer: f64,
    pub lateral: f64,
}

impl Default for NlpWeights {
    fn default() -> Self {
        Self {
            progress: 1.0,
            accel: 0.1,
            jerk_accel: 0.5,
            jerk_steer: 5.0,
            lateral: 0.1,
        }
    }
}

/// Ellipse around one predicted obstacle, per step `1..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlpObstacle {
    pub id: String,
    /// `(x, y, heading)` of the obstacle center for steps `1..=N`.
    pub poses: Vec<(f64, f64, f64)>,
    pub ra: f64,
    pub rb: f64,
}

/// Decision vector: states `(x, y, heading, speed)` for `k = 0..=N`, then
/// controls `(accel, steer)` for `k = 0..N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlpProblem {
    pub steps: usize,
    pub dt: f64,
    pub wheelbase: f64,
    pub ego: VehicleParams,
    pub weights: NlpWeights,
    pub v_ref: f64,
    pub bounds: Bounds,
    /// Pinned initial state `(x, y, heading, speed)`.
    pub initial: [f64; 4],
    /// Steering angle before the horizon, for the first rate bound.
    pub initial_steer: f64,
    pub initial_accel: f64,
    pub corridor: RoadCorridor,
    pub lateral_limit: f64,
    pub obstacles: Vec<NlpObstacle>,
}

/// Row-wise sparse Jacobian.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseJacobian {
    pub cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseJacobian {
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut d = vec![0.0; self.cols];
                for &(j, v) in r {
                    d[j] += v;
                }
                d
            })
            .collect()
    }
}

/// Constraint values (equalities first, then `g >= 0` inequalities).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintEval {
    pub values: Vec<f64>,
    pub jacobian: SparseJacobian,
    pub num_eq: usize,
}

pub const OBSTACLE_MARGIN: f64 = 0.5;

/// Ellipse semi-axes that enclose the Minkowski sum of two aligned
/// rectangles, plus a margin.
pub fn ellipse_axes(obstacle: (f64, f64), ego: &VehicleParams) -> (f64, f64) {
    let sq2 = core::f64::consts::SQRT_2;
    (
        sq2 * (obstacle.0 + ego.half_length) + OBSTACLE_MARGIN,
        sq2 * (obstacle.1 + ego.half_width) + OBSTACLE_MARGIN,
    )
}

pub fn build_nlp(
    scenario: &Scenario,
    predictions: &[ObstaclePrediction],
    weights: &NlpWeights,
    ego: &VehicleParams,
) -> Result<NlpProblem, NlpError> {
    let n = scenario.horizon_steps;
    if weights.progress < 0.0
        || weights.accel < 0.0
        || weights.jerk_accel < 0.0
        || weights.jerk_steer < 0.0
        || weights.lateral < 0.0
    {
        return Err(NlpError::Invalid("weights >= 0".into()));
    }
    if !(ego.wheelbase > 0.0) {
        return Err(NlpError::Invalid("wheelbase > 0".into()));
    }
    let mut obstacles = Vec::with_capacity(predictions.len());
    for p in predictions {
        if p.states.len() != n + 1 {
            return Err(NlpError::HorizonMismatch {
                id: p.id.clone(),
                expected: n + 1,
                got: p.states.len(),
            });
        }
        let (ra, rb) = ellipse_axes((p.half_length, p.half_width), ego);
        obstacles.push(NlpObstacle {
            id: p.id.clone(),
            poses: p.states[1..].iter().map(|s| (s.x, s.y, s.heading)).collect(),
            ra,
            rb,
        });
    }
    let e = &scenario.ego;
    Ok(NlpProblem {
        steps: n,
        dt: scenario.dt,
        wheelbase: ego.wheelbase,
        ego: *ego,
        weights: *weights,
        v_ref: scenario.v_ref,
        bounds: scenario.bounds,
        initial: [e.x, e.y, e.heading, e.speed],
        initial_steer: e.steer,
        initial_accel: e.accel,
        corridor: scenario.corridor.clone(),
        lateral_limit: scenario.corridor.width() / 2.0 - ego.half_width,
        obstacles,
    })
}

impl NlpProblem {
    pub fn num_vars(&self) -> usize {
        4 * (self.steps + 1) + 2 * self.steps
    }

    pub fn state(&self, k: usize) -> usize {
        4 * k
    }

    pub fn control(&self, k: usize) -> usize {
        4 * (self.steps + 1) + 2 * k
    }

    pub fn num_eq(&self) -> usize {
        4 * self.steps
    }

    pub fn num_ineq(&self) -> usize {
        4 * self.steps + 6 * self.steps + self.obstacles.len() * self.steps
    }

    fn check(&self, z: &[f64]) -> Result<(), NlpError> {
        if z.len() != self.num_vars() {
            return Err(NlpError::Invalid(format!("decision vector length {} != {}", z.len(), self.num_vars())));
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(NlpError::NonFinite(i));
        }
        Ok(())
    }

    /// Lateral offset and its gradient at state `k`.
    pub fn lateral(&self, z: &[f64], k: usize) -> (f64, Vec2) {
        let i = self.state(k);
        let pr = self.corridor.project(Vec2::new(z[i], z[i + 1]));
        (pr.n, pr.grad_n)
    }

    /// Hessian of the lateral offset by central differences of its gradient.
    pub fn lateral_hessian(&self, z: &[f64], k: usize) -> [[f64; 2]; 2] {
        let i = self.state(k);
        let p = Vec2::new(z[i], z[i + 1]);
        let h = 1e-6;
        let g = |q: Vec2| self.corridor.project(q).grad_n;
        let gx = (g(p + Vec2::new(h, 0.0)) - g(p - Vec2::new(h, 0.0))) * (0.5 / h);
        let gy = (g(p + Vec2::new(0.0, h)) - g(p - Vec2::new(0.0, h))) * (0.5 / h);
        let off = 0.5 * (gx.y + gy.x);
        [[gx.x, off], [off, gy.y]]
    }

    /// Decision vector for a pinned initial state and a state/control rollout.
    pub fn pack(&self, states: &[[f64; 4]], controls: &[[f64; 2]]) -> Vec<f64> {
        let mut z = vec![0.0; self.num_vars()];
        for (k, s) in states.iter().enumerate().take(self.steps + 1) {
            z[self.state(k)..self.state(k) + 4].copy_from_slice(s);
        }
        for (k, c) in controls.iter().enumerate().take(self.steps) {
            z[self.control(k)..self.control(k) + 2].copy_from_slice(c);
        }
        z
    }
}

pub fn eval_objective(problem: &NlpProblem, z: &[f64]) -> Result<(f64, Vec<f64>), NlpError> {
    problem.check(z)?;
    let w = &problem.weights;
    let n = problem.steps;
    let mut f = 0.0;
    let mut g = vec![0.0; z.len()];
    for k in 1..=n {
        let iv = problem.state(k) + 3;
        let dv = z[iv] - problem.v_ref;
        f += w.progress * dv * dv;
        g[iv] += 2.0 * w.progress * dv;
        if w.lateral != 0.0 {
            let (nl, gn) = problem.lateral(z, k);
            let i = problem.state(k);
            f += w.lateral * nl * nl;
            g[i] += 2.0 * w.lateral * nl * gn.x;
            g[i + 1] += 2.0 * w.lateral * nl * gn.y;
        }
    }
    for k in 0..n {
        let ia = problem.control(k);
        f += w.accel * z[ia] * z[ia];
        g[ia] += 2.0 * w.accel * z[ia];
        if k + 1 < n {
            let ib = problem.control(k + 1);
            let da = z[ib] - z[ia];
            let ds = z[ib + 1] - z[ia + 1];
            f += w.jerk_accel * da * da + w.jerk_steer * ds * ds;
            g[ib] += 2.0 * w.jerk_accel * da;
            g[ia] -= 2.0 * w.jerk_accel * da;
            g[ib + 1] += 2.0 * w.jerk_steer * ds;
            g[ia + 1] -= 2.0 * w.jerk_steer * ds;
        }
    }
    Ok((f, g))
}

pub fn eval_constraints(problem: &NlpProblem, z: &[f64]) -> Result<ConstraintEval, NlpError> {
    problem.check(z)?;
    let n = problem.steps;
    let dt = problem.dt;
    let l = problem.wheelbase;
    let b = &problem.bounds;
    let mut values = Vec::with_capacity(problem.num_eq() + problem.num_ineq());
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(values.capacity());

    for k in 0..n {
        let i = problem.state(k);
        let j = problem.state(k + 1);
        let c = problem.control(k);
        let (th, v) = (z[i + 2], z[i + 3]);
        let (a, d) = (z[c], z[c + 1]);
        let (ct, st) = (th.cos(), th.sin());
        let td = d.tan();
        let sec2 = 1.0 + td * td;
        values.push(z[j] - z[i] - dt * v * ct);
        rows.push(vec![(j, 1.0), (i, -1.0), (i + 2, dt * v * st), (i + 3, -dt * ct)]);
        values.push(z[j + 1] - z[i + 1] - dt * v * st);
        rows.push(vec![(j + 1, 1.0), (i + 1, -1.0), (i + 2, -dt * v * ct), (i + 3, -dt * st)]);
        values.push(z[j + 2] - th - dt * v * td / l);
        rows.push(vec![(j + 2, 1.0), (i + 2, -1.0), (i + 3, -dt * td / l), (c + 1, -dt * v * sec2 / l)]);
        values.push(z[j + 3] - v - dt * a);
        rows.push(vec![(j + 3, 1.0), (i + 3, -1.0), (c, -dt)]);
    }
    let num_eq = values.len();

    let lim = problem.lateral_limit;
    for k in 1..=n {
        let i = problem.state(k);
        let (nl, gn) = problem.lateral(z, k);
        values.push(lim - nl);
        rows.push(vec![(i, -gn.x), (i + 1, -gn.y)]);
        values.push(lim + nl);
        rows.push(vec![(i, gn.x), (i + 1, gn.y)]);
        values.push(z[i + 3]);
        rows.push(vec![(i + 3, 1.0)]);
        values.push(b.v_max - z[i + 3]);
        rows.push(vec![(i + 3, -1.0)]);
    }
    let rate = dt * b.steer_rate_max;
    for k in 0..n {
        let c = problem.control(k);
        values.push(z[c] - b.a_min);
        rows.push(vec![(c, 1.0)]);
        values.push(b.a_max - z[c]);
        rows.push(vec![(c, -1.0)]);
        values.push(b.steer_max - z[c + 1]);
        rows.push(vec![(c + 1, -1.0)]);
        values.push(b.steer_max + z[c + 1]);
        rows.push(vec![(c + 1, 1.0)]);
        let (prev, prev_col) = if k == 0 {
            (problem.initial_steer, None)
        } else {
            (z[problem.control(k - 1) + 1], Some(problem.control(k - 1) + 1))
        };
        let dd = z[c + 1] - prev;
        values.push(rate - dd);
        let mut r = vec![(c + 1, -1.0)];
        r.extend(prev_col.map(|p| (p, 1.0)));
        rows.push(r);
        values.push(rate + dd);
        let mut r = vec![(c + 1, 1.0)];
        r.extend(prev_col.map(|p| (p, -1.0)));
        rows.push(r);
    }
    for ob in &problem.obstacles {
        for k in 1..=n {
            let i = problem.state(k);
            let (ox, oy, psi) = ob.poses[k - 1];
            let (c, s) = (psi.cos(), psi.sin());
            let (dx, dy) = (z[i] - ox, z[i + 1] - oy);
            let u = (c * dx + s * dy) / ob.ra;
            let w = (-s * dx + c * dy) / ob.rb;
            values.push(u * u + w * w - 1.0);
            let gx = 2.0 * u * c / ob.ra - 2.0 * w * s / ob.rb;
            let gy = 2.0 * u * s / ob.ra + 2.0 * w * c / ob.rb;
            rows.push(vec![(i, gx), (i + 1, gy)]);
        }
    }
    Ok(ConstraintEval {
        values,
        jacobian: SparseJacobian { cols: z.len(), rows },
        num_eq,
    })
}

/// Largest equality residual or inequality shortfall.
pub fn max_violation(eval: &ConstraintEval) -> f64 {
    eval.values
        .iter()
        .enumerate()
        .map(|(r, &v)| if r < eval.num_eq { v.abs() } else { (-v).max(0.0) })
        .fold(0.0, f64::max)
}

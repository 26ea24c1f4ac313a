//! Augmented Lagrangian (Powell-Hestenes-Rockafellar) outer loop with a
//! damped Newton inner loop and Armijo backtracking.

use serde::{Deserialize, Serialize};

use super::problem::{eval_constraints, eval_objective, max_violation, ConstraintEval, NlpProblem};
use super::NlpError;
use crate::clock::Clock;
use crate::linalg::{cholesky_in_place, cholesky_solve, norm_inf, DenseMatrix};
use crate::prelude::*;
use crate::world::{normalize_angle, AgentState, Control, Frame, Trajectory};

pub const CONSTRAINT_TOL: f64 = 1e-6;
pub const KKT_TOL: f64 = 1e-6;
const INNER_TOL: f64 = 1e-8;
const PINNED: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlpBudget {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Seconds, measured with the caller's clock.
    pub time_cap: Option<f64>,
}

impl Default for NlpBudget {
    fn default() -> Self {
        Self {
            max_outer: 20,
            max_inner: 100,
            time_cap: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NlpStatus {
    Converged,
    MaxIter,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlpOutcome {
    pub status: NlpStatus,
    pub solution: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub kkt_residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub solve_time: f64,
}

impl NlpProblem {
    /// Decision vector from a trajectory: padded with its last state (zero
    /// controls), truncated to the horizon, headings unwrapped, and the
    /// initial state pinned.
    pub fn seed_vector(&self, seed: &Trajectory) -> Vec<f64> {
        let mut z = vec![0.0; self.num_vars()];
        let mut prev_heading = self.initial[2];
        for k in 0..=self.steps {
            let i = self.state(k);
            let st = seed.states.get(k).or(seed.states.last());
            if k == 0 {
                z[i..i + 4].copy_from_slice(&self.initial);
                continue;
            }
            if let Some(s) = st {
                let h = prev_heading + normalize_angle(s.heading - prev_heading);
                z[i..i + 4].copy_from_slice(&[s.x, s.y, h, s.speed]);
                prev_heading = h;
            }
        }
        for k in 0..self.steps {
            let c = self.control(k);
            let a = seed.controls.get(k).map_or(0.0, |c| c.accel);
            let d = seed.states.get(k + 1).map_or(0.0, |s| s.steer);
            z[c] = a;
            z[c + 1] = d;
        }
        for v in z.iter_mut() {
            if !v.is_finite() {
                *v = 0.0;
            }
        }
        z
    }

    /// Cartesian trajectory encoded by a decision vector.
    pub fn trajectory(&self, z: &[f64]) -> Trajectory {
        let states: Vec<AgentState> = (0..=self.steps)
            .map(|k| {
                let i = self.state(k);
                let (accel, steer) = if k == 0 {
                    (self.initial_accel, self.initial_steer)
                } else {
                    let c = self.control(k - 1);
                    (z[c], z[c + 1])
                };
                AgentState {
                    x: z[i],
                    y: z[i + 1],
                    heading: normalize_angle(z[i + 2]),
                    speed: z[i + 3],
                    accel,
                    steer,
                }
            })
            .collect();
        let controls = (0..self.steps)
            .map(|k| Control {
                accel: states[k + 1].accel,
                steer_rate: (states[k + 1].steer - states[k].steer) / self.dt,
            })
            .collect();
        Trajectory {
            states,
            controls,
            frame: Frame::Cartesian,
        }
    }

    /// Adds `Σ_r c_r ∇²g_r` for constraint rows in evaluation order.
    fn add_constraint_hessians(&self, z: &[f64], coef: &[f64], h: &mut DenseMatrix) {
        let n = self.steps;
        let dt = self.dt;
        let l = self.wheelbase;
        for k in 0..n {
            let i = self.state(k);
            let c = self.control(k);
            let (th, v, d) = (z[i + 2], z[i + 3], z[c + 1]);
            let (ct, st) = (th.cos(), th.sin());
            let td = d.tan();
            let sec2 = 1.0 + td * td;
            let cx = coef[4 * k];
            let cy = coef[4 * k + 1];
            let ch = coef[4 * k + 2];
            h[(i + 2, i + 2)] += cx * dt * v * ct + cy * dt * v * st;
            let tv = cx * dt * st - cy * dt * ct;
            h[(i + 2, i + 3)] += tv;
            h[(i + 3, i + 2)] += tv;
            let vd = -ch * dt * sec2 / l;
            h[(i + 3, c + 1)] += vd;
            h[(c + 1, i + 3)] += vd;
            h[(c + 1, c + 1)] += -ch * dt * v * 2.0 * sec2 * td / l;
        }
        let base = self.num_eq();
        for k in 1..=n {
            let r = base + 4 * (k - 1);
            let w = coef[r + 1] - coef[r];
            if w != 0.0 {
                let hn = self.lateral_hessian(z, k);
                let i = self.state(k);
                for a in 0..2 {
                    for b in 0..2 {
                        h[(i + a, i + b)] += w * hn[a][b];
                    }
                }
            }
        }
        let mut r = base + 4 * n + 6 * n;
        for ob in &self.obstacles {
            let (ia, ib) = (1.0 / (ob.ra * ob.ra), 1.0 / (ob.rb * ob.rb));
            for k in 1..=n {
                let w = coef[r];
                r += 1;
                if w == 0.0 {
                    continue;
                }
                let (c, s) = (ob.poses[k - 1].2.cos(), ob.poses[k - 1].2.sin());
                let i = self.state(k);
                let hxx = 2.0 * (c * c * ia + s * s * ib);
                let hxy = 2.0 * c * s * (ia - ib);
                let hyy = 2.0 * (s * s * ia + c * c * ib);
                h[(i, i)] += w * hxx;
                h[(i, i + 1)] += w * hxy;
                h[(i + 1, i)] += w * hxy;
                h[(i + 1, i + 1)] += w * hyy;
            }
        }
    }

    fn add_objective_hessian(&self, z: &[f64], h: &mut DenseMatrix) {
        let w = &self.weights;
        for k in 1..=self.steps {
            let iv = self.state(k) + 3;
            h[(iv, iv)] += 2.0 * w.progress;
            if w.lateral != 0.0 {
                let (nl, gn) = self.lateral(z, k);
                let hn = self.lateral_hessian(z, k);
                let g = [gn.x, gn.y];
                let i = self.state(k);
                for a in 0..2 {
                    for b in 0..2 {
                        h[(i + a, i + b)] += 2.0 * w.lateral * (g[a] * g[b] + nl * hn[a][b]);
                    }
                }
            }
        }
        for k in 0..self.steps {
            let ia = self.control(k);
            h[(ia, ia)] += 2.0 * w.accel;
            if k + 1 < self.steps {
                let ib = self.control(k + 1);
                for (off, wt) in [(0, w.jerk_accel), (1, w.jerk_steer)] {
                    let (p, q) = (ia + off, ib + off);
                    h[(p, p)] += 2.0 * wt;
                    h[(q, q)] += 2.0 * wt;
                    h[(p, q)] -= 2.0 * wt;
                    h[(q, p)] -= 2.0 * wt;
                }
            }
        }
    }
}

struct Multipliers {
    lambda: Vec<f64>,
    nu: Vec<f64>,
    mu: f64,
}

struct Point {
    f: f64,
    grad_f: Vec<f64>,
    cons: ConstraintEval,
}

fn evaluate(p: &NlpProblem, z: &[f64]) -> Result<Point, NlpError> {
    let (f, grad_f) = eval_objective(p, z)?;
    let cons = eval_constraints(p, z)?;
    if !f.is_finite() || cons.values.iter().any(|v| !v.is_finite()) {
        return Err(NlpError::NonFinite(usize::MAX));
    }
    Ok(Point { f, grad_f, cons })
}

fn merit(pt: &Point, m: &Multipliers) -> f64 {
    let ne = pt.cons.num_eq;
    let mut v = pt.f;
    for (r, &h) in pt.cons.values[..ne].iter().enumerate() {
        v += m.lambda[r] * h + 0.5 * m.mu * h * h;
    }
    for (j, &g) in pt.cons.values[ne..].iter().enumerate() {
        let s = (m.nu[j] - m.mu * g).max(0.0);
        v += (s * s - m.nu[j] * m.nu[j]) / (2.0 * m.mu);
    }
    v
}

/// Gradient of the augmented Lagrangian with the pinned state zeroed, and
/// the per-row multiplier estimates `(λ + μh, max(0, ν − μg))`.
fn merit_gradient(pt: &Point, m: &Multipliers) -> (Vec<f64>, Vec<f64>) {
    let ne = pt.cons.num_eq;
    let mut g = pt.grad_f.clone();
    let mut y = vec![0.0; pt.cons.values.len()];
    for (r, row) in pt.cons.jacobian.rows.iter().enumerate() {
        let val = pt.cons.values[r];
        let coef = if r < ne {
            m.lambda[r] + m.mu * val
        } else {
            -(m.nu[r - ne] - m.mu * val).max(0.0)
        };
        y[r] = coef;
        if coef != 0.0 {
            for &(j, d) in row {
                g[j] += coef * d;
            }
        }
    }
    for v in g.iter_mut().take(PINNED) {
        *v = 0.0;
    }
    (g, y)
}

fn newton_direction(p: &NlpProblem, z: &[f64], pt: &Point, m: &Multipliers, grad: &[f64]) -> Option<Vec<f64>> {
    let nv = z.len();
    let ne = pt.cons.num_eq;
    let mut h = DenseMatrix::zeros(nv, nv);
    p.add_objective_hessian(z, &mut h);
    let mut coef = vec![0.0; pt.cons.values.len()];
    for (r, row) in pt.cons.jacobian.rows.iter().enumerate() {
        let val = pt.cons.values[r];
        let (c2, gn) = if r < ne {
            (m.lambda[r] + m.mu * val, true)
        } else {
            let s = m.nu[r - ne] - m.mu * val;
            if s > 0.0 {
                (-s, true)
            } else {
                (0.0, false)
            }
        };
        coef[r] = c2;
        if gn {
            for &(a, da) in row {
                for &(b, db) in row {
                    h[(a, b)] += m.mu * da * db;
                }
            }
        }
    }
    p.add_constraint_hessians(z, &coef, &mut h);
    for i in 0..PINNED {
        for j in 0..nv {
            h[(i, j)] = 0.0;
            h[(j, i)] = 0.0;
        }
        h[(i, i)] = 1.0;
    }
    let scale = (0..nv).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut tau = 0.0;
    for _ in 0..20 {
        let mut f = h.clone();
        for i in PINNED..nv {
            f[(i, i)] += tau;
        }
        if cholesky_in_place(&mut f) {
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let d = cholesky_solve(&f, &rhs);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        tau = if tau == 0.0 { 1e-10 * scale } else { tau * 10.0 };
    }
    None
}

fn stationarity(pt: &Point, lambda: &[f64], nu: &[f64]) -> f64 {
    let ne = pt.cons.num_eq;
    let mut g = pt.grad_f.clone();
    for (r, row) in pt.cons.jacobian.rows.iter().enumerate() {
        let coef = if r < ne { lambda[r] } else { -nu[r - ne] };
        if coef != 0.0 {
            for &(j, d) in row {
                g[j] += coef * d;
            }
        }
    }
    let comp = pt.cons.values[ne..]
        .iter()
        .zip(nu)
        .map(|(g, n)| (g * n).abs())
        .fold(0.0, f64::max);
    norm_inf(&g[PINNED..]).max(comp)
}

pub fn solve_nlp(
    problem: &NlpProblem,
    seed: &Trajectory,
    budget: &NlpBudget,
    clock: &impl Clock,
) -> Result<NlpOutcome, NlpError> {
    let z0 = problem.seed_vector(seed);
    solve_from(problem, z0, budget, clock)
}

/// Solves from an explicit starting vector (the pinned state is overwritten).
pub fn solve_from(
    problem: &NlpProblem,
    mut z: Vec<f64>,
    budget: &NlpBudget,
    clock: &impl Clock,
) -> Result<NlpOutcome, NlpError> {
    if z.len() != problem.num_vars() {
        return Err(NlpError::Invalid("seed length".into()));
    }
    z[..PINNED].copy_from_slice(&problem.initial);
    let t0 = clock.seconds();
    let ne = problem.num_eq();
    let ni = problem.num_ineq();
    let mut m = Multipliers {
        lambda: vec![0.0; ne],
        nu: vec![0.0; ni],
        mu: 10.0,
    };
    let mut pt = evaluate(problem, &z)?;
    let mut out = NlpOutcome {
        status: NlpStatus::MaxIter,
        solution: z.clone(),
        objective: pt.f,
        max_violation: max_violation(&pt.cons),
        kkt_residual: f64::INFINITY,
        outer_iterations: 0,
        inner_iterations: 0,
        solve_time: 0.0,
    };
    let mut best = (out.max_violation, pt.f, z.clone());
    let mut prev_viol = f64::INFINITY;
    let time_up = || budget.time_cap.is_some_and(|cap| clock.seconds() - t0 > cap);

    'outer: for _ in 0..budget.max_outer {
        out.outer_iterations += 1;
        for _ in 0..budget.max_inner {
            let (grad, _) = merit_gradient(&pt, &m);
            if norm_inf(&grad) <= INNER_TOL {
                break;
            }
            if time_up() {
                break 'outer;
            }
            let Some(d) = newton_direction(problem, &z, &pt, &m, &grad) else {
                break;
            };
            let slope: f64 = grad.iter().zip(&d).map(|(g, d)| g * d).sum();
            if slope >= 0.0 {
                break;
            }
            let phi0 = merit(&pt, &m);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = z.iter().zip(&d).map(|(v, d)| v + alpha * d).collect();
                match evaluate(problem, &trial) {
                    Ok(tp) => {
                        let phi = merit(&tp, &m);
                        if phi <= phi0 + 1e-4 * alpha * slope {
                            accepted = Some((trial, tp, phi));
                            break;
                        }
                    }
                    Err(NlpError::NonFinite(_)) => {}
                    Err(e) => return Err(e),
                }
                alpha *= 0.5;
            }
            out.inner_iterations += 1;
            let Some((trial, tp, phi)) = accepted else {
                break;
            };
            debug_assert!(phi <= phi0, "merit increased: {phi0} -> {phi}");
            z = trial;
            pt = tp;
            if z.iter().any(|v| !v.is_finite()) {
                out.status = NlpStatus::Diverged;
                break 'outer;
            }
        }

        // first-order multiplier update
        let ne = pt.cons.num_eq;
        for r in 0..ne {
            m.lambda[r] += m.mu * pt.cons.values[r];
        }
        for j in 0..ni {
            m.nu[j] = (m.nu[j] - m.mu * pt.cons.values[ne + j]).max(0.0);
        }
        let viol = max_violation(&pt.cons);
        let kkt = stationarity(&pt, &m.lambda, &m.nu);
        out.kkt_residual = kkt;
        if viol < best.0 || (viol <= best.0 && pt.f < best.1) {
            best = (viol, pt.f, z.clone());
        }
        if viol < CONSTRAINT_TOL && kkt < KKT_TOL {
            out.status = NlpStatus::Converged;
            break;
        }
        if m.lambda.iter().chain(&m.nu).any(|v| !v.is_finite()) {
            out.status = NlpStatus::Diverged;
            break;
        }
        if viol > 0.25 * prev_viol {
            m.mu = (m.mu * 10.0).min(1e9);
        }
        prev_viol = viol;
        if time_up() {
            break;
        }
    }

    if out.status == NlpStatus::Converged {
        out.solution = z;
        out.objective = pt.f;
        out.max_violation = max_violation(&pt.cons);
    } else {
        let fin = evaluate(problem, &best.2)?;
        out.solution = best.2;
        out.objective = fin.f;
        out.max_violation = max_violation(&fin.cons);
    }
    out.solve_time = clock.seconds() - t0;
    Ok(out)
}

//! Road-frame MILP construction.

use serde::{Deserialize, Serialize};

use super::{big_m, MilpError, MilpProblem, Relation};
use crate::prelude::*;
use crate::rules::{encode_rule, SignalBinding, StlFormula};
use crate::world::{normalize_angle, ObstaclePrediction, Scenario, VehicleParams};

/// Weights of the L1 objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MilpWeights {
    pub speed: f64,
    pub accel: f64,
    pub jerk: f64,
    pub lateral: f64,
    pub lateral_speed: f64,
    pub lateral_accel: f64,
    pub lateral_jerk: f64,
}

impl Default for MilpWeights {
    fn default() -> Self {
        Self {
            speed: 1.0,
            accel: 0.2,
            jerk: 0.2,
            lateral: 0.3,
            lateral_speed: 0.2,
            lateral_accel: 0.2,
            lateral_jerk: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MilpConfig {
    pub weights: MilpWeights,
    pub ego: VehicleParams,
    /// Bound on lateral speed `|vn|`.
    pub vn_max: f64,
    /// Bound on lateral acceleration `|an|`.
    pub an_max: f64,
    /// Clearance added around obstacle boxes.
    pub margin: f64,
}

impl Default for MilpConfig {
    fn default() -> Self {
        Self {
            weights: MilpWeights::default(),
            ego: VehicleParams::default(),
            vn_max: 2.0,
            an_max: 2.0,
            margin: 0.5,
        }
    }
}

/// Column indices of the planning variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpLayout {
    pub steps: usize,
    pub dt: f64,
    pub s: Vec<usize>,
    pub n: Vec<usize>,
    pub vs: Vec<usize>,
    pub vn: Vec<usize>,
    pub a_s: Vec<usize>,
    pub a_n: Vec<usize>,
    /// Per obstacle, per step `1..=N`: behind, ahead, right, left binaries.
    pub obstacle_binaries: Vec<(String, Vec<[usize; 4]>)>,
}

impl MilpLayout {
    /// Binding of the signals `s, n, vs, vn, as, an` for rule encoding.
    /// Accelerations at step `N` reuse step `N - 1`.
    pub fn binding(&self) -> SignalBinding {
        let mut b = SignalBinding::default();
        let single = |cols: &[usize]| cols.iter().map(|&c| vec![(c, 1.0)]).collect::<Vec<_>>();
        b.insert("s", single(&self.s));
        b.insert("n", single(&self.n));
        b.insert("vs", single(&self.vs));
        b.insert("vn", single(&self.vn));
        let mut a_s = self.a_s.clone();
        a_s.push(*self.a_s.last().unwrap_or(&self.vs[0]));
        let mut a_n = self.a_n.clone();
        a_n.push(*self.a_n.last().unwrap_or(&self.vn[0]));
        b.insert("as", single(&a_s));
        b.insert("an", single(&a_n));
        b
    }
}

/// Adds `w * |expr - c|` to the objective using `expr - c = p - q`.
fn add_abs(p: &mut MilpProblem, name: &str, w: f64, expr: &[(usize, f64)], c: f64) {
    if w <= 0.0 {
        return;
    }
    let pos = p.add_var(format!("{name}.pos"), w, 0.0, f64::INFINITY);
    let neg = p.add_var(format!("{name}.neg"), w, 0.0, f64::INFINITY);
    let mut terms = expr.to_vec();
    terms.push((pos, -1.0));
    terms.push((neg, 1.0));
    p.add_row(&terms, Relation::Eq, c);
}

pub fn build_milp(
    scenario: &Scenario,
    predictions: &[ObstaclePrediction],
    config: &MilpConfig,
    rules: &[StlFormula],
) -> Result<MilpProblem, MilpError> {
    let n_steps = scenario.horizon_steps;
    for pr in predictions {
        if pr.states.len() != n_steps + 1 {
            return Err(MilpError::HorizonMismatch {
                id: pr.id.clone(),
                expected: n_steps + 1,
                got: pr.states.len(),
            });
        }
    }
    let dt = scenario.dt;
    let b = &scenario.bounds;
    let w = &config.weights;
    let corridor = &scenario.corridor;
    let ego = &scenario.ego;

    let f0 = corridor.project(ego.position());
    let dpsi = normalize_angle(ego.heading - corridor.heading(f0.s.clamp(0.0, corridor.length())));
    let vs0 = (ego.speed * dpsi.cos()).clamp(0.0, b.v_max);
    let vn0 = (ego.speed * dpsi.sin()).clamp(-config.vn_max, config.vn_max);
    let n_lim = corridor.width() / 2.0 - config.ego.half_width;

    let mut p = MilpProblem::default();
    let mut lay = MilpLayout {
        steps: n_steps,
        dt,
        s: Vec::new(),
        n: Vec::new(),
        vs: Vec::new(),
        vn: Vec::new(),
        a_s: Vec::new(),
        a_n: Vec::new(),
        obstacle_binaries: Vec::new(),
    };
    for k in 0..=n_steps {
        if k == 0 {
            lay.s.push(p.add_var("s_0", 0.0, f0.s, f0.s));
            lay.n.push(p.add_var("n_0", 0.0, f0.n, f0.n));
            lay.vs.push(p.add_var("vs_0", 0.0, vs0, vs0));
            lay.vn.push(p.add_var("vn_0", 0.0, vn0, vn0));
        } else {
            let reach = f0.s + k as f64 * dt * b.v_max;
            lay.s.push(p.add_var(format!("s_{k}"), 0.0, f0.s, reach));
            let (lo, hi) = if n_lim >= 0.0 { (-n_lim, n_lim) } else { (n_lim, -n_lim) };
            lay.n.push(p.add_var(format!("n_{k}"), 0.0, lo, hi));
            lay.vs.push(p.add_var(format!("vs_{k}"), 0.0, 0.0, b.v_max));
            lay.vn.push(p.add_var(format!("vn_{k}"), 0.0, -config.vn_max, config.vn_max));
        }
    }
    for k in 0..n_steps {
        lay.a_s.push(p.add_var(format!("as_{k}"), 0.0, b.a_min, b.a_max));
        lay.a_n.push(p.add_var(format!("an_{k}"), 0.0, -config.an_max, config.an_max));
    }
    if n_lim < 0.0 {
        // corridor narrower than the ego: contradictory lateral rows
        for k in 1..=n_steps {
            p.add_row(&[(lay.n[k], 1.0)], Relation::Le, n_lim);
            p.add_row(&[(lay.n[k], 1.0)], Relation::Ge, -n_lim);
        }
    }

    // double-integrator dynamics
    for k in 0..n_steps {
        let (pos, vel, acc) = (&lay.s, &lay.vs, &lay.a_s);
        p.add_row(&[(pos[k + 1], 1.0), (pos[k], -1.0), (vel[k], -dt)], Relation::Eq, 0.0);
        p.add_row(&[(vel[k + 1], 1.0), (vel[k], -1.0), (acc[k], -dt)], Relation::Eq, 0.0);
        let (pos, vel, acc) = (&lay.n, &lay.vn, &lay.a_n);
        p.add_row(&[(pos[k + 1], 1.0), (pos[k], -1.0), (vel[k], -dt)], Relation::Eq, 0.0);
        p.add_row(&[(vel[k + 1], 1.0), (vel[k], -1.0), (acc[k], -dt)], Relation::Eq, 0.0);
    }

    // L1 objective
    for k in 1..=n_steps {
        add_abs(&mut p, &format!("abs_vs_{k}"), w.speed, &[(lay.vs[k], 1.0)], scenario.v_ref);
        add_abs(&mut p, &format!("abs_n_{k}"), w.lateral, &[(lay.n[k], 1.0)], 0.0);
        add_abs(&mut p, &format!("abs_vn_{k}"), w.lateral_speed, &[(lay.vn[k], 1.0)], 0.0);
    }
    for k in 0..n_steps {
        add_abs(&mut p, &format!("abs_as_{k}"), w.accel, &[(lay.a_s[k], 1.0)], 0.0);
        add_abs(&mut p, &format!("abs_an_{k}"), w.lateral_accel, &[(lay.a_n[k], 1.0)], 0.0);
        if k == 0 {
            add_abs(&mut p, "abs_js_0", w.jerk, &[(lay.a_s[0], 1.0)], ego.accel);
        } else {
            add_abs(&mut p, &format!("abs_js_{k}"), w.jerk, &[(lay.a_s[k], 1.0), (lay.a_s[k - 1], -1.0)], 0.0);
            add_abs(&mut p, &format!("abs_jn_{k}"), w.lateral_jerk, &[(lay.a_n[k], 1.0), (lay.a_n[k - 1], -1.0)], 0.0);
        }
    }

    // obstacle disjunctions on inflated road-frame boxes
    for (o, pr) in predictions.iter().enumerate() {
        let mut per_step = Vec::with_capacity(n_steps);
        for k in 1..=n_steps {
            let st = &pr.states[k];
            let fo = corridor.project(st.position());
            let d = normalize_angle(st.heading - corridor.heading(fo.s.clamp(0.0, corridor.length())));
            let (c, s) = (d.cos().abs(), d.sin().abs());
            let half_s = pr.half_length * c + pr.half_width * s + config.ego.half_length + config.margin;
            let half_n = pr.half_length * s + pr.half_width * c + config.ego.half_width + config.margin;
            let sides = [
                // behind: s_k <= s_o - half_s
                (lay.s[k], Relation::Le, fo.s - half_s),
                // ahead: s_k >= s_o + half_s
                (lay.s[k], Relation::Ge, fo.s + half_s),
                // right: n_k <= n_o - half_n
                (lay.n[k], Relation::Le, fo.n - half_n),
                // left: n_k >= n_o + half_n
                (lay.n[k], Relation::Ge, fo.n + half_n),
            ];
            let names = ["behind", "ahead", "right", "left"];
            let mut bins = [0usize; 4];
            let mut always = None;
            for (i, &(col, rel, rhs)) in sides.iter().enumerate() {
                let bcol = p.add_binary(format!("b_{o}_{k}_{}", names[i]));
                bins[i] = bcol;
                let (lo, hi) = (p.lp.lower[col], p.lp.upper[col]);
                let m = big_m(lo, hi, rhs, config.margin);
                match rel {
                    Relation::Le => {
                        p.add_row(&[(col, 1.0), (bcol, m)], Relation::Le, rhs + m);
                        if hi <= rhs && always.is_none() {
                            always = Some(i);
                        } else if lo > rhs {
                            p.lp.upper[bcol] = 0.0;
                        }
                    }
                    _ => {
                        p.add_row(&[(col, 1.0), (bcol, -m)], Relation::Ge, rhs - m);
                        if lo >= rhs && always.is_none() {
                            always = Some(i);
                        } else if hi < rhs {
                            p.lp.upper[bcol] = 0.0;
                        }
                    }
                }
            }
            p.add_row(&bins.map(|c| (c, 1.0)), Relation::Ge, 1.0);
            if let Some(i) = always {
                // side holds for every admissible value: settle the disjunction
                for (j, &c) in bins.iter().enumerate() {
                    let v = if i == j { 1.0 } else { 0.0 };
                    p.lp.lower[c] = v;
                    p.lp.upper[c] = v;
                }
            }
            per_step.push(bins);
        }
        lay.obstacle_binaries.push((pr.id.clone(), per_step));
    }

    if !rules.is_empty() {
        let binding = lay.binding();
        for f in rules {
            encode_rule(f, &binding, n_steps, &mut p).map_err(|e| MilpError::Rule(e.to_string()))?;
        }
    }
    p.layout = Some(lay);
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FrozenClock;
    use crate::milp_stage::{solve_milp, MilpOptions, MilpStatus};
    use crate::world::{AgentState, RoadCorridor, Vec2};

    fn road(n: usize) -> Scenario {
        let c = RoadCorridor::straight(Vec2::new(0.0, 0.0), 0.0, 200.0, 7.0).unwrap();
        let ego = AgentState {
            speed: 10.0,
            ..Default::default()
        };
        Scenario::new(c, ego, 0.1, n, 10.0).unwrap()
    }

    fn parked(x: f64, y: f64, n: usize) -> ObstaclePrediction {
        ObstaclePrediction {
            id: "p".into(),
            half_length: 2.0,
            half_width: 0.9,
            states: vec![
                AgentState {
                    x,
                    y,
                    ..Default::default()
                };
                n + 1
            ],
        }
    }

    #[test]
    fn binary_counts() {
        let sc = road(10);
        let p = build_milp(&sc, &[], &MilpConfig::default(), &[]).unwrap();
        assert_eq!(p.num_binaries(), 0);
        let p = build_milp(&sc, &[parked(8.0, 0.0, 10)], &MilpConfig::default(), &[]).unwrap();
        assert_eq!(p.num_binaries(), 40);
    }

    #[test]
    fn empty_road_at_reference_speed_costs_nothing() {
        let sc = road(10);
        let p = build_milp(&sc, &[], &MilpConfig::default(), &[]).unwrap();
        let out = solve_milp(&p, &MilpOptions::default(), &FrozenClock).unwrap();
        assert_eq!(out.status, MilpStatus::Optimal);
        assert!(out.objective.abs() < 1e-9);
        let x = out.incumbent.unwrap();
        let lay = p.layout.unwrap();
        assert!(lay.a_s.iter().all(|&c| x[c].abs() < 1e-9));
        assert!(lay.n.iter().all(|&c| x[c].abs() < 1e-9));
    }

    #[test]
    fn horizon_mismatch() {
        let sc = road(10);
        let err = build_milp(&sc, &[parked(8.0, 0.0, 5)], &MilpConfig::default(), &[]).unwrap_err();
        assert!(matches!(err, MilpError::HorizonMismatch { .. }));
    }

    #[test]
    fn blocked_corridor_is_infeasible() {
        let sc = road(10);
        let mut wall = parked(6.0, 0.0, 10);
        wall.half_width = 10.0;
        let p = build_milp(&sc, &[wall], &MilpConfig::default(), &[]).unwrap();
        let out = solve_milp(&p, &MilpOptions::default(), &FrozenClock).unwrap();
        assert_eq!(out.status, MilpStatus::Infeasible);
    }
}

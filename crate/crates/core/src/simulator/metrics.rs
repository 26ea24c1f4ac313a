use serde::{Deserialize, Serialize};

use super::SimTrace;
use crate::planner::PlanSource;
use crate::prelude::*;
use crate::rules::SignalTrace;
use crate::world::{normalize_angle, OrientedBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub steps: usize,
    pub collision: bool,
    pub first_collision_step: Option<usize>,
    /// Smallest ego-obstacle footprint distance; absent without obstacles.
    pub min_separation: Option<f64>,
    pub progress: f64,
    pub max_jerk_accel: f64,
    /// Largest executed steering rate.
    pub max_jerk_steer: f64,
    pub sources: BTreeMap<String, usize>,
    pub mean_cycle_time: f64,
    pub p95_cycle_time: f64,
    /// Share of posterior snapshots whose argmax is the scripted goal.
    pub prediction_accuracy: Option<f64>,
    pub first_detection: BTreeMap<String, Option<usize>>,
}

impl Metrics {
    /// Earliest step at which any object was perceived.
    pub fn first_detection_step(&self) -> Option<usize> {
        self.first_detection.values().flatten().min().copied()
    }

    pub fn source_count(&self, s: PlanSource) -> usize {
        self.sources.get(s.name()).copied().unwrap_or(0)
    }
}

/// Pure summary of a trace.
pub fn evaluate(trace: &SimTrace) -> Metrics {
    let h = &trace.header;
    let ego_box = |s: &crate::world::AgentState| OrientedBox {
        center: s.position(),
        heading: s.heading,
        half_length: h.ego_params.half_length,
        half_width: h.ego_params.half_width,
    };
    let mut first_collision_step = None;
    let mut min_sep: Option<f64> = None;
    let mut sources: BTreeMap<String, usize> = PlanSource::ALL.iter().map(|s| (s.name().into(), 0)).collect();
    let mut first_detection: BTreeMap<String, Option<usize>> = BTreeMap::new();
    let (mut hits, mut total) = (0usize, 0usize);
    let (mut prev_a, mut prev_d) = (h.initial_ego.accel, h.initial_ego.steer);
    let (mut jerk_a, mut jerk_d) = (0.0f64, 0.0f64);

    for r in &trace.records {
        let eb = ego_box(&r.ego);
        for o in &r.ground_truth {
            first_detection.entry(o.id.clone()).or_insert(None);
            let d = eb.distance(&o.footprint());
            min_sep = Some(min_sep.map_or(d, |m| m.min(d)));
            if eb.overlaps(&o.footprint()) && first_collision_step.is_none() {
                first_collision_step = Some(r.step);
            }
        }
        for o in &r.perceived {
            let e = first_detection.entry(o.id.clone()).or_insert(None);
            if e.is_none() {
                *e = Some(r.step);
            }
        }
        *sources.entry(r.source.name().into()).or_insert(0) += 1;
        for (id, post) in &r.posteriors {
            if let Some(g) = h.goals.get(id) {
                if post.probability(g).is_some() {
                    total += 1;
                    if post.argmax() == Some(g.as_str()) {
                        hits += 1;
                    }
                }
            }
        }
        let (a, d) = r.control;
        jerk_a = jerk_a.max((a - prev_a).abs() / h.dt);
        jerk_d = jerk_d.max((d - prev_d).abs() / h.dt);
        prev_a = a;
        prev_d = d;
    }

    let mut times: Vec<f64> = trace.records.iter().map(|r| r.cycle_time).collect();
    times.sort_by(f64::total_cmp);
    let mean = if times.is_empty() { 0.0 } else { times.iter().sum::<f64>() / times.len() as f64 };
    let p95 = if times.is_empty() {
        0.0
    } else {
        let rank = libm::ceil(0.95 * times.len() as f64) as usize;
        times[rank.max(1) - 1]
    };
    let s0 = h.corridor.project(h.initial_ego.position()).s;
    let s1 = h.corridor.project(h.final_ego.position()).s;
    Metrics {
        steps: trace.records.len(),
        collision: first_collision_step.is_some(),
        first_collision_step,
        min_separation: min_sep,
        progress: (s1 - s0).max(0.0),
        max_jerk_accel: jerk_a,
        max_jerk_steer: jerk_d,
        sources,
        mean_cycle_time: mean,
        p95_cycle_time: p95,
        prediction_accuracy: if total > 0 { Some(hits as f64 / total as f64) } else { None },
        first_detection,
    }
}

/// Road-frame signals of the executed ego path under the names the rule
/// encoder binds: `s`, `n`, `vs`, `vn`, `as`, `an`. Step `k` is record `k`;
/// the final state is appended, and accelerations repeat their last value.
pub fn signal_trace(trace: &SimTrace) -> SignalTrace {
    let h = &trace.header;
    let c = &h.corridor;
    let mut states: Vec<_> = trace.records.iter().map(|r| r.ego).collect();
    states.push(h.final_ego);
    let mut out = SignalTrace::new();
    for name in ["s", "n", "vs", "vn", "as", "an"] {
        out.insert(name.into(), Vec::with_capacity(states.len()));
    }
    for (k, st) in states.iter().enumerate() {
        let p = c.project(st.position());
        let rel = normalize_angle(st.heading - c.heading(p.s));
        let (sin, cos) = (libm::sin(rel), libm::cos(rel));
        let a = trace
            .records
            .get(k)
            .or(trace.records.last())
            .map_or(0.0, |r| r.control.0);
        for (name, v) in [
            ("s", p.s),
            ("n", p.n),
            ("vs", st.speed * cos),
            ("vn", st.speed * sin),
            ("as", a * cos),
            ("an", a * sin),
        ] {
            out.get_mut(name).expect("inserted above").push(v);
        }
    }
    out
}

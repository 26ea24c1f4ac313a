use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::prelude::*;
use crate::world::{normalize_angle, AgentState, Scenario};

use super::{GoalPosterior, PredictionError};

pub const NUM_FEATURES: usize = 4;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = ["distance_to_goal", "angle_to_goal", "speed", "lateral_offset"];

/// Features of `agent` relative to the next decision point: the nearest fork
/// ahead, or the corridor end when no fork is left.
pub fn tree_features(scenario: &Scenario, agent: &AgentState) -> [f64; NUM_FEATURES] {
    let c = &scenario.corridor;
    let f = c.to_frenet(agent.position());
    let target = scenario
        .branches
        .iter()
        .map(|b| b.fork_s)
        .filter(|s| *s > f.s)
        .fold(c.length(), f64::min);
    let to = c.point_at(target, 0.0) - agent.position();
    let angle = if to.norm() > 1e-9 {
        normalize_angle(agent.heading - to.angle())
    } else {
        0.0
    };
    [target - f.s, angle, agent.speed, f.n]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf { positive: u64, negative: u64 },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf(&self, x: &[f64]) -> (u64, u64) {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { positive, negative } => return (*positive, *negative),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    fn thresholds(&self, out: &mut Vec<Vec<f64>>) {
        if let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } = self
        {
            out[*feature].push(*threshold);
            left.thresholds(out);
            right.thresholds(out);
        }
    }
}

/// One-vs-rest tree for a single goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalTree {
    pub goal: String,
    pub num_features: usize,
    pub depth_limit: usize,
    pub min_leaf: usize,
    pub root: TreeNode,
}

impl GoalTree {
    /// Laplace-smoothed probability that the goal is the true one.
    pub fn score(&self, x: &[f64]) -> f64 {
        let (p, n) = self.root.leaf(x);
        (p as f64 + 1.0) / ((p + n) as f64 + 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeProperty {
    /// Closed interval per feature.
    pub intervals: Vec<(f64, f64)>,
    pub goal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Verification {
    Verified,
    Counterexample { features: Vec<f64> },
}

/// Sum of squared class counts over the node size as an exact fraction.
#[derive(Clone, Copy)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn node(p: u64, q: u64) -> Self {
        let (p, q) = (p as u128, q as u128);
        Purity {
            num: p * p + q * q,
            den: p + q,
        }
    }

    fn split(l: (u64, u64), r: (u64, u64)) -> Self {
        let a = Purity::node(l.0, l.1);
        let b = Purity::node(r.0, r.1);
        Purity {
            num: a.num * b.den + b.num * a.den,
            den: a.den * b.den,
        }
    }

    fn cmp(&self, o: &Purity) -> Ordering {
        (self.num * o.den).cmp(&(o.num * self.den))
    }
}

struct Trainer<'a> {
    x: &'a [Vec<f64>],
    y: Vec<bool>,
    depth_limit: usize,
    min_leaf: usize,
}

impl Trainer<'_> {
    fn build(&self, idx: &[usize], depth: usize) -> TreeNode {
        let pos = idx.iter().filter(|&&i| self.y[i]).count() as u64;
        let neg = idx.len() as u64 - pos;
        let leaf = TreeNode::Leaf {
            positive: pos,
            negative: neg,
        };
        if depth >= self.depth_limit || pos == 0 || neg == 0 || idx.len() < 2 * self.min_leaf {
            return leaf;
        }
        let parent = Purity::node(pos, neg);
        let mut best: Option<(Purity, usize, f64)> = None;
        let nf = self.x[idx[0]].len();
        for f in 0..nf {
            let mut order: Vec<usize> = idx.to_vec();
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let (mut lp, mut ln) = (0u64, 0u64);
            for j in 0..order.len() - 1 {
                if self.y[order[j]] {
                    lp += 1;
                } else {
                    ln += 1;
                }
                let a = self.x[order[j]][f];
                let b = self.x[order[j + 1]][f];
                if a == b {
                    continue;
                }
                let nl = j + 1;
                if nl < self.min_leaf || order.len() - nl < self.min_leaf {
                    continue;
                }
                let mut t = a + (b - a) / 2.0;
                if t >= b {
                    t = a;
                }
                let cand = Purity::split((lp, ln), (pos - lp, neg - ln));
                if best.map_or(true, |(bp, _, _)| cand.cmp(&bp) == Ordering::Greater) {
                    best = Some((cand, f, t));
                }
            }
        }
        match best {
            Some((p, f, t)) if p.cmp(&parent) == Ordering::Greater => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][f] <= t);
                TreeNode::Split {
                    feature: f,
                    threshold: t,
                    left: Box::new(self.build(&l, depth + 1)),
                    right: Box::new(self.build(&r, depth + 1)),
                }
            }
            _ => leaf,
        }
    }
}

/// Trains one Gini tree per goal, sorted by goal id.
pub fn grit_train(
    features: &[Vec<f64>],
    goals: &[String],
    depth_limit: usize,
    min_leaf: usize,
) -> Result<Vec<GoalTree>, PredictionError> {
    if features.is_empty() || features.len() != goals.len() {
        return Err(PredictionError::EmptyDataset);
    }
    let nf = features[0].len();
    for (i, x) in features.iter().enumerate() {
        if x.len() != nf {
            return Err(PredictionError::FeatureCount {
                got: x.len(),
                expected: nf,
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PredictionError::NonFinite(i));
        }
    }
    let classes: BTreeSet<&String> = goals.iter().collect();
    if classes.len() < 2 {
        return Err(PredictionError::TooFewClasses(classes.len()));
    }
    let all: Vec<usize> = (0..features.len()).collect();
    Ok(classes
        .into_iter()
        .map(|g| {
            let t = Trainer {
                x: features,
                y: goals.iter().map(|y| y == g).collect(),
                depth_limit,
                min_leaf: min_leaf.max(1),
            };
            GoalTree {
                goal: g.clone(),
                num_features: nf,
                depth_limit,
                min_leaf: min_leaf.max(1),
                root: t.build(&all, 0),
            }
        })
        .collect())
}

/// Normalized smoothed scores, one entry per tree.
pub fn grit_infer(trees: &[GoalTree], features: &[f64]) -> GoalPosterior {
    let scores: Vec<f64> = trees.iter().map(|t| t.score(features)).collect();
    let total: f64 = scores.iter().sum();
    GoalPosterior {
        goals: trees.iter().zip(&scores).map(|(t, s)| (t.goal.clone(), s / total)).collect(),
        underflow: false,
    }
}

fn dominates(post: &GoalPosterior, goal: &str) -> bool {
    let Some(p) = post.probability(goal) else {
        return false;
    };
    post.goals.iter().all(|(g, q)| g == goal || p > *q)
}

/// Exhaustive check over every cell induced by the tree thresholds.
pub fn grit_verify(trees: &[GoalTree], property: &TreeProperty) -> Result<Verification, PredictionError> {
    let nf = property.intervals.len();
    if let Some(t) = trees.iter().find(|t| t.num_features != nf) {
        return Err(PredictionError::FeatureCount {
            got: nf,
            expected: t.num_features,
        });
    }
    for (f, (lo, hi)) in property.intervals.iter().enumerate() {
        if !(lo <= hi) {
            return Err(PredictionError::EmptyInterval(f));
        }
    }
    let mut cuts = vec![Vec::new(); nf];
    for t in trees {
        t.root.thresholds(&mut cuts);
    }
    // One representative per cell: lo covers [lo, t1], each later threshold
    // covers the cell it closes, hi covers the last one.
    let reps: Vec<Vec<f64>> = property
        .intervals
        .iter()
        .zip(cuts)
        .map(|(&(lo, hi), mut ts)| {
            ts.retain(|t| *t > lo && *t < hi);
            ts.push(lo);
            ts.push(hi);
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            ts
        })
        .collect();
    let mut pick = vec![0usize; nf];
    let mut x: Vec<f64> = reps.iter().map(|r| r[0]).collect();
    loop {
        if !dominates(&grit_infer(trees, &x), &property.goal) {
            return Ok(Verification::Counterexample { features: x });
        }
        let mut f = 0;
        loop {
            if f == nf {
                return Ok(Verification::Verified);
            }
            pick[f] += 1;
            if pick[f] < reps[f].len() {
                x[f] = reps[f][pick[f]];
                break;
            }
            pick[f] = 0;
            x[f] = reps[f][0];
            f += 1;
        }
    }
}

//! Best-first branch and bound over binary columns.

use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::lp::{LpStatus, Simplex};
use super::{MilpError, MilpProblem};
use crate::clock::Clock;
use crate::prelude::*;

const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MilpOptions {
    pub gap_tol: f64,
    pub node_limit: usize,
    /// Wall-time cap in seconds, measured with the caller's clock.
    pub time_limit: Option<f64>,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-4,
            node_limit: 10_000,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    /// Node or time limit reached; the incumbent, if any, is kept.
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpOutcome {
    pub status: MilpStatus,
    pub incumbent: Option<Vec<f64>>,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub solve_time: f64,
}

impl MilpOutcome {
    pub fn has_incumbent(&self) -> bool {
        self.incumbent.is_some()
    }
}

struct Node {
    bound: f64,
    seq: usize,
    fixes: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound, then the oldest node,
    // compares greatest.
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then(o.seq.cmp(&self.seq))
    }
}

fn gap(inc: f64, bound: f64) -> f64 {
    ((inc - bound) / inc.abs().max(1.0)).max(0.0)
}

pub fn solve_milp(problem: &MilpProblem, options: &MilpOptions, clock: &impl Clock) -> Result<MilpOutcome, MilpError> {
    problem.validate()?;
    let t0 = clock.seconds();
    let mut root = Simplex::new(&problem.lp);
    let mut outcome = MilpOutcome {
        status: MilpStatus::Infeasible,
        incumbent: None,
        objective: f64::INFINITY,
        best_bound: f64::INFINITY,
        gap: f64::INFINITY,
        nodes: 1,
        solve_time: 0.0,
    };
    match root.solve() {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            outcome.solve_time = clock.seconds() - t0;
            return Ok(outcome);
        }
        LpStatus::Unbounded => return Err(MilpError::Unbounded),
        LpStatus::NumericalFailure => return Err(MilpError::NumericalFailure),
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    // Lowest bound among nodes discarded by the gap test.
    let mut pruned_bound = f64::INFINITY;
    let mut nodes = 0usize;
    let mut pending: Option<(Simplex, Vec<(usize, f64)>)> = Some((root.clone(), Vec::new()));
    let mut limit_hit = false;

    loop {
        let (mut lp, fixes) = match pending.take() {
            Some(p) => p,
            None => {
                let Some(node) = heap.pop() else { break };
                let node: Node = node;
                if outcome.incumbent.is_some() && gap(outcome.objective, node.bound) <= options.gap_tol {
                    pruned_bound = pruned_bound.min(node.bound);
                    continue;
                }
                if nodes >= options.node_limit || time_up(clock, t0, options) {
                    heap.push(node);
                    limit_hit = true;
                    break;
                }
                let mut s = root.clone();
                for &(j, v) in &node.fixes {
                    s.set_bounds(j, v, v);
                }
                match s.reoptimize() {
                    LpStatus::Optimal => {}
                    LpStatus::Infeasible => {
                        nodes += 1;
                        continue;
                    }
                    LpStatus::Unbounded => return Err(MilpError::Unbounded),
                    LpStatus::NumericalFailure => return Err(MilpError::NumericalFailure),
                }
                (s, node.fixes)
            }
        };
        nodes += 1;
        let bound = lp.objective();
        if outcome.incumbent.is_some() && gap(outcome.objective, bound) <= options.gap_tol {
            pruned_bound = pruned_bound.min(bound);
            continue;
        }
        let x = lp.structural();
        let mut branch: Option<(usize, f64)> = None;
        for (j, &v) in x.iter().enumerate() {
            if !problem.binary[j] {
                continue;
            }
            let frac = (v - v.floor()).min(v.ceil() - v);
            if frac > INT_TOL && branch.map_or(true, |(_, f)| frac > f + 1e-12) {
                branch = Some((j, frac));
            }
        }
        match branch {
            None => {
                // integral: round exactly and re-solve with binaries fixed
                let rounded: Vec<(usize, f64)> = (0..x.len())
                    .filter(|&j| problem.binary[j])
                    .map(|j| (j, x[j].round()))
                    .collect();
                for &(j, v) in &rounded {
                    lp.set_bounds(j, v, v);
                }
                if lp.reoptimize() == LpStatus::Optimal {
                    let obj = lp.objective();
                    if obj < outcome.objective {
                        let mut sol = lp.structural().to_vec();
                        for &(j, v) in &rounded {
                            sol[j] = v;
                        }
                        outcome.objective = obj;
                        outcome.incumbent = Some(sol);
                    }
                }
            }
            Some((j, _)) => {
                for v in [0.0, 1.0] {
                    let mut f = fixes.clone();
                    f.push((j, v));
                    heap.push(Node {
                        bound,
                        seq,
                        fixes: f,
                    });
                    seq += 1;
                }
            }
        }
    }

    let open_bound = heap.iter().map(|n: &Node| n.bound).fold(f64::INFINITY, f64::min);
    outcome.nodes = nodes.max(1);
    outcome.solve_time = clock.seconds() - t0;
    match outcome.incumbent {
        Some(_) => {
            outcome.best_bound = open_bound.min(pruned_bound).min(outcome.objective);
            outcome.gap = gap(outcome.objective, outcome.best_bound);
            outcome.status = if limit_hit {
                MilpStatus::NodeLimit
            } else {
                MilpStatus::Optimal
            };
        }
        None => {
            outcome.best_bound = open_bound;
            outcome.status = if limit_hit {
                MilpStatus::NodeLimit
            } else {
                MilpStatus::Infeasible
            };
        }
    }
    Ok(outcome)
}

fn time_up(clock: &impl Clock, t0: f64, options: &MilpOptions) -> bool {
    options.time_limit.is_some_and(|cap| clock.seconds() - t0 > cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FrozenClock;
    use crate::milp_stage::Relation;

    #[test]
    fn integral_relaxation_needs_one_node() {
        let mut p = MilpProblem::default();
        let b = p.add_binary("b");
        p.lp.cost[b] = -1.0;
        let out = solve_milp(&p, &MilpOptions::default(), &FrozenClock).unwrap();
        assert_eq!(out.status, MilpStatus::Optimal);
        assert_eq!(out.nodes, 1);
        assert_eq!(out.incumbent.unwrap()[b], 1.0);
    }

    #[test]
    fn knapsack_branches_to_optimum() {
        // max 5a + 4b + 3c s.t. 2a + 3b + c <= 4.5  -> a, c
        let mut p = MilpProblem::default();
        let cols: Vec<usize> = ["a", "b", "c"].iter().map(|n| p.add_binary(*n)).collect();
        for (j, c) in cols.iter().zip([-5.0, -4.0, -3.0]) {
            p.lp.cost[*j] = c;
        }
        p.add_row(&[(0, 2.0), (1, 3.0), (2, 1.0)], Relation::Le, 4.5);
        let out = solve_milp(&p, &MilpOptions::default(), &FrozenClock).unwrap();
        assert_eq!(out.status, MilpStatus::Optimal);
        assert_eq!(out.incumbent.unwrap(), vec![1.0, 0.0, 1.0]);
        assert!((out.objective + 8.0).abs() < 1e-9);
        assert!(out.best_bound <= out.objective + 1e-9);
    }

    #[test]
    fn infeasible_disjunction() {
        let mut p = MilpProblem::default();
        let x = p.add_var("x", 0.0, 0.0, 1.0);
        let b = p.add_binary("b");
        p.add_row(&[(x, 1.0), (b, 5.0)], Relation::Ge, 2.0);
        p.add_row(&[(b, 1.0)], Relation::Le, 0.5);
        let out = solve_milp(&p, &MilpOptions::default(), &FrozenClock).unwrap();
        assert_eq!(out.status, MilpStatus::Infeasible);
        assert!(out.incumbent.is_none());
    }
}

//! Dense bounded-variable simplex.
//!
//! Every row `a_i x (<=|=|>=) b_i` gets a slack `s_i` with `a_i x + s_i = b_i`
//! and sign bounds, so the initial basis is the slack identity. Phase 1
//! minimizes the sum of bound infeasibilities of the basic variables; phase 2
//! runs Dantzig pricing and switches to Bland's rule after a run of
//! degenerate pivots. A dual simplex reoptimizes after bound changes, which is
//! how branch and bound warm-starts child nodes.

use serde::{Deserialize, Serialize};

use crate::linalg::{lu_solve, DenseMatrix};
use crate::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

/// `minimize c'x  s.t.  A x (rel) b,  lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    /// Dense rows, each of length `cost.len()`.
    pub rows: Vec<Vec<f64>>,
    pub relations: Vec<Relation>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("variable {0} has lower bound above upper bound")]
    Bounds(usize),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Appends a variable with a zero column; returns its index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        for r in &mut self.rows {
            r.push(0.0);
        }
        self.cost.len() - 1
    }

    /// Appends a row given sparse `(column, coefficient)` terms. Repeated
    /// columns accumulate.
    pub fn add_row(&mut self, terms: &[(usize, f64)], rel: Relation, rhs: f64) -> usize {
        let mut row = vec![0.0; self.num_vars()];
        for &(j, v) in terms {
            row[j] += v;
        }
        self.rows.push(row);
        self.relations.push(rel);
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Dimension("bounds vs cost".into()));
        }
        if self.relations.len() != self.rows.len() || self.rhs.len() != self.rows.len() {
            return Err(LpError::Dimension("relations/rhs vs rows".into()));
        }
        if let Some(i) = self.rows.iter().position(|r| r.len() != n) {
            return Err(LpError::Dimension(format!("row {i} length")));
        }
        if let Some(j) = (0..n).find(|&j| self.lower[j] > self.upper[j]) {
            return Err(LpError::Bounds(j));
        }
        if self.cost.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("cost"));
        }
        if self.rows.iter().flatten().any(|v| !v.is_finite()) || self.rhs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("constraints"));
        }
        if self.lower.iter().chain(&self.upper).any(|v| v.is_nan()) {
            return Err(LpError::NonFinite("bounds"));
        }
        Ok(())
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            let ax: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            let r = ax - self.rhs[i];
            let v = match self.relations[i] {
                Relation::Le => r.max(0.0),
                Relation::Ge => (-r).max(0.0),
                Relation::Eq => r.abs(),
            };
            worst = worst.max(v);
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration cap hit or unrecoverable loss of accuracy.
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    lp.validate()?;
    let mut s = Simplex::new(lp);
    let status = s.solve();
    Ok(s.outcome(status))
}

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const STALL_LIMIT: usize = 100;
const DROP_TOL: f64 = 1e-14;

/// Tableau state `B^{-1} [A | I]` with bound-aware values for every column.
#[derive(Debug, Clone)]
pub(crate) struct Simplex {
    m: usize,
    n: usize,
    nc: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
    /// Row of each basic column, `usize::MAX` for nonbasic.
    row_of: Vec<usize>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    pub(crate) iterations: usize,
    max_iterations: usize,
}

impl Simplex {
    pub(crate) fn new(lp: &LinearProgram) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let nc = n + m;
        let mut t = vec![0.0; m * nc];
        for (i, row) in lp.rows.iter().enumerate() {
            t[i * nc..i * nc + n].copy_from_slice(row);
            t[i * nc + n + i] = 1.0;
        }
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        for rel in &lp.relations {
            let (l, h) = match rel {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lo.push(l);
            hi.push(h);
        }
        let mut x = vec![0.0; nc];
        for j in 0..n {
            x[j] = initial_value(lo[j], hi[j]);
        }
        for i in 0..m {
            let ax: f64 = lp.rows[i].iter().zip(&x[..n]).map(|(a, v)| a * v).sum();
            x[n + i] = lp.rhs[i] - ax;
        }
        let mut cost = lp.cost.clone();
        cost.resize(nc, 0.0);
        let mut row_of = vec![usize::MAX; nc];
        for i in 0..m {
            row_of[n + i] = i;
        }
        Self {
            m,
            n,
            nc,
            t,
            basis: (n..nc).collect(),
            row_of,
            x,
            lo,
            hi,
            cost,
            d: vec![0.0; nc],
            rows: lp.rows.clone(),
            rhs: lp.rhs.clone(),
            iterations: 0,
            max_iterations: 50 * (m + nc) + 10_000,
        }
    }

    pub(crate) fn structural(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub(crate) fn objective(&self) -> f64 {
        self.cost[..self.n].iter().zip(&self.x[..self.n]).map(|(c, v)| c * v).sum()
    }

    pub(crate) fn outcome(&self, status: LpStatus) -> LpOutcome {
        LpOutcome {
            status,
            x: self.structural().to_vec(),
            objective: if status == LpStatus::Optimal { self.objective() } else { f64::NAN },
            iterations: self.iterations,
        }
    }

    fn is_basic(&self, j: usize) -> bool {
        self.row_of[j] != usize::MAX
    }

    /// Full solve from the current basis: phase 1 then phase 2, with a
    /// refactorization retry if the final residual check fails.
    pub(crate) fn solve(&mut self) -> LpStatus {
        for _attempt in 0..3 {
            match self.phase1() {
                LpStatus::Optimal => {}
                other => return other,
            }
            let st = self.phase2();
            if st != LpStatus::Optimal {
                return st;
            }
            if self.residual() <= 1e-9 * (1.0 + self.scale()) {
                return LpStatus::Optimal;
            }
            if !self.refactor() {
                return LpStatus::NumericalFailure;
            }
        }
        LpStatus::NumericalFailure
    }

    /// Changes the bounds of structural column `j`, keeping the tableau valid.
    pub(crate) fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
        if !self.is_basic(j) {
            let old = self.x[j];
            let new = if old < lo || old > hi || !(old == lo || old == hi) {
                if (old - lo).abs() <= (old - hi).abs() || !hi.is_finite() {
                    if lo.is_finite() {
                        lo
                    } else {
                        initial_value(lo, hi)
                    }
                } else {
                    hi
                }
            } else {
                old
            };
            let delta = new - old;
            if delta != 0.0 {
                self.x[j] = new;
                for i in 0..self.m {
                    let a = self.t[i * self.nc + j];
                    if a != 0.0 {
                        self.x[self.basis[i]] -= a * delta;
                    }
                }
            }
        }
    }

    /// Reoptimizes after bound changes: dual simplex when the basis is dual
    /// feasible, otherwise a fresh two-phase run from the current basis.
    pub(crate) fn reoptimize(&mut self) -> LpStatus {
        self.recompute_reduced_costs();
        if self.dual_feasible() {
            match self.dual_simplex() {
                LpStatus::Optimal => {}
                LpStatus::NumericalFailure => return self.solve(),
                other => return other,
            }
        }
        self.solve()
    }

    fn scale(&self) -> f64 {
        self.rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Max row residual of the original system plus bound violations.
    fn residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.m {
            let ax: f64 = self.rows[i].iter().zip(&self.x[..self.n]).map(|(a, v)| a * v).sum();
            worst = worst.max((ax + self.x[self.n + i] - self.rhs[i]).abs());
        }
        for j in 0..self.nc {
            worst = worst.max(self.lo[j] - self.x[j]).max(self.x[j] - self.hi[j]);
        }
        worst
    }

    /// Rebuilds `B^{-1}[A | I]` and basic values from the original data.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let mut bmat = DenseMatrix::zeros(m, m);
        for (k, &col) in self.basis.iter().enumerate() {
            for i in 0..m {
                bmat[(i, k)] = self.original(i, col);
            }
        }
        // columns of B^{-1} via unit solves
        let mut binv = DenseMatrix::zeros(m, m);
        for k in 0..m {
            let mut e = vec![0.0; m];
            e[k] = 1.0;
            let Some(col) = lu_solve(&bmat, &e) else {
                return false;
            };
            for i in 0..m {
                binv[(i, k)] = col[i];
            }
        }
        let mut t = vec![0.0; m * self.nc];
        for i in 0..m {
            for k in 0..m {
                let f = binv[(i, k)];
                if f == 0.0 {
                    continue;
                }
                for j in 0..self.n {
                    t[i * self.nc + j] += f * self.rows[k][j];
                }
                t[i * self.nc + self.n + k] += f;
            }
        }
        self.t = t;
        // basic values: B x_B = b - N x_N
        let mut r = self.rhs.clone();
        for j in 0..self.nc {
            if self.is_basic(j) || self.x[j] == 0.0 {
                continue;
            }
            for (i, ri) in r.iter_mut().enumerate() {
                *ri -= self.original(i, j) * self.x[j];
            }
        }
        for i in 0..m {
            self.x[self.basis[i]] = (0..m).map(|k| binv[(i, k)] * r[k]).sum();
        }
        true
    }

    fn original(&self, i: usize, j: usize) -> f64 {
        if j < self.n {
            self.rows[i][j]
        } else if j - self.n == i {
            1.0
        } else {
            0.0
        }
    }

    fn recompute_reduced_costs(&mut self) {
        let nc = self.nc;
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[i * nc..(i + 1) * nc];
            for (dj, &a) in self.d.iter_mut().zip(row) {
                *dj -= cb * a;
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    fn can_increase(&self, j: usize) -> bool {
        self.x[j] < self.hi[j] - FEAS_TOL
    }

    fn can_decrease(&self, j: usize) -> bool {
        self.x[j] > self.lo[j] + FEAS_TOL
    }

    fn dual_feasible(&self) -> bool {
        (0..self.nc).all(|j| {
            if self.is_basic(j) || self.lo[j] == self.hi[j] {
                return true;
            }
            let dj = self.d[j];
            !((dj < -OPT_TOL && self.can_increase(j)) || (dj > OPT_TOL && self.can_decrease(j)))
        })
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lo[j] - FEAS_TOL {
            self.lo[j] - v
        } else if v > self.hi[j] + FEAS_TOL {
            v - self.hi[j]
        } else {
            0.0
        }
    }

    fn phase1(&mut self) -> LpStatus {
        let nc = self.nc;
        let mut dir_cost = vec![0.0; nc];
        loop {
            let mut any = false;
            for c in dir_cost.iter_mut() {
                *c = 0.0;
            }
            for i in 0..self.m {
                let b = self.basis[i];
                let v = self.x[b];
                let w = if v < self.lo[b] - FEAS_TOL {
                    -1.0
                } else if v > self.hi[b] + FEAS_TOL {
                    1.0
                } else {
                    0.0
                };
                if w != 0.0 {
                    any = true;
                    let row = &self.t[i * nc..(i + 1) * nc];
                    for (c, &a) in dir_cost.iter_mut().zip(row) {
                        *c -= w * a;
                    }
                }
            }
            if !any {
                return LpStatus::Optimal;
            }
            if self.iterations >= self.max_iterations {
                return LpStatus::NumericalFailure;
            }
            // entering column by largest improving phase-1 reduced cost
            let mut best: Option<(usize, f64, f64)> = None;
            for j in 0..nc {
                if self.is_basic(j) {
                    continue;
                }
                let dj = dir_cost[j];
                let dir = if dj < -OPT_TOL && self.can_increase(j) {
                    1.0
                } else if dj > OPT_TOL && self.can_decrease(j) {
                    -1.0
                } else {
                    continue;
                };
                if best.map_or(true, |(_, _, s)| dj.abs() > s) {
                    best = Some((j, dir, dj.abs()));
                }
            }
            let Some((q, dir, _)) = best else {
                return LpStatus::Infeasible;
            };
            let (theta, leave) = self.ratio_test(q, dir, true, false);
            if !theta.is_finite() {
                return LpStatus::NumericalFailure;
            }
            self.step(q, dir, theta, leave);
        }
    }

    fn phase2(&mut self) -> LpStatus {
        self.recompute_reduced_costs();
        let mut stalled = 0usize;
        let mut since_refresh = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return LpStatus::NumericalFailure;
            }
            if since_refresh >= 64 {
                self.recompute_reduced_costs();
                since_refresh = 0;
            }
            let bland = stalled >= STALL_LIMIT;
            let mut best: Option<(usize, f64, f64)> = None;
            for j in 0..self.nc {
                if self.is_basic(j) {
                    continue;
                }
                let dj = self.d[j];
                let dir = if dj < -OPT_TOL && self.can_increase(j) {
                    1.0
                } else if dj > OPT_TOL && self.can_decrease(j) {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    best = Some((j, dir, dj.abs()));
                    break;
                }
                if best.map_or(true, |(_, _, s)| dj.abs() > s) {
                    best = Some((j, dir, dj.abs()));
                }
            }
            let Some((q, dir, _)) = best else {
                return LpStatus::Optimal;
            };
            let (theta, leave) = self.ratio_test(q, dir, false, bland);
            if !theta.is_finite() {
                return LpStatus::Unbounded;
            }
            if theta <= FEAS_TOL {
                stalled += 1;
            } else {
                stalled = 0;
            }
            self.step(q, dir, theta, leave);
            since_refresh += 1;
        }
    }

    /// Returns the step length and the leaving row with its target bound
    /// (`None` means the entering column flips to its opposite bound).
    fn ratio_test(&self, q: usize, dir: f64, phase1: bool, bland: bool) -> (f64, Option<(usize, f64)>) {
        let nc = self.nc;
        let mut theta = f64::INFINITY;
        let mut leave: Option<(usize, f64)> = None;
        let mut leave_piv = 0.0;
        if self.lo[q].is_finite() && self.hi[q].is_finite() {
            theta = self.hi[q] - self.lo[q];
        }
        for i in 0..self.m {
            let alpha = dir * self.t[i * nc + q];
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let b = self.basis[i];
            let (v, l, u) = (self.x[b], self.lo[b], self.hi[b]);
            let (limit, target) = if alpha > 0.0 {
                if phase1 && v > u + FEAS_TOL {
                    ((v - u) / alpha, u)
                } else if !phase1 || v >= l - FEAS_TOL {
                    if l.is_finite() {
                        (((v - l) / alpha).max(0.0), l)
                    } else {
                        continue;
                    }
                } else {
                    continue;
                }
            } else if phase1 && v < l - FEAS_TOL {
                ((l - v) / -alpha, l)
            } else if !phase1 || v <= u + FEAS_TOL {
                if u.is_finite() {
                    (((u - v) / -alpha).max(0.0), u)
                } else {
                    continue;
                }
            } else {
                continue;
            };
            let better = if limit < theta - 1e-12 {
                true
            } else if limit <= theta + 1e-12 {
                match leave {
                    None => false,
                    Some((r, _)) => {
                        if bland {
                            b < self.basis[r]
                        } else {
                            alpha.abs() > leave_piv
                        }
                    }
                }
            } else {
                false
            };
            if better {
                theta = limit;
                leave = Some((i, target));
                leave_piv = alpha.abs();
            }
        }
        (theta, leave)
    }

    fn step(&mut self, q: usize, dir: f64, theta: f64, leave: Option<(usize, f64)>) {
        self.iterations += 1;
        let nc = self.nc;
        if theta != 0.0 {
            for i in 0..self.m {
                let a = self.t[i * nc + q];
                if a != 0.0 {
                    self.x[self.basis[i]] -= dir * theta * a;
                }
            }
            self.x[q] += dir * theta;
        }
        match leave {
            None => {
                // bound flip
                self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
            }
            Some((r, target)) => {
                let out = self.basis[r];
                self.pivot(r, q);
                self.x[out] = target;
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let nc = self.nc;
        let piv = self.t[r * nc + q];
        let inv = 1.0 / piv;
        let mut nz: Vec<usize> = Vec::new();
        {
            let row = &mut self.t[r * nc..(r + 1) * nc];
            for (j, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    if v.abs() < DROP_TOL {
                        *v = 0.0;
                    } else {
                        nz.push(j);
                    }
                }
            }
            row[q] = 1.0;
        }
        let pivot_row: Vec<f64> = nz.iter().map(|&j| self.t[r * nc + j]).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * nc + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * nc..(i + 1) * nc];
            for (&j, &p) in nz.iter().zip(&pivot_row) {
                let v = row[j] - f * p;
                row[j] = if v.abs() < DROP_TOL { 0.0 } else { v };
            }
            row[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for (&j, &p) in nz.iter().zip(&pivot_row) {
                self.d[j] -= f * p;
            }
        }
        self.d[q] = 0.0;
        let out = self.basis[r];
        self.row_of[out] = usize::MAX;
        self.row_of[q] = r;
        self.basis[r] = q;
        self.d[out] = -f * self.t[r * nc + out];
    }

    fn dual_simplex(&mut self) -> LpStatus {
        let nc = self.nc;
        loop {
            if self.iterations >= self.max_iterations {
                return LpStatus::NumericalFailure;
            }
            // leaving row: largest bound violation
            let mut r_best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let inf = self.infeasibility(self.basis[i]);
                if inf > 0.0 && r_best.map_or(true, |(_, v)| inf > v) {
                    r_best = Some((i, inf));
                }
            }
            let Some((r, _)) = r_best else {
                return LpStatus::Optimal;
            };
            let b = self.basis[r];
            let below = self.x[b] < self.lo[b];
            let target = if below { self.lo[b] } else { self.hi[b] };
            // x_b moves by -t_rj * delta_j; need increase when below.
            let mut best: Option<(usize, f64)> = None;
            for j in 0..nc {
                if self.is_basic(j) || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a = self.t[r * nc + j];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let want_up = if below { a < 0.0 } else { a > 0.0 };
                let ok = if want_up { self.can_increase(j) } else { self.can_decrease(j) };
                if !ok {
                    continue;
                }
                let ratio = self.d[j].abs() / a.abs();
                if best.map_or(true, |(_, br)| ratio < br - 1e-12) {
                    best = Some((j, ratio));
                }
            }
            let Some((q, _)) = best else {
                return LpStatus::Infeasible;
            };
            let a = self.t[r * nc + q];
            let delta = (self.x[b] - target) / a;
            self.iterations += 1;
            for i in 0..self.m {
                let ai = self.t[i * nc + q];
                if ai != 0.0 {
                    self.x[self.basis[i]] -= ai * delta;
                }
            }
            self.x[q] += delta;
            self.pivot(r, q);
            self.x[b] = target;
        }
    }
}

fn initial_value(lo: f64, hi: f64) -> f64 {
    if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(n: usize) -> LinearProgram {
        LinearProgram {
            cost: vec![0.0; n],
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            ..Default::default()
        }
    }

    #[test]
    fn single_variable_upper_row() {
        let mut p = lp(1);
        p.cost[0] = -1.0;
        p.add_row(&[(0, 1.0)], Relation::Le, 3.0);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.x[0] - 3.0).abs() < 1e-12);
        assert!((out.objective + 3.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut p = lp(1);
        p.add_row(&[(0, 1.0)], Relation::Le, -1.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut p = lp(2);
        p.cost = vec![-1.0, 0.0];
        p.add_row(&[(0, 1.0), (1, -1.0)], Relation::Le, 1.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min |x - 2| via x - 2 = p - q
        let mut p = LinearProgram::default();
        let x = p.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
        let pp = p.add_var(1.0, 0.0, f64::INFINITY);
        let q = p.add_var(1.0, 0.0, f64::INFINITY);
        p.add_row(&[(x, 1.0), (pp, -1.0), (q, 1.0)], Relation::Eq, 2.0);
        p.add_row(&[(x, 1.0)], Relation::Ge, 5.0);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.objective - 3.0).abs() < 1e-9);
        assert!(p.max_violation(&out.x) < 1e-9);
    }

    #[test]
    fn dual_reoptimize_after_bound_change() {
        let mut p = lp(2);
        p.cost = vec![-1.0, -1.0];
        p.upper = vec![1.0, 1.0];
        p.add_row(&[(0, 1.0), (1, 1.0)], Relation::Le, 1.5);
        let mut s = Simplex::new(&p);
        assert_eq!(s.solve(), LpStatus::Optimal);
        assert!((s.objective() + 1.5).abs() < 1e-12);
        s.set_bounds(0, 0.0, 0.0);
        assert_eq!(s.reoptimize(), LpStatus::Optimal);
        assert!((s.objective() + 1.0).abs() < 1e-12);
        s.set_bounds(1, 0.0, 0.0);
        s.set_bounds(0, 1.0, 1.0);
        assert_eq!(s.reoptimize(), LpStatus::Optimal);
        assert!((s.objective() + 1.0).abs() < 1e-12);
    }
}

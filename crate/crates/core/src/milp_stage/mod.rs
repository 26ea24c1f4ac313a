//! Mixed-integer linear stage: a road-frame double integrator with big-M
//! obstacle disjunctions, solved by branch and bound. Its incumbent seeds the
//! nonlinear stage.

mod bnb;
mod build;
pub mod lp;
mod seed;

use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::prelude::*;
use crate::world::WorldError;

pub use bnb::{solve_milp, MilpOptions, MilpOutcome, MilpStatus};
pub use build::{build_milp, MilpConfig, MilpLayout, MilpWeights};
pub use lp::{solve_lp, LinearProgram, LpError, LpOutcome, LpStatus, Relation};
pub use seed::extract_seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MilpError {
    #[error("prediction for obstacle {id} has {got} states, expected {expected}")]
    HorizonMismatch { id: String, expected: usize, got: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("rule encoding: {0}")]
    Rule(String),
    #[error("binary column {0} must have bounds within [0, 1]")]
    BinaryBounds(usize),
    #[error("LP relaxation is unbounded")]
    Unbounded,
    #[error("simplex numerical failure")]
    NumericalFailure,
    #[error("no incumbent available")]
    NoIncumbent,
    #[error("problem has no planning layout")]
    NoLayout,
}

/// A linear program with binary columns and a name for every column.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MilpProblem {
    pub lp: LinearProgram,
    pub binary: Vec<bool>,
    pub names: Vec<String>,
    /// Column indices of the planning variables when built from a scenario.
    pub layout: Option<MilpLayout>,
}

impl MilpProblem {
    pub fn add_var(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> usize {
        self.binary.push(false);
        self.names.push(name.into());
        self.lp.add_var(cost, lower, upper)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> usize {
        self.binary.push(true);
        self.names.push(name.into());
        self.lp.add_var(0.0, 0.0, 1.0)
    }

    pub fn add_row(&mut self, terms: &[(usize, f64)], rel: Relation, rhs: f64) -> usize {
        self.lp.add_row(terms, rel, rhs)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn num_binaries(&self) -> usize {
        self.binary.iter().filter(|&&b| b).count()
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        self.lp.validate()?;
        let n = self.lp.num_vars();
        if self.binary.len() != n || self.names.len() != n {
            return Err(LpError::Dimension("binary mask / names vs columns".into()).into());
        }
        for j in 0..n {
            if self.binary[j] && (self.lp.lower[j] < 0.0 || self.lp.upper[j] > 1.0) {
                return Err(MilpError::BinaryBounds(j));
            }
        }
        Ok(())
    }

    /// Interval of `Σ c_j x_j` over the column bounds.
    pub fn affine_range(&self, terms: &[(usize, f64)]) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for &(j, c) in terms {
            let (l, u) = (self.lp.lower[j], self.lp.upper[j]);
            if c >= 0.0 {
                lo += c * l;
                hi += c * u;
            } else {
                lo += c * u;
                hi += c * l;
            }
        }
        (lo, hi)
    }

    /// Human-readable dump: objective, one line per row, bounds, binaries.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let term = |out: &mut String, c: f64, j: usize| {
            let _ = write!(out, " {} {}*{}", if c < 0.0 { "-" } else { "+" }, c.abs(), self.names[j]);
        };
        out.push_str("minimize\n ");
        for (j, &c) in self.lp.cost.iter().enumerate() {
            if c != 0.0 {
                term(&mut out, c, j);
            }
        }
        out.push_str("\nsubject to\n");
        for (i, row) in self.lp.rows.iter().enumerate() {
            let _ = write!(out, " r{i}:");
            for (j, &c) in row.iter().enumerate() {
                if c != 0.0 {
                    term(&mut out, c, j);
                }
            }
            let _ = writeln!(out, " {} {}", self.lp.relations[i].symbol(), self.lp.rhs[i]);
        }
        out.push_str("bounds\n");
        for j in 0..self.lp.num_vars() {
            let _ = writeln!(out, " {} <= {} <= {}", self.lp.lower[j], self.names[j], self.lp.upper[j]);
        }
        out.push_str("binary\n");
        for j in (0..self.lp.num_vars()).filter(|&j| self.binary[j]) {
            let _ = writeln!(out, " {}", self.names[j]);
        }
        out
    }
}

/// Big-M for switching off `expr (<=|>=) rhs` where `expr` ranges over
/// `[lo, hi]`: the range plus `margin + 1`.
pub fn big_m(lo: f64, hi: f64, rhs: f64, margin: f64) -> f64 {
    (hi - lo).max(hi - rhs).max(rhs - lo).max(0.0) + margin + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_dump_names_columns() {
        let mut p = MilpProblem::default();
        let x = p.add_var("x", 1.0, 0.0, 4.0);
        let b = p.add_binary("b");
        p.add_row(&[(x, 1.0), (b, -2.0)], Relation::Le, 1.0);
        let t = p.to_text();
        assert!(t.contains("r0: + 1*x - 2*b <= 1"), "{t}");
        assert!(t.contains("binary\n b\n"));
        assert_eq!(p.column("b"), Some(1));
        assert_eq!(p.affine_range(&[(x, -1.0), (b, 3.0)]), (-4.0, 3.0));
    }

    #[test]
    fn big_m_covers_range() {
        assert_eq!(big_m(0.0, 10.0, 4.0, 0.5), 11.5);
        assert_eq!(big_m(0.0, 10.0, 30.0, 0.0), 31.0);
    }
}

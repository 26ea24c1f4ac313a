//! Bounded temporal-logic rules: parsing, printing, MILP encoding and
//! quantitative (robustness) semantics.
//!
//! Grammar, with `&` binding tighter than `|`:
//!
//! ```text
//! phi  := conj ("|" conj)*
//! conj := atom ("&" atom)*
//! atom := "G[" int "," int "](" phi ")" | "F[" int "," int "](" phi ")"
//!       | "(" phi ")" | pred
//! pred := affine ("<=" | ">=") affine
//! ```

mod encode;
mod parse;

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::prelude::*;

pub use encode::{encode_rule, Encoded, SignalBinding, EPSILON};
pub use parse::{parse_rule, parse_rules};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuleError {
    #[error("syntax error at column {col}: {msg}")]
    Syntax { col: usize, msg: String },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<RuleError>,
    },
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("interval [{a},{b}] at step {at} exceeds horizon {horizon}")]
    Interval { a: usize, b: usize, at: usize, horizon: usize },
    #[error("signal `{0}` is unbounded; big-M cannot be derived")]
    Unbounded(String),
    #[error("trace has no value for `{signal}` at step {step}")]
    MissingStep { signal: String, step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    Le,
    Ge,
}

/// `Σ coeff·signal (<=|>=) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub terms: Vec<(f64, String)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StlFormula {
    Pred(Predicate),
    And(Vec<StlFormula>),
    Or(Vec<StlFormula>),
    Always { a: usize, b: usize, child: Box<StlFormula> },
    Eventually { a: usize, b: usize, child: Box<StlFormula> },
}

impl StlFormula {
    pub fn depth(&self) -> usize {
        match self {
            StlFormula::Pred(_) => 0,
            StlFormula::And(c) | StlFormula::Or(c) => 1 + c.iter().map(Self::depth).max().unwrap_or(0),
            StlFormula::Always { child, .. } | StlFormula::Eventually { child, .. } => 1 + child.depth(),
        }
    }

    /// Last step the formula reads when evaluated at step 0.
    pub fn horizon(&self) -> usize {
        match self {
            StlFormula::Pred(_) => 0,
            StlFormula::And(c) | StlFormula::Or(c) => c.iter().map(Self::horizon).max().unwrap_or(0),
            StlFormula::Always { b, child, .. } | StlFormula::Eventually { b, child, .. } => b + child.horizon(),
        }
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    write!(f, "{v}")
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (c, name)) in self.terms.iter().enumerate() {
            let neg = c.is_sign_negative();
            let mag = c.abs();
            match (i, neg) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            if mag != 1.0 {
                write_number(f, mag)?;
                f.write_str("*")?;
            }
            f.write_str(name)?;
        }
        if self.terms.is_empty() {
            f.write_str("0")?;
        }
        f.write_str(match self.cmp {
            Cmp::Le => " <= ",
            Cmp::Ge => " >= ",
        })?;
        write_number(f, self.rhs)
    }
}

impl fmt::Display for StlFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StlFormula::Pred(p) => write!(f, "{p}"),
            StlFormula::And(c) => {
                for (i, ch) in c.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" & ")?;
                    }
                    if matches!(ch, StlFormula::And(_) | StlFormula::Or(_)) {
                        write!(f, "({ch})")?;
                    } else {
                        write!(f, "{ch}")?;
                    }
                }
                Ok(())
            }
            StlFormula::Or(c) => {
                for (i, ch) in c.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    if matches!(ch, StlFormula::Or(_)) {
                        write!(f, "({ch})")?;
                    } else {
                        write!(f, "{ch}")?;
                    }
                }
                Ok(())
            }
            StlFormula::Always { a, b, child } => write!(f, "G[{a},{b}]({child})"),
            StlFormula::Eventually { a, b, child } => write!(f, "F[{a},{b}]({child})"),
        }
    }
}

/// Per-signal values for steps `0..=N`.
pub type SignalTrace = BTreeMap<String, Vec<f64>>;

/// Quantitative semantics evaluated at step 0: positive iff satisfied.
pub fn robustness(formula: &StlFormula, trace: &SignalTrace) -> Result<f64, RuleError> {
    robustness_at(formula, trace, 0)
}

pub fn robustness_at(formula: &StlFormula, trace: &SignalTrace, k: usize) -> Result<f64, RuleError> {
    Ok(match formula {
        StlFormula::Pred(p) => {
            let mut lhs = 0.0;
            for (c, name) in &p.terms {
                let series = trace.get(name).ok_or_else(|| RuleError::UnknownSignal(name.clone()))?;
                let v = series.get(k).ok_or_else(|| RuleError::MissingStep {
                    signal: name.clone(),
                    step: k,
                })?;
                lhs += c * v;
            }
            match p.cmp {
                Cmp::Le => p.rhs - lhs,
                Cmp::Ge => lhs - p.rhs,
            }
        }
        StlFormula::And(c) => {
            let mut r = f64::INFINITY;
            for ch in c {
                r = r.min(robustness_at(ch, trace, k)?);
            }
            r
        }
        StlFormula::Or(c) => {
            let mut r = f64::NEG_INFINITY;
            for ch in c {
                r = r.max(robustness_at(ch, trace, k)?);
            }
            r
        }
        StlFormula::Always { a, b, child } => {
            let mut r = f64::INFINITY;
            for j in *a..=*b {
                r = r.min(robustness_at(child, trace, k + j)?);
            }
            r
        }
        StlFormula::Eventually { a, b, child } => {
            let mut r = f64::NEG_INFINITY;
            for j in *a..=*b {
                r = r.max(robustness_at(child, trace, k + j)?);
            }
            r
        }
    })
}

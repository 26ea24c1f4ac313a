use super::{Cmp, Predicate, RuleError, StlFormula};
use crate::milp_stage::{big_m, MilpProblem, Relation};
use crate::prelude::*;

/// Strictness slack separating satisfied from violated predicates.
pub const EPSILON: f64 = 1e-4;

/// Signal name to per-step linear expression over MILP columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SignalBinding {
    signals: BTreeMap<String, Vec<Vec<(usize, f64)>>>,
}

impl SignalBinding {
    pub fn insert(&mut self, name: impl Into<String>, per_step: Vec<Vec<(usize, f64)>>) {
        self.signals.insert(name.into(), per_step);
    }

    pub fn get(&self, name: &str) -> Option<&[Vec<(usize, f64)>]> {
        self.signals.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.signals.keys().map(String::as_str)
    }
}

/// What an encoding added to the problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    /// Satisfaction literal of the whole formula, fixed to 1.
    pub root: usize,
    pub binaries: Vec<usize>,
    pub rows: usize,
}

struct Encoder<'a> {
    binding: &'a SignalBinding,
    horizon: usize,
    problem: &'a mut MilpProblem,
    binaries: Vec<usize>,
    rows: usize,
}

impl Encoder<'_> {
    fn fresh_name(&mut self, kind: &str) -> String {
        format!("rule_{kind}_{}", self.problem.lp.num_vars())
    }

    fn expr(&self, p: &Predicate, k: usize) -> Result<Vec<(usize, f64)>, RuleError> {
        let mut out = Vec::new();
        for (c, name) in &p.terms {
            let series = self.binding.get(name).ok_or_else(|| RuleError::UnknownSignal(name.clone()))?;
            let terms = series.get(k).ok_or_else(|| RuleError::MissingStep {
                signal: name.clone(),
                step: k,
            })?;
            out.extend(terms.iter().map(|&(j, v)| (j, c * v)));
        }
        Ok(out)
    }

    fn literal(&mut self, f: &StlFormula, k: usize) -> Result<usize, RuleError> {
        match f {
            StlFormula::Pred(p) => {
                let e = self.expr(p, k)?;
                let (lo, hi) = self.problem.affine_range(&e);
                if !lo.is_finite() || !hi.is_finite() {
                    let name = p.terms.first().map(|t| t.1.clone()).unwrap_or_default();
                    return Err(RuleError::Unbounded(name));
                }
                let m = big_m(lo, hi, p.rhs, EPSILON);
                let name = self.fresh_name("pred");
                let z = self.problem.add_binary(name);
                self.binaries.push(z);
                let mut with_z = e.clone();
                match p.cmp {
                    Cmp::Le => {
                        // z = 1  =>  e <= rhs;   z = 0  =>  e >= rhs + eps
                        with_z.push((z, m));
                        self.problem.add_row(&with_z, Relation::Le, p.rhs + m);
                        self.problem.add_row(&with_z, Relation::Ge, p.rhs + EPSILON);
                    }
                    Cmp::Ge => {
                        // z = 1  =>  e >= rhs;   z = 0  =>  e <= rhs - eps
                        with_z.push((z, -m));
                        self.problem.add_row(&with_z, Relation::Ge, p.rhs - m);
                        self.problem.add_row(&with_z, Relation::Le, p.rhs - EPSILON);
                    }
                }
                self.rows += 2;
                Ok(z)
            }
            StlFormula::And(children) => {
                let lits = children
                    .iter()
                    .map(|c| self.literal(c, k))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(self.conjunction(&lits))
            }
            StlFormula::Or(children) => {
                let lits = children
                    .iter()
                    .map(|c| self.literal(c, k))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(self.disjunction(&lits))
            }
            StlFormula::Always { a, b, child } | StlFormula::Eventually { a, b, child } => {
                if k + b > self.horizon {
                    return Err(RuleError::Interval {
                        a: *a,
                        b: *b,
                        at: k,
                        horizon: self.horizon,
                    });
                }
                let lits = (*a..=*b)
                    .map(|j| self.literal(child, k + j))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(if matches!(f, StlFormula::Always { .. }) {
                    self.conjunction(&lits)
                } else {
                    self.disjunction(&lits)
                })
            }
        }
    }

    fn composite(&mut self, kind: &str) -> usize {
        let name = self.fresh_name(kind);
        self.problem.add_var(name, 0.0, 0.0, 1.0)
    }

    fn conjunction(&mut self, lits: &[usize]) -> usize {
        let z = self.composite("and");
        for &l in lits {
            self.problem.add_row(&[(z, 1.0), (l, -1.0)], Relation::Le, 0.0);
            self.rows += 1;
        }
        z
    }

    fn disjunction(&mut self, lits: &[usize]) -> usize {
        let z = self.composite("or");
        let mut terms: Vec<(usize, f64)> = lits.iter().map(|&l| (l, -1.0)).collect();
        terms.push((z, 1.0));
        self.problem.add_row(&terms, Relation::Le, 0.0);
        self.rows += 1;
        z
    }
}

/// Appends the satisfaction encoding of `formula` at step 0 to `problem`.
///
/// Predicates get a binary literal with two big-M rows (exact equivalence up
/// to `EPSILON`); conjunctions and disjunctions get continuous literals in
/// `[0, 1]` constrained only from above, which is enough because the root is
/// fixed to 1 and nothing rewards a false literal.
pub fn encode_rule(
    formula: &StlFormula,
    binding: &SignalBinding,
    horizon: usize,
    problem: &mut MilpProblem,
) -> Result<Encoded, RuleError> {
    if formula.horizon() > horizon {
        let (a, b) = match formula {
            StlFormula::Always { a, b, .. } | StlFormula::Eventually { a, b, .. } => (*a, *b),
            _ => (0, formula.horizon()),
        };
        return Err(RuleError::Interval { a, b, at: 0, horizon });
    }
    // Work on a copy so a failed encoding leaves the problem untouched.
    let mut scratch = problem.clone();
    let mut enc = Encoder {
        binding,
        horizon,
        problem: &mut scratch,
        binaries: Vec::new(),
        rows: 0,
    };
    let root = enc.literal(formula, 0)?;
    let (binaries, rows) = (enc.binaries, enc.rows);
    scratch.lp.lower[root] = 1.0;
    scratch.lp.upper[root] = 1.0;
    *problem = scratch;
    Ok(Encoded { root, binaries, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::parse_rule;

    fn line_problem(n: usize) -> (MilpProblem, SignalBinding) {
        let mut p = MilpProblem::default();
        let cols: Vec<usize> = (0..=n).map(|k| p.add_var(format!("x_{k}"), 0.0, -10.0, 10.0)).collect();
        let mut b = SignalBinding::default();
        b.insert("n", cols.iter().map(|&c| vec![(c, 1.0)]).collect());
        b.insert("vs", cols.iter().map(|&c| vec![(c, 1.0)]).collect());
        (p, b)
    }

    #[test]
    fn always_has_no_disjunction_rows() {
        let n = 6;
        let (mut p, b) = line_problem(n);
        let f = parse_rule(&format!("G[0,{n}](n <= 1.5)")).unwrap();
        let e = encode_rule(&f, &b, n, &mut p).unwrap();
        assert_eq!(e.binaries.len(), n + 1);
        assert_eq!(e.rows, 2 * (n + 1) + (n + 1));
        assert_eq!(p.lp.lower[e.root], 1.0);
        assert!(p.lp.relations.iter().all(|r| *r != Relation::Eq));
    }

    #[test]
    fn eventually_adds_one_or_row() {
        let (mut p, b) = line_problem(4);
        let f = parse_rule("F[0,2](vs >= 5)").unwrap();
        let e = encode_rule(&f, &b, 4, &mut p).unwrap();
        assert_eq!(e.binaries.len(), 3);
        assert_eq!(e.rows, 3 * 2 + 1);
    }

    #[test]
    fn errors_leave_problem_untouched() {
        let (mut p, b) = line_problem(4);
        let before = p.clone();
        let f = parse_rule("G[0,9](n <= 1)").unwrap();
        assert!(matches!(encode_rule(&f, &b, 4, &mut p), Err(RuleError::Interval { .. })));
        let f = parse_rule("G[0,2](q <= 1)").unwrap();
        assert_eq!(encode_rule(&f, &b, 4, &mut p), Err(RuleError::UnknownSignal("q".into())));
        assert_eq!(p, before);
    }
}

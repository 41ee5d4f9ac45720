//! Safe-query check.
//!
//! Rules, applied to a normalized formula (no `FORALL`, flattened `AND`):
//!
//! * every `OR` joins two formulas with the same free variables;
//! * in every maximal conjunction, each variable free in some conjunct is
//!   limited: free in a non-negated conjunct that is not a comparison, or
//!   equated to a constant, or equated to a limited variable;
//! * `NOT` only occurs as a conjunct of such a conjunction.
//!
//! A formula that is not an `AND` counts as a one-conjunct conjunction when
//! it is the whole query, a disjunct, or a quantifier body. The operand of a
//! negation is not a conjunction context of its own (its variables are
//! limited by the enclosing conjunction) unless it is itself an `AND`.

use std::collections::BTreeSet;
use std::fmt;

use crate::formula::{CompOp, Formula, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SafetyRule {
    /// Disjuncts with different free variables.
    DisjunctVars,
    /// A variable not limited in its maximal conjunction.
    UnlimitedVar,
    /// A negation outside a conjunction.
    BadNegation,
    /// A universal quantifier survived normalization.
    NotNormalized,
}

impl SafetyRule {
    pub fn id(self) -> &'static str {
        match self {
            SafetyRule::DisjunctVars => "R2-disjunct-vars",
            SafetyRule::UnlimitedVar => "R3-unlimited-var",
            SafetyRule::BadNegation => "R4-bad-negation",
            SafetyRule::NotNormalized => "R1-not-normalized",
        }
    }
}

impl fmt::Display for SafetyRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub rule: SafetyRule,
    /// Path from the root, e.g. `/and[1]/not`.
    pub path: String,
    /// The offending subformula, printed.
    pub subformula: String,
    pub variable: Option<String>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {} `{}`", self.rule, self.path, self.subformula)?;
        if let Some(v) = &self.variable {
            write!(f, " (variable {})", v)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SafetyReport {
    pub violations: Vec<Violation>,
}

impl SafetyReport {
    pub fn is_safe(&self) -> bool {
        self.violations.is_empty()
    }

    /// The outermost violation, if any.
    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

/// Variables limited by the conjuncts of one maximal conjunction (least
/// fixed point).
pub fn limited_variables(conjuncts: &[Formula]) -> BTreeSet<String> {
    let mut limited = BTreeSet::new();
    for c in conjuncts {
        match c {
            Formula::Not(_) => {}
            Formula::Compare { left, op: CompOp::Eq, right } => match (left, right) {
                (Term::Var(x), Term::Const(_)) | (Term::Const(_), Term::Var(x)) => {
                    limited.insert(x.clone());
                }
                _ => {}
            },
            Formula::Compare { .. } => {}
            other => limited.extend(other.free_variables()),
        }
    }
    loop {
        let mut grew = false;
        for c in conjuncts {
            if let Formula::Compare {
                left: Term::Var(x),
                op: CompOp::Eq,
                right: Term::Var(y),
            } = c
            {
                if limited.contains(y) && limited.insert(x.clone()) {
                    grew = true;
                }
                if limited.contains(x) && limited.insert(y.clone()) {
                    grew = true;
                }
            }
        }
        if !grew {
            return limited;
        }
    }
}

/// Check a normalized formula for safety.
pub fn check_safe(f: &Formula) -> SafetyReport {
    let mut report = SafetyReport::default();
    check_context(f, "", &mut report);
    report
}

/// `f` stands in a position that opens a maximal conjunction.
fn check_context(f: &Formula, path: &str, report: &mut SafetyReport) {
    if !matches!(f, Formula::And(_)) {
        check_limited(std::slice::from_ref(f), path, report);
    }
    check_node(f, path, false, report);
}

fn check_limited(conjuncts: &[Formula], path: &str, report: &mut SafetyReport) {
    let limited = limited_variables(conjuncts);
    let mut reported = BTreeSet::new();
    for (i, c) in conjuncts.iter().enumerate() {
        for v in c.free_variables() {
            if !limited.contains(&v) && reported.insert(v.clone()) {
                let sub_path = if conjuncts.len() > 1 {
                    format!("{}/and[{}]", path, i)
                } else {
                    path_or_root(path)
                };
                report.violations.push(Violation {
                    rule: SafetyRule::UnlimitedVar,
                    path: sub_path,
                    subformula: c.to_string(),
                    variable: Some(v),
                });
            }
        }
    }
}

fn path_or_root(path: &str) -> String {
    if path.is_empty() {
        "/".to_string()
    } else {
        path.to_string()
    }
}

/// Structural checks below `f`. `in_conjunction` marks a direct conjunct of
/// an `AND`.
fn check_node(f: &Formula, path: &str, in_conjunction: bool, report: &mut SafetyReport) {
    match f {
        Formula::Atom { .. } | Formula::Compare { .. } => {}
        Formula::Not(g) => {
            if !in_conjunction {
                report.violations.push(Violation {
                    rule: SafetyRule::BadNegation,
                    path: path_or_root(path),
                    subformula: f.to_string(),
                    variable: None,
                });
            }
            let inner = format!("{}/not", path);
            if matches!(**g, Formula::And(_)) {
                check_context(g, &inner, report);
            } else {
                check_node(g, &inner, false, report);
            }
        }
        Formula::And(parts) => {
            check_limited(parts, path, report);
            for (i, p) in parts.iter().enumerate() {
                check_node(p, &format!("{}/and[{}]", path, i), true, report);
            }
        }
        Formula::Or(a, b) => {
            if a.free_variable_set() != b.free_variable_set() {
                report.violations.push(Violation {
                    rule: SafetyRule::DisjunctVars,
                    path: path_or_root(path),
                    subformula: f.to_string(),
                    variable: a
                        .free_variable_set()
                        .symmetric_difference(&b.free_variable_set())
                        .next()
                        .cloned(),
                });
            }
            check_context(a, &format!("{}/or[0]", path), report);
            check_context(b, &format!("{}/or[1]", path), report);
        }
        Formula::Exists(v, g) => check_context(g, &format!("{}/exists({})", path, v), report),
        Formula::Forall(v, g) => {
            report.violations.push(Violation {
                rule: SafetyRule::NotNormalized,
                path: path_or_root(path),
                subformula: f.to_string(),
                variable: Some(v.clone()),
            });
            check_context(g, &format!("{}/forall({})", path, v), report);
        }
    }
}

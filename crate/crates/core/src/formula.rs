//! Domain relational calculus formulas.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::value::Value;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(Value),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }

    pub fn as_const(&self) -> Option<&Value> {
        match self {
            Term::Const(c) => Some(c),
            Term::Var(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => write!(f, "{}", c),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CompOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl CompOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompOp::Eq => "=",
            CompOp::Ne => "!=",
            CompOp::Lt => "<",
            CompOp::Gt => ">",
            CompOp::Le => "<=",
            CompOp::Ge => ">=",
        }
    }

    /// Ordering comparisons are restricted to integers.
    pub fn is_ordering(self) -> bool {
        !matches!(self, CompOp::Eq | CompOp::Ne)
    }

    /// Evaluate on two constants. Ordering across types never holds.
    pub fn holds(self, left: &Value, right: &Value) -> bool {
        match self {
            CompOp::Eq => left == right,
            CompOp::Ne => left != right,
            _ => match (left, right) {
                (Value::Int(a), Value::Int(b)) => match self {
                    CompOp::Lt => a < b,
                    CompOp::Gt => a > b,
                    CompOp::Le => a <= b,
                    CompOp::Ge => a >= b,
                    CompOp::Eq | CompOp::Ne => unreachable!(),
                },
                (Value::Str(a), Value::Str(b)) => match self {
                    CompOp::Lt => a < b,
                    CompOp::Gt => a > b,
                    CompOp::Le => a <= b,
                    CompOp::Ge => a >= b,
                    CompOp::Eq | CompOp::Ne => unreachable!(),
                },
                _ => false,
            },
        }
    }
}

impl fmt::Display for CompOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// A well-formed DRC formula.
///
/// `And` holds at least two conjuncts and never has an `And` child when built
/// through [`Formula::and`] / [`Formula::conjunction`] or the parser.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Atom { predicate: String, args: Vec<Term> },
    Compare { left: Term, op: CompOp, right: Term },
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Exists(String, Box<Formula>),
    Forall(String, Box<Formula>),
}

impl Formula {
    pub fn atom(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Formula::Atom {
            predicate: predicate.into(),
            args,
        }
    }

    pub fn compare(left: Term, op: CompOp, right: Term) -> Self {
        Formula::Compare { left, op, right }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn exists(var: impl Into<String>, body: Formula) -> Self {
        Formula::Exists(var.into(), Box::new(body))
    }

    pub fn forall(var: impl Into<String>, body: Formula) -> Self {
        Formula::Forall(var.into(), Box::new(body))
    }

    /// Existentially close `body` over `vars`, outermost first.
    pub fn exists_all<I, S>(vars: I, body: Formula) -> Self
    where
        I: IntoIterator<Item = S>,
        I::IntoIter: DoubleEndedIterator,
        S: Into<String>,
    {
        vars.into_iter()
            .rev()
            .fold(body, |acc, v| Formula::exists(v, acc))
    }

    /// Binary conjunction, flattened.
    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::conjunction(vec![a, b]).expect("two conjuncts")
    }

    /// Flattened conjunction; `None` for an empty list, the formula itself
    /// for a single conjunct.
    pub fn conjunction(parts: Vec<Formula>) -> Option<Formula> {
        let mut flat = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                Formula::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => None,
            1 => flat.pop(),
            _ => Some(Formula::And(flat)),
        }
    }

    /// Conjuncts of a maximal conjunction; a non-`And` formula is its own
    /// single conjunct.
    pub fn conjuncts(&self) -> &[Formula] {
        match self {
            Formula::And(parts) => parts,
            other => std::slice::from_ref(other),
        }
    }

    /// Atomic formula or negated atomic formula.
    pub fn is_literal(&self) -> bool {
        match self {
            Formula::Atom { .. } | Formula::Compare { .. } => true,
            Formula::Not(inner) => matches!(**inner, Formula::Atom { .. } | Formula::Compare { .. }),
            _ => false,
        }
    }

    /// Free variables in order of first syntactic occurrence.
    pub fn free_variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut bound = Vec::new();
        collect_free(self, &mut bound, &mut out);
        out
    }

    pub fn free_variable_set(&self) -> BTreeSet<String> {
        self.free_variables().into_iter().collect()
    }

    /// Every variable bound by some quantifier.
    pub fn bound_variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            if let Formula::Exists(v, _) | Formula::Forall(v, _) = f {
                out.insert(v.clone());
            }
        });
        out
    }

    /// Every variable occurring anywhere, free or bound.
    pub fn all_variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| match f {
            Formula::Atom { args, .. } => {
                out.extend(args.iter().filter_map(|t| t.as_var().map(str::to_string)))
            }
            Formula::Compare { left, right, .. } => {
                out.extend([left, right].into_iter().filter_map(|t| t.as_var().map(str::to_string)))
            }
            Formula::Exists(v, _) | Formula::Forall(v, _) => {
                out.insert(v.clone());
            }
            _ => {}
        });
        out
    }

    /// Constants mentioned in atoms or comparisons.
    pub fn constants(&self) -> BTreeSet<Value> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| match f {
            Formula::Atom { args, .. } => {
                out.extend(args.iter().filter_map(|t| t.as_const().cloned()))
            }
            Formula::Compare { left, right, .. } => {
                out.extend([left, right].into_iter().filter_map(|t| t.as_const().cloned()))
            }
            _ => {}
        });
        out
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Formula)) {
        f(self);
        match self {
            Formula::Atom { .. } | Formula::Compare { .. } => {}
            Formula::Not(g) | Formula::Exists(_, g) | Formula::Forall(_, g) => g.visit(f),
            Formula::And(parts) => parts.iter().for_each(|p| p.visit(f)),
            Formula::Or(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Rewrite `FORALL X. G` as `NOT EXISTS X. NOT G` and flatten nested
    /// conjunctions. A double negation introduced by the rewrite itself
    /// (`FORALL X. NOT H`) collapses to `NOT EXISTS X. H`.
    pub fn normalize(&self) -> Formula {
        match self {
            Formula::Atom { .. } | Formula::Compare { .. } => self.clone(),
            Formula::Not(g) => Formula::not(g.normalize()),
            Formula::And(parts) => {
                Formula::conjunction(parts.iter().map(Formula::normalize).collect())
                    .expect("non-empty conjunction")
            }
            Formula::Or(a, b) => Formula::or(a.normalize(), b.normalize()),
            Formula::Exists(v, g) => Formula::exists(v.clone(), g.normalize()),
            Formula::Forall(v, g) => {
                let negated = match g.normalize() {
                    Formula::Not(h) => *h,
                    other => Formula::not(other),
                };
                Formula::not(Formula::exists(v.clone(), negated))
            }
        }
    }

    pub fn is_normalized(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |f| match f {
            Formula::Forall(..) => ok = false,
            Formula::And(parts) if parts.len() < 2 || parts.iter().any(|p| matches!(p, Formula::And(_))) => {
                ok = false
            }
            _ => {}
        });
        ok
    }

    /// Replace free occurrences of variables according to `map`, renaming
    /// bound variables that would capture a substituted variable.
    pub fn substitute(&self, map: &BTreeMap<String, Term>) -> Formula {
        let mut avoid: BTreeSet<String> = map
            .values()
            .filter_map(|t| t.as_var().map(str::to_string))
            .collect();
        avoid.extend(self.all_variables());
        substitute_in(self, map, &mut avoid)
    }
}

fn collect_free(f: &Formula, bound: &mut Vec<String>, out: &mut Vec<String>) {
    let note = |t: &Term, bound: &Vec<String>, out: &mut Vec<String>| {
        if let Term::Var(v) = t {
            if !bound.contains(v) && !out.contains(v) {
                out.push(v.clone());
            }
        }
    };
    match f {
        Formula::Atom { args, .. } => args.iter().for_each(|t| note(t, bound, out)),
        Formula::Compare { left, right, .. } => {
            note(left, bound, out);
            note(right, bound, out);
        }
        Formula::Not(g) => collect_free(g, bound, out),
        Formula::And(parts) => parts.iter().for_each(|p| collect_free(p, bound, out)),
        Formula::Or(a, b) => {
            collect_free(a, bound, out);
            collect_free(b, bound, out);
        }
        Formula::Exists(v, g) | Formula::Forall(v, g) => {
            bound.push(v.clone());
            collect_free(g, bound, out);
            bound.pop();
        }
    }
}

fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    (1..)
        .map(|i| format!("{}{}", base, i))
        .find(|n| !avoid.contains(n))
        .expect("unbounded supply of names")
}

fn substitute_in(f: &Formula, map: &BTreeMap<String, Term>, avoid: &mut BTreeSet<String>) -> Formula {
    let sub = |t: &Term| match t {
        Term::Var(v) => map.get(v).cloned().unwrap_or_else(|| t.clone()),
        c => c.clone(),
    };
    match f {
        Formula::Atom { predicate, args } => Formula::atom(predicate.clone(), args.iter().map(sub).collect()),
        Formula::Compare { left, op, right } => Formula::compare(sub(left), *op, sub(right)),
        Formula::Not(g) => Formula::not(substitute_in(g, map, avoid)),
        Formula::And(parts) => Formula::conjunction(parts.iter().map(|p| substitute_in(p, map, avoid)).collect())
            .expect("non-empty conjunction"),
        Formula::Or(a, b) => Formula::or(substitute_in(a, map, avoid), substitute_in(b, map, avoid)),
        Formula::Exists(v, g) | Formula::Forall(v, g) => {
            let mut inner = map.clone();
            inner.remove(v);
            let captures = inner.values().any(|t| t.as_var() == Some(v.as_str()));
            let (name, body) = if captures {
                let fresh = fresh_name(v, avoid);
                avoid.insert(fresh.clone());
                inner.insert(v.clone(), Term::Var(fresh.clone()));
                (fresh, substitute_in(g, &inner, avoid))
            } else {
                (v.clone(), substitute_in(g, &inner, avoid))
            };
            if matches!(f, Formula::Exists(..)) {
                Formula::exists(name, body)
            } else {
                Formula::forall(name, body)
            }
        }
    }
}

// Printing mirrors the parser's precedence: NOT > AND > OR, quantifier bodies
// extend to the right, so quantifiers in operand position get parentheses.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom { predicate, args } => {
                write!(f, "{}(", predicate)?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}", a)?;
                }
                f.write_str(")")
            }
            Formula::Compare { left, op, right } => write!(f, "{} {} {}", left, op, right),
            Formula::Not(g) => match **g {
                Formula::Atom { .. } | Formula::Compare { .. } | Formula::Not(_) => write!(f, "NOT {}", g),
                _ => write!(f, "NOT ({})", g),
            },
            Formula::And(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" AND ")?;
                    }
                    match p {
                        Formula::Atom { .. } | Formula::Compare { .. } | Formula::Not(_) => write!(f, "{}", p)?,
                        _ => write!(f, "({})", p)?,
                    }
                }
                Ok(())
            }
            Formula::Or(a, b) => {
                match **a {
                    Formula::Exists(..) | Formula::Forall(..) => write!(f, "({})", a)?,
                    _ => write!(f, "{}", a)?,
                }
                f.write_str(" OR ")?;
                match **b {
                    Formula::Exists(..) | Formula::Forall(..) | Formula::Or(..) => write!(f, "({})", b),
                    _ => write!(f, "{}", b),
                }
            }
            Formula::Exists(v, g) => write!(f, "EXISTS {}. {}", v, g),
            Formula::Forall(v, g) => write!(f, "FORALL {}. {}", v, g),
        }
    }
}

/// A query: an ordered head of free variables and a body formula.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QueryDecl {
    pub name: String,
    pub head: Vec<String>,
    pub body: Formula,
}

impl QueryDecl {
    /// Build a query, checking that `head` lists exactly the free variables
    /// of `body`.
    pub fn new(name: impl Into<String>, head: Vec<String>, body: Formula) -> Result<Self, HeadMismatch> {
        let free = body.free_variable_set();
        let declared: BTreeSet<String> = head.iter().cloned().collect();
        if declared.len() != head.len() || declared != free {
            return Err(HeadMismatch {
                declared: head,
                free: body.free_variables(),
            });
        }
        Ok(QueryDecl {
            name: name.into(),
            head,
            body,
        })
    }

    /// A query whose head is the body's free variables in first-occurrence
    /// order.
    pub fn inferred(name: impl Into<String>, body: Formula) -> Self {
        QueryDecl {
            name: name.into(),
            head: body.free_variables(),
            body,
        }
    }

    pub fn normalized(&self) -> QueryDecl {
        QueryDecl {
            name: self.name.clone(),
            head: self.head.clone(),
            body: self.body.normalize(),
        }
    }
}

impl fmt::Display for QueryDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}) := {}", self.name, self.head.join(", "), self.body)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("declared variables ({}) do not match the free variables of the body ({})", declared.join(", "), free.join(", "))]
pub struct HeadMismatch {
    pub declared: Vec<String>,
    pub free: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(name: &str) -> Term {
        Term::var(name)
    }

    fn weekday(p: &str) -> Formula {
        Formula::atom("WeekdayTV", vec![v(p), v("SN"), v("V"), v("S")])
    }

    fn f1() -> Formula {
        Formula::exists_all(
            ["S", "SN", "V"],
            Formula::and(
                weekday("P"),
                Formula::compare(v("V"), CompOp::Ge, Term::Const(Value::Int(10))),
            ),
        )
    }

    #[test]
    fn free_variables_of_f1() {
        assert_eq!(f1().free_variables(), ["P"]);
        let cmp = Formula::compare(v("V"), CompOp::Ge, Term::Const(Value::Int(10)));
        assert_eq!(cmp.free_variables(), ["V"]);
        let closed = Formula::exists("X", Formula::atom("TV-Program", vec![v("X")]));
        assert!(closed.free_variables().is_empty());
    }

    #[test]
    fn free_variables_first_occurrence_order() {
        let f = Formula::and(
            Formula::atom("R", vec![v("B"), v("A")]),
            Formula::exists("B", Formula::atom("S", vec![v("B"), v("C"), v("A")])),
        );
        assert_eq!(f.free_variables(), ["B", "A", "C"]);
    }

    #[test]
    fn normalize_forall() {
        let g = Formula::atom("T", vec![v("X")]);
        let f = Formula::forall("X", g.clone());
        assert_eq!(f.normalize(), Formula::not(Formula::exists("X", Formula::not(g.clone()))));
        let f = Formula::forall("X", Formula::not(g.clone()));
        assert_eq!(f.normalize(), Formula::not(Formula::exists("X", g)));
    }

    #[test]
    fn normalize_flattens() {
        let (a, b, c) = (
            Formula::atom("A", vec![v("X")]),
            Formula::atom("B", vec![v("X")]),
            Formula::atom("C", vec![v("X")]),
        );
        let nested = Formula::And(vec![Formula::And(vec![a.clone(), b.clone()]), c.clone()]);
        assert_eq!(nested.normalize(), Formula::And(vec![a, b, c]));
        assert_eq!(f1().normalize(), f1());
        assert!(f1().is_normalized());
        assert!(!nested.is_normalized());
    }

    #[test]
    fn display_f1() {
        assert_eq!(
            f1().to_string(),
            "EXISTS S. EXISTS SN. EXISTS V. WeekdayTV(P, SN, V, S) AND V >= 10"
        );
        let both = Formula::and(f1(), Formula::not(f1()));
        assert!(both.to_string().starts_with("(EXISTS S."));
        assert!(both.to_string().contains("AND NOT (EXISTS S."));
    }

    #[test]
    fn substitution_avoids_capture() {
        // EXISTS Y. R(X, Y) with X := Y must rename the bound Y.
        let f = Formula::exists("Y", Formula::atom("R", vec![v("X"), v("Y")]));
        let map = BTreeMap::from([("X".to_string(), v("Y"))]);
        let g = f.substitute(&map);
        assert_eq!(g.free_variables(), ["Y"]);
        match g {
            Formula::Exists(bound, body) => {
                assert_ne!(bound, "Y");
                assert_eq!(*body, Formula::atom("R", vec![v("Y"), v(&bound)]));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn head_must_match_free_variables() {
        assert!(QueryDecl::new("q", vec!["P".into()], f1()).is_ok());
        assert!(QueryDecl::new("q", vec!["P".into(), "Q".into()], f1()).is_err());
        assert!(QueryDecl::new("q", vec![], f1()).is_err());
        assert!(QueryDecl::new("q", vec!["P".into(), "P".into()], f1()).is_err());
    }

    #[test]
    fn ordering_comparisons_on_mixed_types_never_hold() {
        assert!(CompOp::Ge.holds(&Value::Int(12), &Value::Int(10)));
        assert!(!CompOp::Ge.holds(&Value::Int(12), &Value::str("CBS")));
        assert!(CompOp::Ne.holds(&Value::Int(12), &Value::str("12")));
        assert!(!CompOp::Eq.holds(&Value::Int(12), &Value::str("12")));
    }
}

//! Reference domains: the population a query's frequency is measured
//! against, built as a union over the query's parts.

use std::collections::BTreeSet;
use std::fmt;

use crate::er::{constant_equality, equality_cover};
use crate::eval::tuples;
use crate::formula::Formula;
use crate::schema::DatabaseInstance;
use crate::value::{Tuple, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReferenceDomain {
    pub variables: Vec<String>,
    pub members: BTreeSet<Tuple>,
}

impl ReferenceDomain {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn to_csv(&self) -> String {
        crate::eval::Relation::new(self.variables.clone(), self.members.clone()).to_csv()
    }
}

/// Which case of the recursive definition produced a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clause {
    Atom,
    AtomMissingVars,
    ConstantEquality,
    OtherComparison,
    EqualityConjunction,
    Conjunction,
    Disjunction,
    Negation,
    Exists,
    ExistsOverHead,
}

impl Clause {
    fn label(self) -> &'static str {
        match self {
            Clause::Atom => "atom: projection of its tuples",
            Clause::AtomMissingVars => "atom without all variables: empty",
            Clause::ConstantEquality => "X = c: {c}",
            Clause::OtherComparison => "comparison: empty",
            Clause::EqualityConjunction => "conjunction with X = c for every variable: rest + constants",
            Clause::Conjunction => "conjunction: union",
            Clause::Disjunction => "disjunction: union",
            Clause::Negation => "negation: domain of the negand",
            Clause::Exists => "exists over a non-head variable: domain of the body",
            Clause::ExistsOverHead => "exists over a head variable: empty",
        }
    }
}

/// One step of the recursion, with the members it contributes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplainNode {
    pub clause: Clause,
    pub formula: String,
    pub members: BTreeSet<Tuple>,
    pub children: Vec<ExplainNode>,
}

impl ExplainNode {
    fn write(&self, out: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        let shown: Vec<String> = self.members.iter().map(|t| render_tuple(t)).collect();
        writeln!(
            out,
            "{:indent$}{}  [{}]  {{{}}}",
            "",
            self.formula,
            self.clause.label(),
            shown.join(", "),
            indent = depth * 2
        )?;
        for c in &self.children {
            c.write(out, depth + 1)?;
        }
        Ok(())
    }
}

impl fmt::Display for ExplainNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, 0)
    }
}

fn render_tuple(t: &[Value]) -> String {
    if t.len() == 1 {
        return t[0].to_string();
    }
    let parts: Vec<String> = t.iter().map(Value::to_string).collect();
    format!("({})", parts.join(", "))
}

/// Reference domain of `f` for `vars`.
pub fn reference_domain(inst: &DatabaseInstance, f: &Formula, vars: &[String]) -> ReferenceDomain {
    explain_domain(inst, f, vars).0
}

/// Reference domain together with the recursion tree that built it.
pub fn explain_domain(inst: &DatabaseInstance, f: &Formula, vars: &[String]) -> (ReferenceDomain, ExplainNode) {
    let node = build(inst, &f.normalize(), vars);
    let domain = ReferenceDomain {
        variables: vars.to_vec(),
        members: node.members.clone(),
    };
    (domain, node)
}

fn leaf(clause: Clause, f: &Formula, members: BTreeSet<Tuple>) -> ExplainNode {
    ExplainNode {
        clause,
        formula: f.to_string(),
        members,
        children: Vec::new(),
    }
}

fn union_node(clause: Clause, f: &Formula, children: Vec<ExplainNode>) -> ExplainNode {
    let members = children.iter().flat_map(|c| c.members.iter().cloned()).collect();
    ExplainNode {
        clause,
        formula: f.to_string(),
        members,
        children,
    }
}

fn build(inst: &DatabaseInstance, f: &Formula, vars: &[String]) -> ExplainNode {
    match f {
        Formula::Atom { args, .. } => {
            let occurs = |x: &String| args.iter().any(|t| t.as_var() == Some(x.as_str()));
            if !vars.iter().all(occurs) {
                return leaf(Clause::AtomMissingVars, f, BTreeSet::new());
            }
            // The atom on its own, before any sibling conjunct filters it.
            let head = f.free_variables();
            let rel = tuples(inst, f, &head).expect("a lone atom is safe");
            let members = rel.project(vars).expect("variables occur in the atom").into_rows();
            leaf(Clause::Atom, f, members)
        }
        Formula::Compare { .. } => match (constant_equality(f), vars) {
            (Some((x, c)), [v]) if x == v => leaf(Clause::ConstantEquality, f, BTreeSet::from([vec![c.clone()]])),
            _ => leaf(Clause::OtherComparison, f, BTreeSet::new()),
        },
        Formula::And(parts) => match equality_cover(parts, vars) {
            Some(cover) => {
                let used: BTreeSet<usize> = cover.iter().map(|(i, _)| *i).collect();
                let constants: Tuple = cover.iter().map(|(_, c)| (*c).clone()).collect();
                let rest: Vec<Formula> = parts
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !used.contains(i))
                    .map(|(_, p)| p.clone())
                    .collect();
                let mut children = Vec::new();
                if let Some(rest) = Formula::conjunction(rest) {
                    children.push(build(inst, &rest, vars));
                }
                let mut node = union_node(Clause::EqualityConjunction, f, children);
                node.members.insert(constants);
                node
            }
            None => union_node(Clause::Conjunction, f, parts.iter().map(|p| build(inst, p, vars)).collect()),
        },
        Formula::Or(a, b) => union_node(Clause::Disjunction, f, vec![build(inst, a, vars), build(inst, b, vars)]),
        Formula::Not(g) => union_node(Clause::Negation, f, vec![build(inst, g, vars)]),
        Formula::Exists(y, g) => {
            if vars.contains(y) {
                leaf(Clause::ExistsOverHead, f, BTreeSet::new())
            } else {
                union_node(Clause::Exists, f, vec![build(inst, g, vars)])
            }
        }
        Formula::Forall(..) => build(inst, &f.normalize(), vars),
    }
}

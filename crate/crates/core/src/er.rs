//! Entity variables, ER queries and validity for a variable list.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::formula::{CompOp, Formula, Term};
use crate::safety::{check_safe, SafetyReport};
use crate::schema::DatabaseInstance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErFailure {
    QuantifiedOver,
    BadComparisonOp,
    NonEntityConstant,
    NonEntityField,
    EquatedToNonCandidate,
}

impl ErFailure {
    pub fn id(self) -> &'static str {
        match self {
            ErFailure::QuantifiedOver => "quantified-over",
            ErFailure::BadComparisonOp => "bad-comparison-op",
            ErFailure::NonEntityConstant => "non-entity-constant",
            ErFailure::NonEntityField => "non-entity-field",
            ErFailure::EquatedToNonCandidate => "equated-to-non-candidate",
        }
    }
}

impl fmt::Display for ErFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErReport {
    pub is_er: bool,
    pub entity_vars: BTreeSet<String>,
    /// Reasons, per free variable that is not an entity variable.
    pub failures: Vec<(String, ErFailure)>,
}

#[derive(Debug, thiserror::Error)]
pub enum ErError {
    #[error("query is not safe: {}", .0.first().map(|v| v.to_string()).unwrap_or_default())]
    NotSafe(SafetyReport),
}

/// Why each variable of `f` fails to be an entity variable candidate.
fn candidate_failures(f: &Formula, inst: &DatabaseInstance) -> BTreeMap<String, BTreeSet<ErFailure>> {
    let schema = inst.schema();
    let mut fails: BTreeMap<String, BTreeSet<ErFailure>> = BTreeMap::new();
    for v in f.all_variables() {
        fails.entry(v).or_default();
    }
    f.visit(&mut |g| match g {
        Formula::Exists(v, _) | Formula::Forall(v, _) => {
            fails.entry(v.clone()).or_default().insert(ErFailure::QuantifiedOver);
        }
        Formula::Atom { predicate, args } => {
            for (i, t) in args.iter().enumerate() {
                if let Term::Var(v) = t {
                    if !schema.is_entity_position(predicate, i) {
                        fails.entry(v.clone()).or_default().insert(ErFailure::NonEntityField);
                    }
                }
            }
        }
        Formula::Compare { left, op, right } => {
            for (a, b) in [(left, right), (right, left)] {
                let Term::Var(v) = a else { continue };
                let entry = fails.entry(v.clone()).or_default();
                if !matches!(op, CompOp::Eq | CompOp::Ne) {
                    entry.insert(ErFailure::BadComparisonOp);
                }
                if let Term::Const(c) = b {
                    if !inst.is_entity_constant(c) {
                        entry.insert(ErFailure::NonEntityConstant);
                    }
                }
            }
        }
        _ => {}
    });
    fails
}

/// Variables of `f` that satisfy every entity-candidate condition.
pub fn entity_variable_candidates(f: &Formula, inst: &DatabaseInstance) -> BTreeSet<String> {
    candidate_failures(f, inst)
        .into_iter()
        .filter(|(_, r)| r.is_empty())
        .map(|(v, _)| v)
        .collect()
}

/// Pairs of variables compared with each other anywhere in `f`.
fn variable_comparisons(f: &Formula) -> Vec<(String, String)> {
    let mut out = Vec::new();
    f.visit(&mut |g| {
        if let Formula::Compare {
            left: Term::Var(x),
            right: Term::Var(y),
            ..
        } = g
        {
            out.push((x.clone(), y.clone()));
        }
    });
    out
}

/// Entity variables: candidates only ever compared with other candidates.
pub fn entity_variables(f: &Formula, inst: &DatabaseInstance) -> BTreeSet<String> {
    entity_vars_and_failures(f, inst).0
}

fn entity_vars_and_failures(
    f: &Formula,
    inst: &DatabaseInstance,
) -> (BTreeSet<String>, BTreeMap<String, BTreeSet<ErFailure>>) {
    let mut fails = candidate_failures(f, inst);
    let candidates: BTreeSet<String> = fails
        .iter()
        .filter(|(_, r)| r.is_empty())
        .map(|(v, _)| v.clone())
        .collect();
    for (x, y) in variable_comparisons(f) {
        for (a, b) in [(&x, &y), (&y, &x)] {
            if candidates.contains(a) && !candidates.contains(b) {
                fails
                    .get_mut(a)
                    .expect("all variables present")
                    .insert(ErFailure::EquatedToNonCandidate);
            }
        }
    }
    let vars = fails
        .iter()
        .filter(|(_, r)| r.is_empty())
        .map(|(v, _)| v.clone())
        .collect();
    (vars, fails)
}

/// Decide whether a safe formula is an ER query.
pub fn is_er_query(f: &Formula, inst: &DatabaseInstance) -> Result<ErReport, ErError> {
    let f = f.normalize();
    let safety = check_safe(&f);
    if !safety.is_safe() {
        return Err(ErError::NotSafe(safety));
    }
    let (entity_vars, fails) = entity_vars_and_failures(&f, inst);
    let mut failures = Vec::new();
    for v in f.free_variables() {
        for r in &fails[&v] {
            failures.push((v.clone(), *r));
        }
    }
    Ok(ErReport {
        is_er: failures.is_empty(),
        entity_vars,
        failures,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidityReport {
    pub valid: bool,
    /// Path and printed subformula of the outermost invalid part.
    pub failure: Option<(String, String)>,
}

/// Decide whether `f` is valid for `vars`: every maximal conjunction binds
/// the whole variable list through one atom or through constant equalities.
///
/// Conjunctions that mix literals with complex conjuncts are valid when some
/// non-negated conjunct is valid; a disjunction needs both sides valid;
/// `EXISTS Y. G` needs `Y` outside `vars` and `G` valid.
pub fn is_valid_for(f: &Formula, vars: &[String]) -> ValidityReport {
    let f = f.normalize();
    match invalid_at(&f, vars, "") {
        None => ValidityReport {
            valid: true,
            failure: None,
        },
        Some(fail) => ValidityReport {
            valid: false,
            failure: Some(fail),
        },
    }
}

/// For each variable, the constant of the first `X = c` conjunct, if all
/// variables have one.
pub(crate) fn equality_cover<'a>(
    conjuncts: &'a [Formula],
    vars: &[String],
) -> Option<Vec<(usize, &'a crate::value::Value)>> {
    vars.iter()
        .map(|x| {
            conjuncts.iter().enumerate().find_map(|(i, c)| {
                constant_equality(c)
                    .filter(|(v, _)| v == x)
                    .map(|(_, value)| (i, value))
            })
        })
        .collect()
}

/// `X = c` or `c = X`.
pub(crate) fn constant_equality(f: &Formula) -> Option<(&str, &crate::value::Value)> {
    match f {
        Formula::Compare {
            left,
            op: CompOp::Eq,
            right,
        } => match (left, right) {
            (Term::Var(x), Term::Const(c)) | (Term::Const(c), Term::Var(x)) => Some((x, c)),
            _ => None,
        },
        _ => None,
    }
}

fn invalid_at(f: &Formula, vars: &[String], path: &str) -> Option<(String, String)> {
    let here = || {
        let p = if path.is_empty() { "/" } else { path };
        Some((p.to_string(), f.to_string()))
    };
    match f {
        Formula::Atom { args, .. } => {
            let occurs = |x: &String| args.iter().any(|t| t.as_var() == Some(x.as_str()));
            if vars.iter().all(occurs) {
                None
            } else {
                here()
            }
        }
        Formula::Compare { .. } => match (constant_equality(f), vars) {
            (Some((x, _)), [v]) if x == v => None,
            _ => here(),
        },
        Formula::Not(_) => here(),
        Formula::And(parts) => {
            if equality_cover(parts, vars).is_some() {
                return None;
            }
            let ok = parts.iter().enumerate().any(|(i, p)| {
                !matches!(p, Formula::Not(_))
                    && invalid_at(p, vars, &format!("{}/and[{}]", path, i)).is_none()
            });
            if ok {
                None
            } else {
                here()
            }
        }
        Formula::Or(a, b) => invalid_at(a, vars, &format!("{}/or[0]", path))
            .or_else(|| invalid_at(b, vars, &format!("{}/or[1]", path))),
        Formula::Exists(y, g) => {
            if vars.contains(y) {
                here()
            } else {
                invalid_at(g, vars, &format!("{}/exists({})", path, y))
            }
        }
        Formula::Forall(..) => invalid_at(&f.normalize(), vars, path),
    }
}

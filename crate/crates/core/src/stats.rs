//! Frequency, support and confidence as exact rationals.

use std::fmt;

use num_rational::Ratio;

use crate::domain::reference_domain;
use crate::er::{is_er_query, is_valid_for, ErError, ErFailure};
use crate::eval::{evaluate, tuples, EvalError};
use crate::formula::{Formula, QueryDecl, Term};
use crate::safety::{check_safe, SafetyReport};
use crate::schema::DatabaseInstance;
use crate::value::Value;

/// `numerator / denominator`, with the reduced value kept alongside.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Frequency {
    pub numerator: u64,
    pub denominator: u64,
    pub value: Ratio<u64>,
}

impl Frequency {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        Frequency {
            numerator,
            denominator,
            value: Ratio::new(numerator, denominator),
        }
    }
}

/// `2/4 = 1/2 (0.500000)`
impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{} = {} ({})",
            self.numerator,
            self.denominator,
            self.value,
            decimal(self.value)
        )
    }
}

/// Six-place decimal rendering, rounded half up, by integer arithmetic.
pub fn decimal(r: Ratio<u64>) -> String {
    let (n, d) = (*r.numer() as u128, *r.denom() as u128);
    let scaled = (n * 1_000_000 * 2 + d) / (2 * d);
    format!("{}.{:06}", scaled / 1_000_000, scaled % 1_000_000)
}

/// Parse `n/d` or `n`.
pub fn parse_ratio(s: &str) -> Option<Ratio<u64>> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let (n, d) = (n.trim().parse().ok()?, d.trim().parse::<u64>().ok()?);
            (d != 0).then(|| Ratio::new(n, d))
        }
        None => s.parse().ok().map(Ratio::from_integer),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("query is not safe: {}", .0.first().map(|v| v.to_string()).unwrap_or_default())]
    NotSafe(SafetyReport),
    #[error("not an ER query: {}", describe_failures(.0))]
    NotEr(Vec<(String, ErFailure)>),
    #[error("query is not valid for ({}): `{}` at {}", .vars.join(", "), .at.1, .at.0)]
    NotValid { vars: Vec<String>, at: (String, String) },
    #[error("reference domain is empty")]
    EmptyDomain,
    #[error("antecedent has no answers; confidence is undefined")]
    ZeroAntecedent,
    #[error("query has no free variables")]
    Closed,
    #[error("consequent variable {0} is not free in the antecedent")]
    RuleShape(String),
    #[error("{0}")]
    Itemset(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn describe_failures(fs: &[(String, ErFailure)]) -> String {
    let parts: Vec<String> = fs.iter().map(|(v, r)| format!("{} ({})", v, r)).collect();
    parts.join(", ")
}

impl From<ErError> for StatsError {
    fn from(e: ErError) -> Self {
        match e {
            ErError::NotSafe(r) => StatsError::NotSafe(r),
        }
    }
}

/// Check that `q` is a safe ER query valid for its head.
pub fn check_er_valid(inst: &DatabaseInstance, q: &QueryDecl) -> Result<(), StatsError> {
    if q.head.is_empty() {
        return Err(StatsError::Closed);
    }
    let report = is_er_query(&q.body, inst)?;
    if !report.is_er {
        return Err(StatsError::NotEr(report.failures));
    }
    let validity = is_valid_for(&q.body, &q.head);
    if let Some(at) = validity.failure {
        return Err(StatsError::NotValid {
            vars: q.head.clone(),
            at,
        });
    }
    Ok(())
}

/// Answers over reference-domain size.
pub fn frequency(inst: &DatabaseInstance, q: &QueryDecl) -> Result<Frequency, StatsError> {
    check_er_valid(inst, q)?;
    let dom = reference_domain(inst, &q.body, &q.head);
    if dom.is_empty() {
        return Err(StatsError::EmptyDomain);
    }
    let answers = evaluate(inst, q)?;
    Ok(Frequency::new(answers.len() as u64, dom.len() as u64))
}

/// `antecedent -> consequent`; the consequent's free variables are among
/// the antecedent's head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErRule {
    pub antecedent: QueryDecl,
    pub consequent: Formula,
}

impl ErRule {
    pub fn new(antecedent: QueryDecl, consequent: Formula) -> Result<Self, StatsError> {
        if let Some(v) = consequent
            .free_variables()
            .into_iter()
            .find(|v| !antecedent.head.contains(v))
        {
            return Err(StatsError::RuleShape(v));
        }
        Ok(ErRule {
            antecedent,
            consequent,
        })
    }

    /// `F AND G` over the antecedent's head.
    pub fn joint(&self) -> QueryDecl {
        QueryDecl {
            name: format!("{}_joint", self.antecedent.name),
            head: self.antecedent.head.clone(),
            body: Formula::and(self.antecedent.body.clone(), self.consequent.clone()),
        }
    }
}

impl fmt::Display for ErRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) -> ({})", self.antecedent.body, self.consequent)
    }
}

pub fn support(inst: &DatabaseInstance, r: &ErRule) -> Result<Frequency, StatsError> {
    frequency(inst, &r.joint())
}

/// Answers of `F AND G` over answers of `F`, both over `F`'s head.
pub fn confidence(inst: &DatabaseInstance, r: &ErRule) -> Result<Frequency, StatsError> {
    let joint = r.joint();
    let report = check_safe(&joint.body.normalize());
    if !report.is_safe() {
        return Err(StatsError::NotSafe(report));
    }
    let base = evaluate(inst, &r.antecedent)?.len() as u64;
    if base == 0 {
        return Err(StatsError::ZeroAntecedent);
    }
    let both = tuples(inst, &joint.body, &joint.head)?.len() as u64;
    Ok(Frequency::new(both, base))
}

/// Frequency of transactions containing every listed item, over a schema
/// with `Transactions(number)` and `TransItems(TransNumber, ItemName)`.
pub fn itemset_frequency(inst: &DatabaseInstance, items: &[Value]) -> Result<Frequency, StatsError> {
    let schema = inst.schema();
    for (table, arity) in [("Transactions", 1), ("TransItems", 2)] {
        match schema.table(table) {
            Some(t) if t.arity() == arity => {}
            _ => return Err(StatsError::Itemset(format!("schema needs table {} of arity {}", table, arity))),
        }
    }
    let x = || Term::var("X");
    let mut parts = vec![Formula::atom("Transactions", vec![x()])];
    parts.extend(
        items
            .iter()
            .map(|i| Formula::atom("TransItems", vec![x(), Term::Const(i.clone())])),
    );
    let body = Formula::conjunction(parts).expect("at least one conjunct");
    let q = QueryDecl {
        name: "itemset".to_string(),
        head: vec!["X".to_string()],
        body,
    };
    frequency(inst, &q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_formula, parse_query_file, resolve_query, QueryRegistry};
    use crate::schema::{load_instance, load_instance_dir, load_schema};
    use std::path::Path;

    fn load(name: &str) -> DatabaseInstance {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
        let schema = load_schema(&std::fs::read_to_string(dir.join("schema.json")).unwrap()).unwrap();
        load_instance_dir(&schema, &dir).unwrap()
    }

    fn tv() -> (DatabaseInstance, QueryRegistry) {
        let inst = load("tv");
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/tv");
        let reg = parse_query_file(&std::fs::read_to_string(dir.join("queries.drc")).unwrap(), inst.schema()).unwrap();
        (inst, reg)
    }

    fn r(n: u64, d: u64) -> Ratio<u64> {
        Ratio::new(n, d)
    }

    fn fr(inst: &DatabaseInstance, reg: &QueryRegistry, q: &str) -> Ratio<u64> {
        frequency(inst, reg.get(q).unwrap()).unwrap().value
    }

    fn rule(inst: &DatabaseInstance, reg: &QueryRegistry, a: &str, c: &str) -> ErRule {
        let c = parse_formula(c, inst.schema(), reg).unwrap();
        ErRule::new(reg.get(a).unwrap().clone(), c).unwrap()
    }

    #[test]
    fn single_variable_frequencies() {
        let (inst, reg) = tv();
        let f1 = frequency(&inst, reg.get("F1").unwrap()).unwrap();
        assert_eq!((f1.numerator, f1.denominator), (2, 2));
        assert_eq!(f1.to_string(), "2/2 = 1 (1.000000)");
        assert_eq!(fr(&inst, &reg, "F2"), r(1, 2));
        assert_eq!(fr(&inst, &reg, "F1andF2"), r(1, 4));
        assert_eq!(fr(&inst, &reg, "F1orF2"), r(3, 4));
        assert_eq!(fr(&inst, &reg, "F1andNotF2"), r(1, 4));
    }

    #[test]
    fn pair_frequencies() {
        let (inst, reg) = tv();
        assert_eq!(fr(&inst, &reg, "G1"), r(2, 3));
        assert_eq!(fr(&inst, &reg, "G2"), r(1, 4));
        assert_eq!(fr(&inst, &reg, "G1andG2"), r(1, 5));
        assert_eq!(fr(&inst, &reg, "G1orG2"), r(2, 5));
        assert_eq!(fr(&inst, &reg, "G1andNotG2"), r(1, 5));
    }

    #[test]
    fn rule_statistics() {
        let (inst, reg) = tv();
        let f1f2 = rule(&inst, &reg, "F1", "F2(P)");
        assert_eq!(support(&inst, &f1f2).unwrap().value, r(1, 4));
        assert_eq!(confidence(&inst, &f1f2).unwrap().value, r(1, 2));
        let f1f1 = rule(&inst, &reg, "F1", "F1(P)");
        assert_eq!(support(&inst, &f1f1).unwrap().value, r(1, 1));
        assert_eq!(confidence(&inst, &f1f1).unwrap().value, r(1, 1));
        let g = rule(&inst, &reg, "G1", "G2(P, SN)");
        assert_eq!(support(&inst, &g).unwrap().value, r(1, 5));
        let none = rule(&inst, &reg, "F1", r#"F2(P) AND P = "Simpsons""#);
        assert_eq!(confidence(&inst, &none).unwrap().value, r(0, 1));
    }

    #[test]
    fn rule_shape_and_zero_antecedent() {
        let (inst, reg) = tv();
        let c = parse_formula("G2(P, SN)", inst.schema(), &reg).unwrap();
        assert!(matches!(
            ErRule::new(reg.get("F1").unwrap().clone(), c),
            Err(StatsError::RuleShape(v)) if v == "SN"
        ));
        let empty = resolve_query(r#"F1(P) AND P = "Simpsons""#, inst.schema(), &reg).unwrap();
        let c = parse_formula("F2(P)", inst.schema(), &reg).unwrap();
        let rr = ErRule::new(empty, c).unwrap();
        assert!(matches!(confidence(&inst, &rr), Err(StatsError::ZeroAntecedent)));
    }

    #[test]
    fn precondition_errors() {
        let (inst, reg) = tv();
        let q = |s: &str| resolve_query(s, inst.schema(), &reg).unwrap();
        assert!(matches!(frequency(&inst, &q("NOT F1(P)")), Err(StatsError::NotSafe(_))));
        let not_er = q("EXISTS S. EXISTS SN. WeekdayTV(\"Gilmore\",SN,V,S)");
        assert!(matches!(frequency(&inst, &not_er), Err(StatsError::NotEr(_))));
        let invalid = q("TV-Program(X) AND X = Y");
        assert!(matches!(frequency(&inst, &invalid), Err(StatsError::NotValid { .. })));
        assert!(matches!(frequency(&inst, &q("EXISTS X. TV-Program(X)")), Err(StatsError::Closed)));

        let schema = inst.schema().clone();
        let tables = schema.tables().iter().map(|t| (t.name.clone(), Vec::new())).collect();
        let empty = load_instance(&schema, tables).unwrap();
        assert!(matches!(frequency(&empty, reg.get("F1").unwrap()), Err(StatsError::EmptyDomain)));
    }

    #[test]
    fn itemsets() {
        let inst = load("transactions");
        assert_eq!(itemset_frequency(&inst, &[Value::str("cola")]).unwrap().value, r(1, 2));
        assert_eq!(itemset_frequency(&inst, &[]).unwrap().value, r(1, 1));
        let absent = itemset_frequency(&inst, &[Value::str("caviar")]).unwrap();
        assert_eq!((absent.numerator, absent.denominator), (0, 4));
        let pair = itemset_frequency(&inst, &[Value::str("cola"), Value::str("chips")]).unwrap();
        assert_eq!(pair.value, r(1, 4));
        let (tv, _) = tv();
        assert!(matches!(itemset_frequency(&tv, &[]), Err(StatsError::Itemset(_))));
    }

    #[test]
    fn exhaustive_disjunction() {
        let inst = load("students");
        let f = resolve_query(
            r#"q(X) := (Gender(X, "female") OR Gender(X, "male"))"#,
            inst.schema(),
            &QueryRegistry::new(),
        )
        .unwrap();
        assert_eq!(frequency(&inst, &f).unwrap().value, r(1, 1));
    }

    #[test]
    fn decimals_and_ratios() {
        assert_eq!(decimal(r(2, 3)), "0.666667");
        assert_eq!(decimal(r(1, 1)), "1.000000");
        assert_eq!(decimal(r(0, 5)), "0.000000");
        assert_eq!(decimal(r(1, 8)), "0.125000");
        assert_eq!(parse_ratio("1/4"), Some(r(1, 4)));
        assert_eq!(parse_ratio(" 2 / 4 "), Some(r(1, 2)));
        assert_eq!(parse_ratio("1"), Some(r(1, 1)));
        assert_eq!(parse_ratio("1/0"), None);
        assert_eq!(parse_ratio("x"), None);
    }
}

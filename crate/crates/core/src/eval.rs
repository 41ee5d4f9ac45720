//! Query evaluation: an algebraic evaluator for safe queries and a
//! brute-force enumerator used as its oracle.

use std::collections::BTreeSet;

use crate::formula::{CompOp, Formula, QueryDecl, Term};
use crate::safety::{check_safe, SafetyReport};
use crate::schema::DatabaseInstance;
use crate::value::{Tuple, Value};

/// A result set: named columns and a duplicate-free set of rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    columns: Vec<String>,
    rows: BTreeSet<Tuple>,
}

impl Relation {
    pub fn new(columns: Vec<String>, rows: BTreeSet<Tuple>) -> Self {
        assert!(rows.iter().all(|r| r.len() == columns.len()), "row arity");
        Relation { columns, rows }
    }

    pub fn empty(columns: Vec<String>) -> Self {
        Relation {
            columns,
            rows: BTreeSet::new(),
        }
    }

    /// No columns, one empty row: the identity for joins.
    pub fn unit() -> Self {
        Relation {
            columns: Vec::new(),
            rows: BTreeSet::from([Vec::new()]),
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &BTreeSet<Tuple> {
        &self.rows
    }

    pub fn into_rows(self) -> BTreeSet<Tuple> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn position(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    /// Project onto `columns` (in that order); `None` if one is missing.
    pub fn project(&self, columns: &[String]) -> Option<Relation> {
        let idx: Vec<usize> = columns
            .iter()
            .map(|c| self.position(c))
            .collect::<Option<_>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
            .collect();
        Some(Relation {
            columns: columns.to_vec(),
            rows,
        })
    }

    /// CSV with a header row; rows in tuple order. A relation without
    /// columns renders as `true` or `false`.
    pub fn to_csv(&self) -> String {
        if self.columns.is_empty() {
            return if self.rows.is_empty() { "false\n" } else { "true\n" }.to_string();
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Value::to_plain))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 input")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("query is not safe: {}", .0.first().map(|v| v.to_string()).unwrap_or_default())]
    NotSafe(SafetyReport),
    #[error("formula is not ground: free variables {}", .0.join(", "))]
    NotGround(Vec<String>),
    #[error("cannot compare {left} {op} {right}: different types")]
    TypeMismatch { left: Value, op: CompOp, right: Value },
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("cannot evaluate `{formula}`: variable {variable} is not limited")]
    Unlimited { formula: String, variable: String },
    #[error("head ({}) does not match free variables", .0.join(", "))]
    Head(Vec<String>),
}

/// Truth of a ground formula. Quantifiers range over the active domain plus
/// the formula's constants.
pub fn satisfies(inst: &DatabaseInstance, f: &Formula) -> Result<bool, EvalError> {
    let free = f.free_variables();
    if !free.is_empty() {
        return Err(EvalError::NotGround(free));
    }
    check_ground_comparisons(f)?;
    let vocab = vocabulary(inst, f, &BTreeSet::new());
    Ok(naive(inst, f, &mut Vec::new(), &vocab))
}

fn check_ground_comparisons(f: &Formula) -> Result<(), EvalError> {
    let mut err = None;
    f.visit(&mut |g| {
        if let Formula::Compare {
            left: Term::Const(l),
            op,
            right: Term::Const(r),
        } = g
        {
            if op.is_ordering() && l.value_type() != r.value_type() && err.is_none() {
                err = Some(EvalError::TypeMismatch {
                    left: l.clone(),
                    op: *op,
                    right: r.clone(),
                });
            }
        }
    });
    err.map_or(Ok(()), Err)
}

fn vocabulary(inst: &DatabaseInstance, f: &Formula, extra: &BTreeSet<Value>) -> Vec<Value> {
    let mut v: BTreeSet<Value> = inst.active_domain().clone();
    v.extend(f.constants());
    v.extend(extra.iter().cloned());
    v.into_iter().collect()
}

fn lookup<'a>(env: &'a [(String, Value)], name: &str) -> Option<&'a Value> {
    env.iter().rev().find(|(n, _)| n == name).map(|(_, v)| v)
}

fn term_value<'a>(t: &'a Term, env: &'a [(String, Value)]) -> &'a Value {
    match t {
        Term::Const(c) => c,
        Term::Var(v) => lookup(env, v).expect("every variable bound during enumeration"),
    }
}

fn naive(inst: &DatabaseInstance, f: &Formula, env: &mut Vec<(String, Value)>, vocab: &[Value]) -> bool {
    match f {
        Formula::Atom { predicate, args } => inst.relation(predicate).is_some_and(|rows| {
            rows.iter()
                .any(|row| row.iter().zip(args).all(|(v, t)| v == term_value(t, env)))
        }),
        Formula::Compare { left, op, right } => op.holds(term_value(left, env), term_value(right, env)),
        Formula::Not(g) => !naive(inst, g, env, vocab),
        Formula::And(parts) => parts.iter().all(|p| naive(inst, p, env, vocab)),
        Formula::Or(a, b) => naive(inst, a, env, vocab) || naive(inst, b, env, vocab),
        Formula::Exists(x, g) | Formula::Forall(x, g) => {
            let want = matches!(f, Formula::Exists(..));
            for c in vocab {
                env.push((x.clone(), c.clone()));
                let r = naive(inst, g, env, vocab);
                env.pop();
                if r == want {
                    return want;
                }
            }
            !want
        }
    }
}

/// Answer tuples by enumerating every binding of the head over the
/// evaluation vocabulary. Exponential; meant for small instances.
pub fn evaluate_naive(inst: &DatabaseInstance, q: &QueryDecl) -> Relation {
    evaluate_naive_with(inst, q, &BTreeSet::new())
}

/// As [`evaluate_naive`], with `extra` constants added to the vocabulary.
pub fn evaluate_naive_with(inst: &DatabaseInstance, q: &QueryDecl, extra: &BTreeSet<Value>) -> Relation {
    let vocab = vocabulary(inst, &q.body, extra);
    let m = q.head.len();
    let mut rows = BTreeSet::new();
    if m > 0 && vocab.is_empty() {
        return Relation::empty(q.head.clone());
    }
    let mut idx = vec![0usize; m];
    let mut env: Vec<(String, Value)> = Vec::with_capacity(m + 4);
    loop {
        env.clear();
        for (name, &i) in q.head.iter().zip(&idx) {
            env.push((name.clone(), vocab[i].clone()));
        }
        if naive(inst, &q.body, &mut env, &vocab) {
            rows.insert(env.iter().map(|(_, v)| v.clone()).collect());
        }
        // Odometer over vocab^m.
        let mut k = m;
        loop {
            if k == 0 {
                return Relation::new(q.head.clone(), rows);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < vocab.len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Answer tuples of a safe query, in head order.
pub fn evaluate(inst: &DatabaseInstance, q: &QueryDecl) -> Result<Relation, EvalError> {
    tuples(inst, &q.body, &q.head)
}

/// Answer tuples of a safe formula, with columns in `head` order. `head`
/// must list exactly the free variables.
pub fn tuples(inst: &DatabaseInstance, f: &Formula, head: &[String]) -> Result<Relation, EvalError> {
    let f = f.normalize();
    let report = check_safe(&f);
    if !report.is_safe() {
        return Err(EvalError::NotSafe(report));
    }
    let free = f.free_variable_set();
    if head.len() != free.len() || !head.iter().all(|h| free.contains(h)) {
        return Err(EvalError::Head(head.to_vec()));
    }
    let r = Evaluator { inst }.eval(&f, Relation::unit())?;
    Ok(r.project(head).expect("free variables are result columns"))
}

/// Set-at-a-time evaluation. `eval(f, ctx)` returns the rows of `ctx`
/// extended by the remaining free variables of `f` so that `f` holds; the
/// result's columns start with `ctx`'s columns.
struct Evaluator<'a> {
    inst: &'a DatabaseInstance,
}

enum Slot {
    Ctx(usize),
    New(usize),
    Const(Value),
}

impl Evaluator<'_> {
    fn eval(&self, f: &Formula, ctx: Relation) -> Result<Relation, EvalError> {
        match f {
            Formula::Atom { predicate, args } => self.atom(predicate, args, ctx),
            Formula::Compare { left, op, right } => self.compare(f, left, *op, right, ctx),
            Formula::Not(g) => self.anti_join(f, g, ctx),
            Formula::And(parts) => self.conjunction(parts, ctx),
            Formula::Or(a, b) => {
                let ra = self.eval(a, ctx.clone())?;
                let rb = self.eval(b, ctx)?;
                let rb = rb.project(&ra.columns).ok_or_else(|| unlimited(f, &rb.columns))?;
                let mut rows = ra.rows;
                rows.extend(rb.rows);
                Ok(Relation::new(ra.columns, rows))
            }
            Formula::Exists(x, g) => self.exists(x, g, ctx),
            Formula::Forall(..) => self.eval(&f.normalize(), ctx),
        }
    }

    fn atom(&self, predicate: &str, args: &[Term], ctx: Relation) -> Result<Relation, EvalError> {
        let table = self
            .inst
            .relation(predicate)
            .ok_or_else(|| EvalError::UnknownTable(predicate.to_string()))?;
        let mut columns = ctx.columns.clone();
        let mut slots = Vec::with_capacity(args.len());
        for t in args {
            slots.push(match t {
                Term::Const(c) => Slot::Const(c.clone()),
                Term::Var(v) => match ctx.position(v) {
                    Some(i) => Slot::Ctx(i),
                    None => match columns.iter().position(|c| c == v) {
                        Some(i) => Slot::New(i - ctx.columns.len()),
                        None => {
                            columns.push(v.clone());
                            Slot::New(columns.len() - 1 - ctx.columns.len())
                        }
                    },
                },
            });
        }
        let fresh = columns.len() - ctx.columns.len();
        let mut rows = BTreeSet::new();
        let mut new: Vec<Option<&Value>> = vec![None; fresh];
        for crow in &ctx.rows {
            'tuple: for trow in table {
                new.iter_mut().for_each(|s| *s = None);
                for (slot, v) in slots.iter().zip(trow) {
                    let ok = match slot {
                        Slot::Const(c) => c == v,
                        Slot::Ctx(i) => &crow[*i] == v,
                        Slot::New(j) => match new[*j] {
                            Some(prev) => prev == v,
                            None => {
                                new[*j] = Some(v);
                                true
                            }
                        },
                    };
                    if !ok {
                        continue 'tuple;
                    }
                }
                let mut row = crow.clone();
                row.extend(new.iter().map(|v| v.expect("every new column bound").clone()));
                rows.insert(row);
            }
        }
        Ok(Relation { columns, rows })
    }

    fn compare(&self, f: &Formula, left: &Term, op: CompOp, right: &Term, ctx: Relation) -> Result<Relation, EvalError> {
        let resolve = |t: &Term| match t {
            Term::Const(c) => Some(Slot::Const(c.clone())),
            Term::Var(v) => ctx.position(v).map(Slot::Ctx),
        };
        let (l, r) = (resolve(left), resolve(right));
        let get = |s: &Slot, row: &Tuple| -> Value {
            match s {
                Slot::Const(c) => c.clone(),
                Slot::Ctx(i) => row[*i].clone(),
                Slot::New(_) => unreachable!("resolve yields no new slots"),
            }
        };
        match (l, r) {
            (Some(l), Some(r)) => {
                let rows = ctx
                    .rows
                    .iter()
                    .filter(|row| op.holds(&get(&l, row), &get(&r, row)))
                    .cloned()
                    .collect();
                Ok(Relation {
                    columns: ctx.columns,
                    rows,
                })
            }
            (Some(bound), None) | (None, Some(bound)) if op == CompOp::Eq => {
                let var = if matches!(left, Term::Var(v) if ctx.position(v).is_none()) { left } else { right };
                let mut columns = ctx.columns.clone();
                columns.push(var.as_var().expect("unbound side is a variable").to_string());
                let rows = ctx
                    .rows
                    .iter()
                    .map(|row| {
                        let mut r = row.clone();
                        r.push(get(&bound, row));
                        r
                    })
                    .collect();
                Ok(Relation { columns, rows })
            }
            _ => Err(unlimited(f, &ctx.columns)),
        }
    }

    fn anti_join(&self, f: &Formula, g: &Formula, ctx: Relation) -> Result<Relation, EvalError> {
        if let Some(v) = g.free_variables().into_iter().find(|v| ctx.position(v).is_none()) {
            return Err(EvalError::Unlimited {
                formula: f.to_string(),
                variable: v,
            });
        }
        let n = ctx.columns.len();
        let matched: BTreeSet<Tuple> = self
            .eval(g, ctx.clone())?
            .rows
            .into_iter()
            .map(|mut r| {
                r.truncate(n);
                r
            })
            .collect();
        let rows = ctx.rows.into_iter().filter(|r| !matched.contains(r)).collect();
        Ok(Relation {
            columns: ctx.columns,
            rows,
        })
    }

    /// Atoms, then other positive conjuncts, then comparisons until no more
    /// apply, then negations.
    fn conjunction(&self, parts: &[Formula], ctx: Relation) -> Result<Relation, EvalError> {
        let mut cur = ctx;
        let atoms = parts.iter().filter(|p| matches!(p, Formula::Atom { .. }));
        let complex = parts
            .iter()
            .filter(|p| !matches!(p, Formula::Atom { .. } | Formula::Compare { .. } | Formula::Not(_)));
        for p in atoms.chain(complex) {
            cur = self.eval(p, cur)?;
        }
        let mut pending: Vec<&Formula> = parts.iter().filter(|p| matches!(p, Formula::Compare { .. })).collect();
        while !pending.is_empty() {
            let ready = pending.iter().position(|c| {
                let Formula::Compare { left, op, right } = c else { unreachable!() };
                let bound = |t: &Term| t.as_var().is_none_or(|v| cur.position(v).is_some());
                (bound(left) && bound(right)) || (*op == CompOp::Eq && (bound(left) || bound(right)))
            });
            match ready {
                Some(i) => {
                    let c = pending.remove(i);
                    cur = self.eval(c, cur)?;
                }
                None => return self.eval(pending[0], cur),
            }
        }
        for p in parts.iter().filter(|p| matches!(p, Formula::Not(_))) {
            cur = self.eval(p, cur)?;
        }
        Ok(cur)
    }

    fn exists(&self, x: &str, g: &Formula, mut ctx: Relation) -> Result<Relation, EvalError> {
        // An outer column named like the bound variable is hidden meanwhile.
        let hidden = ctx.position(x).inspect(|&i| {
            let mut avoid = g.all_variables();
            avoid.extend(ctx.columns.iter().cloned());
            let mut k = 0;
            let name = loop {
                let n = format!("{}_{}", x, k);
                if !avoid.contains(&n) {
                    break n;
                }
                k += 1;
            };
            ctx.columns[i] = name;
        });
        let r = self.eval(g, ctx)?;
        let mut columns: Vec<String> = r.columns.iter().filter(|c| c.as_str() != x).cloned().collect();
        let keep: Vec<usize> = (0..r.columns.len()).filter(|&i| r.columns[i] != x).collect();
        let rows = r
            .rows
            .iter()
            .map(|row| keep.iter().map(|&i| row[i].clone()).collect())
            .collect();
        if let Some(i) = hidden {
            columns[i] = x.to_string();
        }
        Ok(Relation { columns, rows })
    }
}

fn unlimited(f: &Formula, bound: &[String]) -> EvalError {
    let variable = f
        .free_variables()
        .into_iter()
        .find(|v| !bound.contains(v))
        .unwrap_or_default();
    EvalError::Unlimited {
        formula: f.to_string(),
        variable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_formula, parse_query_file, resolve_query, QueryRegistry};
    use crate::schema::{load_instance, load_instance_dir, load_schema};
    use std::path::Path;

    fn tv() -> (DatabaseInstance, QueryRegistry) {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/tv");
        let schema = load_schema(&std::fs::read_to_string(dir.join("schema.json")).unwrap()).unwrap();
        let inst = load_instance_dir(&schema, &dir).unwrap();
        let reg = parse_query_file(&std::fs::read_to_string(dir.join("queries.drc")).unwrap(), &schema).unwrap();
        (inst, reg)
    }

    fn names(r: &Relation) -> Vec<Vec<String>> {
        r.rows().iter().map(|row| row.iter().map(Value::to_plain).collect()).collect()
    }

    fn both(inst: &DatabaseInstance, q: &QueryDecl) -> Relation {
        let fast = evaluate(inst, q).unwrap();
        assert_eq!(fast, evaluate_naive(inst, q), "{q}");
        fast
    }

    #[test]
    fn table_seven() {
        let (inst, reg) = tv();
        assert_eq!(names(&both(&inst, reg.get("F1").unwrap())), [["Gilmore"], ["Hockey Night"]]);
        assert_eq!(names(&both(&inst, reg.get("F2").unwrap())), [["Hockey Night"], ["Simpsons"]]);
        assert_eq!(names(&both(&inst, reg.get("F1andF2").unwrap())), [["Hockey Night"]]);
        assert_eq!(
            names(&both(&inst, reg.get("F1orF2").unwrap())),
            [["Gilmore"], ["Hockey Night"], ["Simpsons"]]
        );
    }

    #[test]
    fn pairs() {
        let (inst, reg) = tv();
        assert_eq!(
            names(&both(&inst, reg.get("G1").unwrap())),
            [["Gilmore", "CBS"], ["Hockey Night", "CBC"]]
        );
        assert_eq!(names(&both(&inst, reg.get("G1andG2").unwrap())), [["Hockey Night", "CBC"]]);
        assert_eq!(names(&both(&inst, reg.get("G1andNotG2").unwrap())), [["Gilmore", "CBS"]]);
    }

    #[test]
    fn ground_satisfaction() {
        let (inst, reg) = tv();
        let f = |s: &str| parse_formula(s, inst.schema(), &reg).unwrap();
        assert!(satisfies(&inst, &f(r#"WeekdayTV("Gilmore","CBS",12,"La Senza")"#)).unwrap());
        assert!(!satisfies(&inst, &f(r#"WeekdayTV("Simpsons","CBS",10,"RBC")"#)).unwrap());
        assert!(satisfies(&inst, &f("12 >= 10")).unwrap());
        assert!(satisfies(&inst, &f(r#"EXISTS X. TV-Program(X) AND X = "Simpsons""#)).unwrap());
        assert!(matches!(satisfies(&inst, &f("TV-Program(X)")), Err(EvalError::NotGround(_))));
    }

    #[test]
    fn ground_type_mismatch() {
        let (inst, _) = tv();
        let f = Formula::compare(Term::Const(Value::Int(1)), CompOp::Lt, Term::Const(Value::str("a")));
        assert!(matches!(satisfies(&inst, &f), Err(EvalError::TypeMismatch { .. })));
        let eq = Formula::compare(Term::Const(Value::Int(1)), CompOp::Eq, Term::Const(Value::str("a")));
        assert!(!satisfies(&inst, &eq).unwrap());
    }

    #[test]
    fn unsafe_rejected() {
        let (inst, reg) = tv();
        let q = resolve_query("NOT F1(P)", inst.schema(), &reg).unwrap();
        assert!(matches!(evaluate(&inst, &q), Err(EvalError::NotSafe(_))));
        // The oracle still answers: every constant that is not an F1 answer.
        let n = evaluate_naive(&inst, &q);
        assert!(n.len() > 10);
        assert!(!n.rows().contains(&vec![Value::str("Gilmore")]));
    }

    #[test]
    fn empty_instance() {
        let (full, reg) = tv();
        let schema = full.schema().clone();
        let tables = schema.tables().iter().map(|t| (t.name.clone(), Vec::new())).collect();
        let inst = load_instance(&schema, tables).unwrap();
        let q = resolve_query("TV-Program(X)", &schema, &reg).unwrap();
        assert!(evaluate_naive(&inst, &q).is_empty());
        assert!(evaluate(&inst, &q).unwrap().is_empty());
    }

    #[test]
    fn comparisons_and_shadowing() {
        let (inst, reg) = tv();
        let cases = [
            r#"(EXISTS A. TV-Station(X, A)) AND X = Y"#,
            r#"X = "CBS""#,
            r#"X = "CBS" AND Y = X"#,
            r#"EXISTS SN. EXISTS S. EXISTS V. WeekdayTV(P,SN,V,S) AND V = W AND W > 10"#,
            r#"EXISTS S. EXISTS V. WeekdayTV(P,SN,V,S) AND (EXISTS P. EXISTS S. EXISTS V. WeekendTV(P,SN,V,S))"#,
            r#"TV-Program(P) AND NOT (EXISTS SN. EXISTS V. EXISTS S. WeekdayTV(P,SN,V,S) AND V < 12)"#,
            r#"(TV-Program(P) AND P != "Simpsons") OR P = "Simpsons""#,
            r#"EXISTS A. TV-Station(X, A) AND NOT (A = 1 OR A = 3)"#,
        ];
        for c in cases {
            let q = resolve_query(c, inst.schema(), &reg).unwrap();
            both(&inst, &q);
        }
    }

    #[test]
    fn csv_rendering() {
        let (inst, reg) = tv();
        let r = evaluate(&inst, reg.get("G1").unwrap()).unwrap();
        assert_eq!(r.to_csv(), "P,SN\nGilmore,CBS\nHockey Night,CBC\n");
        let closed = resolve_query("EXISTS X. TV-Program(X)", inst.schema(), &reg).unwrap();
        assert_eq!(evaluate(&inst, &closed).unwrap().to_csv(), "true\n");
    }

    #[test]
    fn fresh_constants_do_not_change_naive_answers() {
        let (inst, reg) = tv();
        let extra = BTreeSet::from([Value::str("zzz"), Value::Int(999)]);
        for q in reg.iter() {
            assert_eq!(evaluate_naive_with(&inst, q, &extra), evaluate(&inst, q).unwrap(), "{q}");
        }
    }
}

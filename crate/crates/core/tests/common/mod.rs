//! Seeded generators for random schemas, instances and formulas, plus
//! fixture loading.
#![allow(dead_code)]

pub mod checks;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use errules::formula::{CompOp, Formula, QueryDecl, Term};
use errules::schema::{load_instance, load_instance_dir, load_schema, DatabaseInstance, FieldDecl, QualifiedField, Schema, TableDecl};
use errules::value::{Tuple, Value, ValueType};
use errules::Session;

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> DatabaseInstance {
    let dir = fixture_dir(name);
    let schema = load_schema(&std::fs::read_to_string(dir.join("schema.json")).unwrap()).unwrap();
    load_instance_dir(&schema, &dir).unwrap()
}

pub fn tv_session() -> Session {
    let dir = fixture_dir("tv");
    Session::open(&dir.join("schema.json"), &dir, Some(&dir.join("queries.drc"))).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const ENTITY_NAMES: [&str; 5] = ["a", "b", "c", "d", "e"];
pub const MAX_INT: i64 = 4;

fn field(name: &str, ty: ValueType, key: bool, references: Option<QualifiedField>) -> FieldDecl {
    FieldDecl {
        name: name.to_string(),
        value_type: ty,
        is_key: key,
        references,
    }
}

/// One or two entity tables `E<i>(K [, A])` and one or two relationship
/// tables `R<j>(a, b, N)` whose `a`/`b` reference entity keys; at most four
/// tables in all.
pub fn random_schema(rng: &mut ChaCha8Rng) -> Schema {
    let n_ent = rng.gen_range(1..=2);
    let n_rel = rng.gen_range(1..=(4 - n_ent).min(2));
    let mut tables = Vec::new();
    for i in 0..n_ent {
        let mut fields = vec![field("K", ValueType::String, true, None)];
        if rng.gen_bool(0.5) {
            fields.push(field("A", ValueType::Integer, false, None));
        }
        tables.push(TableDecl {
            name: format!("E{}", i),
            fields,
        });
    }
    for j in 0..n_rel {
        let r = |rng: &mut ChaCha8Rng| Some(QualifiedField::new(format!("E{}", rng.gen_range(0..n_ent)), "K"));
        let (ra, rb) = (r(rng), r(rng));
        tables.push(TableDecl {
            name: format!("R{}", j),
            fields: vec![
                field("a", ValueType::String, true, ra),
                field("b", ValueType::String, true, rb),
                field("N", ValueType::Integer, false, None),
            ],
        });
    }
    Schema::new(tables, &HashMap::new()).expect("generated schema is well formed")
}

/// Between one and five rows per table (zero allowed when `allow_empty`),
/// respecting keys and references; entity names from [`ENTITY_NAMES`],
/// integers from `0..=MAX_INT`.
pub fn random_instance(rng: &mut ChaCha8Rng, schema: &Schema, allow_empty: bool) -> DatabaseInstance {
    let lo = if allow_empty { 0 } else { 1 };
    let mut rows: BTreeMap<String, Vec<Tuple>> = BTreeMap::new();
    let mut keys: HashMap<String, Vec<Value>> = HashMap::new();
    for t in schema.entity_tables() {
        let mut names = ENTITY_NAMES.to_vec();
        names.shuffle(rng);
        names.truncate(rng.gen_range(lo.max(1)..=5));
        let mut table = Vec::new();
        for n in &names {
            let mut row = vec![Value::str(*n)];
            if t.arity() == 2 {
                row.push(Value::Int(rng.gen_range(0..=MAX_INT)));
            }
            table.push(row);
        }
        keys.insert(t.name.clone(), names.iter().map(|n| Value::str(*n)).collect());
        rows.insert(t.name.clone(), table);
    }
    for t in schema.relationship_tables() {
        let target = |i: usize| t.fields[i].references.as_ref().unwrap().table.clone();
        let (ka, kb) = (&keys[&target(0)], &keys[&target(1)]);
        let want = rng.gen_range(lo..=5);
        let mut seen = BTreeSet::new();
        let mut table = Vec::new();
        for _ in 0..want * 3 {
            if table.len() == want {
                break;
            }
            let a = ka.choose(rng).unwrap().clone();
            let b = kb.choose(rng).unwrap().clone();
            if seen.insert((a.clone(), b.clone())) {
                table.push(vec![a, b, Value::Int(rng.gen_range(0..=MAX_INT))]);
            }
        }
        if table.is_empty() && !allow_empty {
            table.push(vec![ka[0].clone(), kb[0].clone(), Value::Int(0)]);
        }
        rows.insert(t.name.clone(), table);
    }
    load_instance(schema, rows).expect("generated instance is consistent")
}

/// A random schema with a random instance over it.
pub fn random_database(seed: u64, allow_empty: bool) -> DatabaseInstance {
    let mut r = rng(seed);
    let schema = random_schema(&mut r);
    random_instance(&mut r, &schema, allow_empty)
}

fn entity_const(rng: &mut ChaCha8Rng) -> Value {
    Value::str(*ENTITY_NAMES.choose(rng).unwrap())
}

fn int_const(rng: &mut ChaCha8Rng) -> Value {
    Value::Int(rng.gen_range(0..=MAX_INT))
}

fn ordering_op(rng: &mut ChaCha8Rng) -> CompOp {
    *[CompOp::Lt, CompOp::Gt, CompOp::Le, CompOp::Ge].choose(rng).unwrap()
}

/// Well-typed formulas over arbitrary connectives, with no guarantee of
/// safety; callers filter.
pub struct WildGen<'a> {
    pub schema: &'a Schema,
    fresh: usize,
}

impl<'a> WildGen<'a> {
    pub fn new(schema: &'a Schema) -> Self {
        WildGen { schema, fresh: 0 }
    }

    /// Head variables `X` (string) and `Y`, `I` (integer) may occur free.
    pub fn formula(&mut self, rng: &mut ChaCha8Rng, depth: usize) -> Formula {
        let mut scope = vec![
            ("X".to_string(), ValueType::String),
            ("Y".to_string(), ValueType::String),
            ("I".to_string(), ValueType::Integer),
        ];
        self.gen(rng, &mut scope, depth)
    }

    fn term(&self, rng: &mut ChaCha8Rng, scope: &[(String, ValueType)], ty: ValueType) -> Term {
        let vars: Vec<&String> = scope.iter().filter(|(_, t)| *t == ty).map(|(v, _)| v).collect();
        if !vars.is_empty() && rng.gen_bool(0.75) {
            Term::var(vars.choose(rng).unwrap().as_str())
        } else if ty == ValueType::String {
            Term::Const(entity_const(rng))
        } else {
            Term::Const(int_const(rng))
        }
    }

    fn gen(&mut self, rng: &mut ChaCha8Rng, scope: &mut Vec<(String, ValueType)>, depth: usize) -> Formula {
        let pick = if depth == 0 { rng.gen_range(0..2) } else { rng.gen_range(0..9) };
        match pick {
            0 | 2 => {
                let t = self.schema.tables().choose(rng).unwrap();
                let args = t.fields.iter().map(|f| self.term(rng, scope, f.value_type)).collect();
                Formula::atom(t.name.clone(), args)
            }
            1 => {
                let ty = if rng.gen_bool(0.5) { ValueType::String } else { ValueType::Integer };
                let left = self.term(rng, scope, ty);
                // An ordering needs an operand of known type, so it always
                // takes an integer constant.
                if ty == ValueType::Integer && rng.gen_bool(0.5) {
                    return Formula::compare(left, ordering_op(rng), Term::Const(int_const(rng)));
                }
                let op = if rng.gen_bool(0.5) { CompOp::Eq } else { CompOp::Ne };
                Formula::compare(left, op, self.term(rng, scope, ty))
            }
            3 => Formula::not(self.gen(rng, scope, depth - 1)),
            4 | 5 => {
                let n = rng.gen_range(2..=3);
                let parts = (0..n).map(|_| self.gen(rng, scope, depth - 1)).collect();
                Formula::conjunction(parts).unwrap()
            }
            6 => Formula::or(self.gen(rng, scope, depth - 1), self.gen(rng, scope, depth - 1)),
            _ => {
                let v = format!("Q{}", self.fresh);
                self.fresh += 1;
                let ty = if rng.gen_bool(0.7) { ValueType::String } else { ValueType::Integer };
                scope.push((v.clone(), ty));
                let body = self.gen(rng, scope, depth - 1);
                scope.pop();
                if rng.gen_bool(0.8) {
                    Formula::exists(v, body)
                } else {
                    Formula::forall(v, body)
                }
            }
        }
    }
}

/// Formulas biased towards safe ER queries valid for a requested head:
/// every disjunct and every conjunction is anchored on an atom holding the
/// head in entity positions. Each result is still checked by the caller.
pub struct ErGen<'a> {
    pub inst: &'a DatabaseInstance,
    fresh: usize,
    /// Allow constants and repeated variables inside atoms.
    pub loose_atoms: bool,
    /// Allow `X = c` conjuncts.
    pub equalities: bool,
}

impl<'a> ErGen<'a> {
    pub fn new(inst: &'a DatabaseInstance) -> Self {
        ErGen {
            inst,
            fresh: 0,
            loose_atoms: true,
            equalities: true,
        }
    }

    fn local(&mut self) -> String {
        self.fresh += 1;
        format!("L{}", self.fresh)
    }

    fn entity_positions(t: &TableDecl) -> Vec<usize> {
        t.fields
            .iter()
            .enumerate()
            .filter(|(_, f)| f.value_type == ValueType::String)
            .map(|(i, _)| i)
            .collect()
    }

    /// `EXISTS locals. R(...)` with `vars` in distinct entity positions,
    /// optionally with an ordering filter on an integer local.
    pub fn anchor(&mut self, rng: &mut ChaCha8Rng, vars: &[String]) -> Option<Formula> {
        let schema = self.inst.schema();
        let fits: Vec<&TableDecl> = schema
            .tables()
            .iter()
            .filter(|t| Self::entity_positions(t).len() >= vars.len())
            .collect();
        let t = *fits.choose(rng)?;
        let mut positions = Self::entity_positions(t);
        positions.shuffle(rng);
        let mut args: Vec<Option<Term>> = vec![None; t.arity()];
        for (v, &p) in vars.iter().zip(&positions) {
            args[p] = Some(Term::var(v.as_str()));
        }
        let mut locals = Vec::new();
        let mut int_locals = Vec::new();
        let mut out = Vec::new();
        for (i, a) in args.into_iter().enumerate() {
            let f = &t.fields[i];
            out.push(match a {
                Some(a) => a,
                None if self.loose_atoms && rng.gen_bool(0.15) => Term::Const(match f.value_type {
                    ValueType::String => entity_const(rng),
                    ValueType::Integer => int_const(rng),
                }),
                None if self.loose_atoms && f.value_type == ValueType::String && rng.gen_bool(0.1) => {
                    Term::var(vars[0].as_str())
                }
                None => {
                    let l = self.local();
                    if f.value_type == ValueType::Integer {
                        int_locals.push(l.clone());
                    }
                    locals.push(l.clone());
                    Term::var(l)
                }
            });
        }
        let mut body = Formula::atom(t.name.clone(), out);
        if let Some(l) = int_locals.first() {
            if rng.gen_bool(0.6) {
                let cmp = Formula::compare(Term::var(l.as_str()), ordering_op(rng), Term::Const(int_const(rng)));
                body = Formula::and(body, cmp);
            }
        }
        Some(Formula::exists_all(locals, body))
    }

    /// A formula whose free variables are exactly `vars`.
    pub fn query(&mut self, rng: &mut ChaCha8Rng, vars: &[String], depth: usize) -> Option<Formula> {
        let pick = if depth == 0 { 0 } else { rng.gen_range(0..6) };
        Some(match pick {
            0 | 1 => self.anchor(rng, vars)?,
            2 | 3 => {
                let base = self.query(rng, vars, depth - 1)?;
                let mut parts = vec![base];
                for _ in 0..rng.gen_range(1..=2) {
                    parts.push(self.side(rng, vars, depth - 1)?);
                }
                Formula::conjunction(parts).unwrap()
            }
            4 => Formula::or(self.query(rng, vars, depth - 1)?, self.query(rng, vars, depth - 1)?),
            _ => {
                let z = self.local();
                let mut wider = vars.to_vec();
                wider.push(z.clone());
                if wider.len() > 2 {
                    return self.anchor(rng, vars);
                }
                Formula::exists(z, self.query(rng, &wider, depth - 1)?)
            }
        })
    }

    /// A conjunct to sit beside an anchored formula over `vars`.
    fn side(&mut self, rng: &mut ChaCha8Rng, vars: &[String], depth: usize) -> Option<Formula> {
        let subset: Vec<String> = {
            let mut s: Vec<String> = vars.iter().filter(|_| rng.gen_bool(0.6)).cloned().collect();
            if s.is_empty() {
                s.push(vars.choose(rng).unwrap().clone());
            }
            s
        };
        Some(match rng.gen_range(0..6) {
            0 | 1 => self.query(rng, &subset, depth)?,
            2 | 3 => Formula::not(self.query(rng, &subset, depth)?),
            4 => Formula::compare(Term::var(subset[0].as_str()), CompOp::Ne, Term::Const(entity_const(rng))),
            _ if self.equalities => {
                let c = self
                    .inst
                    .entity_constants()
                    .iter()
                    .cloned()
                    .collect::<Vec<_>>()
                    .choose(rng)
                    .cloned()
                    .unwrap_or_else(|| entity_const(rng));
                Formula::compare(Term::var(subset[0].as_str()), CompOp::Eq, Term::Const(c))
            }
            _ => self.query(rng, &subset, depth)?,
        })
    }
}

pub fn head(n: usize) -> Vec<String> {
    ["X", "Y"][..n].iter().map(|s| s.to_string()).collect()
}

pub fn decl(head: &[String], body: Formula) -> QueryDecl {
    QueryDecl::new("q", head.to_vec(), body).expect("generated head matches")
}

/// Safe ER query valid for its head, per the library's own checkers.
pub fn is_valid_er(inst: &DatabaseInstance, q: &QueryDecl) -> bool {
    errules::stats::check_er_valid(inst, q).is_ok()
}

/// Draw up to `tries` generated queries over a 1- or 2-variable head and
/// return the first that is a valid ER query.
pub fn valid_er_query(inst: &DatabaseInstance, rng: &mut ChaCha8Rng, gen: &mut ErGen, tries: usize) -> Option<QueryDecl> {
    for _ in 0..tries {
        let h = head(rng.gen_range(1..=2));
        let depth = rng.gen_range(0..=3);
        if let Some(body) = gen.query(rng, &h, depth) {
            let q = decl(&h, body);
            if is_valid_er(inst, &q) {
                return Some(q);
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Independent oracles used by the acceptance and property suites.

/// Tuples of an atom-only conjunction evaluated by hand: rows of `table`
/// whose positions in `at` match `vals`, projected on `proj`.
pub fn project_rows(inst: &DatabaseInstance, table: &str, proj: &[usize]) -> BTreeSet<Tuple> {
    inst.relation(table)
        .unwrap()
        .iter()
        .map(|r| proj.iter().map(|&i| r[i].clone()).collect())
        .collect()
}

/// Transactions containing every item, counted straight from the CSVs.
pub fn count_transactions_containing(dir: &Path, items: &[&str]) -> (usize, usize) {
    let mut rd = csv::Reader::from_path(dir.join("Transactions.csv")).unwrap();
    let all: BTreeSet<String> = rd.records().map(|r| r.unwrap()[0].to_string()).collect();
    let mut rd = csv::Reader::from_path(dir.join("TransItems.csv")).unwrap();
    let mut by_tx: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for r in rd.records() {
        let r = r.unwrap();
        by_tx.entry(r[0].to_string()).or_default().insert(r[1].to_string());
    }
    let hits = all
        .iter()
        .filter(|t| items.iter().all(|i| by_tx.get(*t).is_some_and(|s| s.contains(*i))))
        .count();
    (hits, all.len())
}

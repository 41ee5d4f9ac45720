//! A loaded database plus named queries; the state behind the CLI, the REPL
//! and the C interface.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::er::{is_er_query, is_valid_for, ErReport, ValidityReport};
use crate::formula::QueryDecl;
use crate::parser::{parse_formula, parse_into_registry, resolve_query, QueryRegistry};
use crate::safety::{check_safe, SafetyReport};
use crate::schema::{load_instance_dir, load_schema, DatabaseInstance};
use crate::stats::ErRule;
use crate::Error;

pub struct Session {
    pub schema_path: PathBuf,
    pub data_dir: PathBuf,
    instance: DatabaseInstance,
    registry: QueryRegistry,
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl Session {
    pub fn open(schema: &Path, data: &Path, queries: Option<&Path>) -> Result<Self, Error> {
        let s = load_schema(&read(schema)?)?;
        let instance = load_instance_dir(&s, data)?;
        let mut session = Session {
            schema_path: schema.to_path_buf(),
            data_dir: data.to_path_buf(),
            instance,
            registry: QueryRegistry::new(),
        };
        if let Some(q) = queries {
            session.define(&read(q)?)?;
        }
        Ok(session)
    }

    pub fn instance(&self) -> &DatabaseInstance {
        &self.instance
    }

    pub fn registry(&self) -> &QueryRegistry {
        &self.registry
    }

    /// Add `name(vars) := body;` declarations; returns the new names.
    pub fn define(&mut self, text: &str) -> Result<Vec<String>, Error> {
        let before = self.registry.len();
        let mut staged = self.registry.clone();
        parse_into_registry(text, self.instance.schema(), &mut staged)?;
        let names = staged.iter().skip(before).map(|q| q.name.clone()).collect();
        self.registry = staged;
        Ok(names)
    }

    /// Register `body` under `name`, with its free variables, in order of
    /// first occurrence, as the head. Replaces an earlier binding.
    pub fn bind(&mut self, name: &str, body: &str) -> Result<QueryDecl, Error> {
        let word = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !word || self.instance.schema().table(name).is_some() {
            return Err(Error::Usage(format!("`{}` is not a usable query name", name)));
        }
        let f = parse_formula(body, self.instance.schema(), &self.registry)?;
        let q = QueryDecl::inferred(name, f);
        self.registry.insert(q.clone());
        Ok(q)
    }

    /// A registered name, a declaration, or a bare formula.
    pub fn resolve(&self, arg: &str) -> Result<QueryDecl, Error> {
        Ok(resolve_query(arg, self.instance.schema(), &self.registry)?)
    }

    /// The rule `antecedent -> consequent`; the consequent may be a
    /// registered name, in which case its body is used.
    pub fn rule(&self, antecedent: &str, consequent: &str) -> Result<ErRule, Error> {
        let a = self.resolve(antecedent)?;
        let c = self.resolve(consequent)?;
        Ok(ErRule::new(a, c.body)?)
    }

    pub fn check(&self, q: &QueryDecl) -> CheckReport {
        CheckReport::new(&self.instance, q)
    }
}

/// Safety, ER status and validity for the head, in one pass.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub query: QueryDecl,
    pub safety: SafetyReport,
    /// Absent when the query is unsafe.
    pub er: Option<ErReport>,
    pub validity: Option<ValidityReport>,
}

impl CheckReport {
    pub fn new(inst: &DatabaseInstance, q: &QueryDecl) -> Self {
        let safety = check_safe(&q.body.normalize());
        let (er, validity) = if safety.is_safe() {
            (
                is_er_query(&q.body, inst).ok(),
                Some(is_valid_for(&q.body, &q.head)),
            )
        } else {
            (None, None)
        };
        CheckReport {
            query: q.clone(),
            safety,
            er,
            validity,
        }
    }

    pub fn passed(&self) -> bool {
        self.safety.is_safe()
            && self.er.as_ref().is_some_and(|r| r.is_er)
            && self.validity.as_ref().is_some_and(|v| v.valid)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "query: {}", self.query)?;
        if self.safety.is_safe() {
            writeln!(f, "safe: PASS")?;
        } else {
            writeln!(f, "safe: FAIL")?;
            for v in &self.safety.violations {
                writeln!(f, "  {}", v)?;
            }
        }
        match &self.er {
            None => writeln!(f, "ER: not checked (unsafe)")?,
            Some(r) if r.is_er => {
                let vars: Vec<&str> = r.entity_vars.iter().map(String::as_str).collect();
                writeln!(f, "ER: PASS (entity variables: {})", vars.join(", "))?;
            }
            Some(r) => {
                writeln!(f, "ER: FAIL")?;
                for (v, why) in &r.failures {
                    writeln!(f, "  {}: {}", v, why)?;
                }
            }
        }
        let head = self.query.head.join(", ");
        match &self.validity {
            None => writeln!(f, "valid for ({}): not checked (unsafe)", head),
            Some(v) if v.valid => writeln!(f, "valid for ({}): PASS", head),
            Some(v) => {
                let (at, sub) = v.failure.as_ref().expect("invalid carries a locator");
                writeln!(f, "valid for ({}): FAIL at {} `{}`", head, at, sub)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tv() -> Session {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/tv");
        Session::open(&dir.join("schema.json"), &dir, Some(&dir.join("queries.drc"))).unwrap()
    }

    #[test]
    fn open_and_resolve() {
        let s = tv();
        assert_eq!(s.registry().len(), 10);
        assert_eq!(s.resolve("F1").unwrap().head, ["P"]);
        assert_eq!(s.resolve("q(X) := TV-Program(X)").unwrap().name, "q");
        assert_eq!(s.resolve("TV-Program(X)").unwrap().head, ["X"]);
    }

    #[test]
    fn bind_and_define() {
        let mut s = tv();
        let q = s.bind("Both", "F1(P) AND F2(P)").unwrap();
        assert_eq!(q.head, ["P"]);
        assert!(s.resolve("Both").is_ok());
        let names = s.define("H(X) := TV-Program(X); K(X) := H(X) AND X != \"Gilmore\";").unwrap();
        assert_eq!(names, ["H", "K"]);
        // A failing batch leaves the registry untouched.
        assert!(s.define("M(X) := TV-Program(X); H(X) := TV-Program(X);").is_err());
        assert!(s.resolve("M").is_err());
    }

    #[test]
    fn check_reports() {
        let s = tv();
        let ok = s.check(&s.resolve("F1andNotF2").unwrap());
        assert!(ok.passed());
        let text = ok.to_string();
        assert!(text.contains("safe: PASS") && text.contains("ER: PASS (entity variables: P)"));
        let bad = s.check(&s.resolve("NOT F1(P)").unwrap());
        assert!(!bad.passed());
        let text = bad.to_string();
        assert!(text.contains("safe: FAIL") && text.contains("R4-bad-negation"));
    }

    #[test]
    fn missing_files() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/tv");
        let e = Session::open(&dir.join("nope.json"), &dir, None).err().unwrap();
        assert_eq!(e.exit_code(), 2);
    }
}

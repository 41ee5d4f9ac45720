//! Concrete syntax for queries.
//!
//! ```text
//! file     := { decl ';' }              # `#` starts a line comment
//! decl     := NAME '(' [VAR {',' VAR}] ')' ':=' formula
//! formula  := conj { OR conj }
//! conj     := unary { AND unary }
//! unary    := NOT unary | (EXISTS | FORALL) VAR {',' VAR} '.' formula | primary
//! primary  := '(' formula ')' | PRED '(' terms ')' | term CMP term
//! term     := VAR | "string" | integer
//! CMP      := = | != | < | > | <= | >=
//! ```
//!
//! Variables start with an uppercase letter. Predicates are schema table
//! names, or names of earlier declarations, which expand in place with their
//! head variables replaced by the call arguments.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::formula::{CompOp, Formula, HeadMismatch, QueryDecl, Term};
use crate::schema::Schema;
use crate::value::{Value, ValueType};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Position {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{pos}: syntax error: {message}")]
    Syntax { pos: Position, message: String },
    #[error("{pos}: unknown predicate `{name}`")]
    UnknownPredicate { pos: Position, name: String },
    #[error("{pos}: `{predicate}` has arity {expected}, but {found} arguments were given")]
    Arity {
        pos: Position,
        predicate: String,
        expected: usize,
        found: usize,
    },
    #[error("{pos}: query `{query}`: {source}")]
    Head {
        pos: Position,
        query: String,
        #[source]
        source: HeadMismatch,
    },
    #[error("{pos}: query `{0}` is already declared", pos = .1)]
    Duplicate(String, Position),
    #[error("type error: {0}")]
    Type(String),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    LParen,
    RParen,
    Comma,
    Dot,
    Semi,
    Define,
    Cmp(CompOp),
    Exists,
    Forall,
    And,
    Or,
    Not,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{}`", s),
            Tok::Str(s) => write!(f, "string {:?}", s),
            Tok::Int(i) => write!(f, "integer {}", i),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Define => f.write_str("`:=`"),
            Tok::Cmp(op) => write!(f, "`{}`", op),
            Tok::Exists => f.write_str("EXISTS"),
            Tok::Forall => f.write_str("FORALL"),
            Tok::And => f.write_str("AND"),
            Tok::Or => f.write_str("OR"),
            Tok::Not => f.write_str("NOT"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Position)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Position { line, col };
        let syntax = |message: String| ParseError::Syntax { pos, message };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        let peek = chars.get(i + 1).copied();
        let (tok, len) = match c {
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            ',' => (Tok::Comma, 1),
            '.' => (Tok::Dot, 1),
            ';' => (Tok::Semi, 1),
            ':' if peek == Some('=') => (Tok::Define, 2),
            '=' => (Tok::Cmp(CompOp::Eq), 1),
            '!' if peek == Some('=') => (Tok::Cmp(CompOp::Ne), 2),
            '<' if peek == Some('=') => (Tok::Cmp(CompOp::Le), 2),
            '<' if peek == Some('>') => (Tok::Cmp(CompOp::Ne), 2),
            '<' => (Tok::Cmp(CompOp::Lt), 1),
            '>' if peek == Some('=') => (Tok::Cmp(CompOp::Ge), 2),
            '>' => (Tok::Cmp(CompOp::Gt), 1),
            '"' => {
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        None => return Err(syntax("unterminated string literal".into())),
                        Some('"') => break,
                        Some('\\') => {
                            match chars.get(j + 1) {
                                Some(&e @ ('"' | '\\')) => s.push(e),
                                _ => return Err(syntax("invalid escape in string literal".into())),
                            }
                            j += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            j += 1;
                        }
                    }
                }
                (Tok::Str(s), j + 1 - i)
            }
            c if c.is_ascii_digit() || (c == '-' && peek.is_some_and(|p| p.is_ascii_digit())) => {
                let mut j = i + 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let lit: String = chars[i..j].iter().collect();
                let n = lit
                    .parse::<i64>()
                    .map_err(|_| syntax(format!("integer literal {} out of range", lit)))?;
                (Tok::Int(n), j - i)
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i + 1;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '-') {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                let tok = match word.as_str() {
                    "EXISTS" => Tok::Exists,
                    "FORALL" => Tok::Forall,
                    "AND" => Tok::And,
                    "OR" => Tok::Or,
                    "NOT" => Tok::Not,
                    _ => Tok::Ident(word),
                };
                (tok, j - i)
            }
            other => return Err(syntax(format!("unexpected character {:?}", other))),
        };
        out.push((tok, pos));
        advance(&mut i, &mut line, &mut col, len);
    }
    out.push((Tok::Eof, Position { line, col }));
    Ok(out)
}

/// `true` for names in the variable token class.
pub fn is_variable_name(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_uppercase())
        && chars.all(|c| c.is_alphanumeric() || c == '_')
        && !matches!(s, "EXISTS" | "FORALL" | "AND" | "OR" | "NOT")
}

/// Declared queries in declaration order, looked up by name.
#[derive(Clone, Debug, Default)]
pub struct QueryRegistry {
    queries: Vec<QueryDecl>,
    index: HashMap<String, usize>,
}

impl QueryRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&QueryDecl> {
        self.index.get(name).map(|&i| &self.queries[i])
    }

    /// Register or replace a query.
    pub fn insert(&mut self, q: QueryDecl) {
        match self.index.get(&q.name) {
            Some(&i) => self.queries[i] = q,
            None => {
                self.index.insert(q.name.clone(), self.queries.len());
                self.queries.push(q);
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueryDecl> {
        self.queries.iter()
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, Position)>,
    at: usize,
    schema: &'a Schema,
    registry: &'a QueryRegistry,
}

impl<'a> Parser<'a> {
    fn new(text: &str, schema: &'a Schema, registry: &'a QueryRegistry) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: lex(text)?,
            at: 0,
            schema,
            registry,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Position {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            pos: self.pos(),
            message: format!("expected {}, found {}", expected, self.peek()),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(what)
        }
    }

    fn variable(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) if is_variable_name(&name) => {
                self.bump();
                Ok(name)
            }
            _ => self.error("a variable (identifier starting with an uppercase letter)"),
        }
    }

    fn decl(&mut self) -> Result<QueryDecl, ParseError> {
        let pos = self.pos();
        let name = match self.peek().clone() {
            Tok::Ident(n) => n,
            _ => return self.error("a query name"),
        };
        self.bump();
        self.expect(Tok::LParen, "`(`")?;
        let mut head = Vec::new();
        if *self.peek() != Tok::RParen {
            head.push(self.variable()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                head.push(self.variable()?);
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::Define, "`:=`")?;
        let body = self.formula()?;
        typecheck(&body, self.schema)?;
        QueryDecl::new(name.clone(), head, body).map_err(|source| ParseError::Head {
            pos,
            query: name,
            source,
        })
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.conjunction()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let right = self.conjunction()?;
            left = Formula::or(left, right);
        }
        Ok(left)
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.unary()?];
        while *self.peek() == Tok::And {
            self.bump();
            parts.push(self.unary()?);
        }
        Ok(Formula::conjunction(parts).expect("at least one conjunct"))
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Tok::Not => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Tok::Exists | Tok::Forall => {
                let universal = *self.peek() == Tok::Forall;
                self.bump();
                let mut vars = vec![self.variable()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    vars.push(self.variable()?);
                }
                self.expect(Tok::Dot, "`.` after quantified variables")?;
                let body = self.formula()?;
                Ok(vars.into_iter().rev().fold(body, |acc, v| {
                    if universal {
                        Formula::forall(v, acc)
                    } else {
                        Formula::exists(v, acc)
                    }
                }))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        if *self.peek() == Tok::LParen {
            self.bump();
            let f = self.formula()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(f);
        }
        if let (Tok::Ident(name), Tok::LParen) = (self.peek().clone(), self.peek2()) {
            let pos = self.pos();
            self.bump();
            self.bump();
            let mut args = Vec::new();
            if *self.peek() != Tok::RParen {
                args.push(self.term()?);
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.term()?);
                }
            }
            self.expect(Tok::RParen, "`)`")?;
            return self.resolve_atom(name, args, pos);
        }
        let left = self.term()?;
        let op = match self.peek() {
            Tok::Cmp(op) => *op,
            _ => return self.error("a comparison operator"),
        };
        self.bump();
        let right = self.term()?;
        Ok(Formula::compare(left, op, right))
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(Term::Const(Value::Str(s)))
            }
            Tok::Int(i) => {
                self.bump();
                Ok(Term::Const(Value::Int(i)))
            }
            Tok::Ident(_) => self.variable().map(Term::Var),
            _ => self.error("a term (variable, string or integer)"),
        }
    }

    fn resolve_atom(&self, name: String, args: Vec<Term>, pos: Position) -> Result<Formula, ParseError> {
        if let Some(table) = self.schema.table(&name) {
            if table.arity() != args.len() {
                return Err(ParseError::Arity {
                    pos,
                    predicate: name,
                    expected: table.arity(),
                    found: args.len(),
                });
            }
            return Ok(Formula::atom(name, args));
        }
        if let Some(q) = self.registry.get(&name) {
            if q.head.len() != args.len() {
                return Err(ParseError::Arity {
                    pos,
                    predicate: name,
                    expected: q.head.len(),
                    found: args.len(),
                });
            }
            let map: BTreeMap<String, Term> = q.head.iter().cloned().zip(args).collect();
            return Ok(q.body.substitute(&map));
        }
        Err(ParseError::UnknownPredicate { pos, name })
    }

    fn at_end(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    fn skip_semis(&mut self) {
        while *self.peek() == Tok::Semi {
            self.bump();
        }
    }
}

/// Parse a single declaration `name(vars) := body`.
pub fn parse_query(text: &str, schema: &Schema) -> Result<QueryDecl, ParseError> {
    parse_query_with(text, schema, &QueryRegistry::new())
}

/// Parse a single declaration that may refer to registered queries.
pub fn parse_query_with(text: &str, schema: &Schema, registry: &QueryRegistry) -> Result<QueryDecl, ParseError> {
    let mut p = Parser::new(text, schema, registry)?;
    let q = p.decl()?;
    p.skip_semis();
    if !p.at_end() {
        return p.error("end of input");
    }
    Ok(q)
}

/// Parse a bare formula (no head) that may refer to registered queries.
pub fn parse_formula(text: &str, schema: &Schema, registry: &QueryRegistry) -> Result<Formula, ParseError> {
    let mut p = Parser::new(text, schema, registry)?;
    let f = p.formula()?;
    if !p.at_end() {
        return p.error("end of input");
    }
    typecheck(&f, schema)?;
    Ok(f)
}

/// Parse a query file. Later declarations may refer to earlier ones.
pub fn parse_query_file(text: &str, schema: &Schema) -> Result<QueryRegistry, ParseError> {
    let mut registry = QueryRegistry::new();
    parse_into_registry(text, schema, &mut registry)?;
    Ok(registry)
}

/// Parse declarations from `text` and add them to `registry`.
pub fn parse_into_registry(text: &str, schema: &Schema, registry: &mut QueryRegistry) -> Result<(), ParseError> {
    let mut toks = lex(text)?;
    let mut at = 0;
    loop {
        let mut p = Parser {
            toks: std::mem::take(&mut toks),
            at,
            schema,
            registry,
        };
        p.skip_semis();
        if p.at_end() {
            return Ok(());
        }
        let pos = p.pos();
        let q = p.decl()?;
        if !matches!(p.peek(), Tok::Semi | Tok::Eof) {
            return p.error("`;` after declaration");
        }
        at = p.at;
        toks = std::mem::take(&mut p.toks);
        if registry.get(&q.name).is_some() {
            return Err(ParseError::Duplicate(q.name, pos));
        }
        registry.insert(q);
    }
}

/// Resolve a query given on a command line: a registered name, a full
/// declaration, or a bare formula whose head is inferred.
pub fn resolve_query(arg: &str, schema: &Schema, registry: &QueryRegistry) -> Result<QueryDecl, ParseError> {
    let trimmed = arg.trim();
    if let Some(q) = registry.get(trimmed) {
        return Ok(q.clone());
    }
    if trimmed.contains(":=") {
        return parse_query_with(trimmed, schema, registry);
    }
    let body = parse_formula(trimmed, schema, registry)?;
    Ok(QueryDecl::inferred("query", body))
}

// Type inference over variable scopes. Every binder introduces a slot; free
// variables share one slot per name.
struct Typer<'a> {
    schema: &'a Schema,
    parent: Vec<usize>,
    ty: Vec<Option<ValueType>>,
    orderings: Vec<(Option<usize>, Option<ValueType>, String)>,
}

impl Typer<'_> {
    fn find(&mut self, mut s: usize) -> usize {
        while self.parent[s] != s {
            self.parent[s] = self.parent[self.parent[s]];
            s = self.parent[s];
        }
        s
    }

    fn fresh(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.ty.push(None);
        self.parent.len() - 1
    }

    fn constrain(&mut self, slot: usize, t: ValueType, ctx: &dyn Fn() -> String) -> Result<(), ParseError> {
        let r = self.find(slot);
        match self.ty[r] {
            None => {
                self.ty[r] = Some(t);
                Ok(())
            }
            Some(have) if have == t => Ok(()),
            Some(have) => Err(ParseError::Type(format!(
                "{}: used both as {} and as {}",
                ctx(),
                have,
                t
            ))),
        }
    }

    fn unify(&mut self, a: usize, b: usize, ctx: &dyn Fn() -> String) -> Result<(), ParseError> {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return Ok(());
        }
        match (self.ty[ra], self.ty[rb]) {
            (Some(x), Some(y)) if x != y => {
                return Err(ParseError::Type(format!("{}: compares {} with {}", ctx(), x, y)))
            }
            (None, t) | (t, None) => {
                self.parent[ra] = rb;
                self.ty[rb] = t.or(self.ty[rb]);
            }
            _ => self.parent[ra] = rb,
        }
        Ok(())
    }

    fn slot(&mut self, scope: &[(String, usize)], free: &mut HashMap<String, usize>, v: &str) -> usize {
        if let Some((_, s)) = scope.iter().rev().find(|(n, _)| n == v) {
            return *s;
        }
        if let Some(&s) = free.get(v) {
            return s;
        }
        let s = self.fresh();
        free.insert(v.to_string(), s);
        s
    }

    fn walk(
        &mut self,
        f: &Formula,
        scope: &mut Vec<(String, usize)>,
        free: &mut HashMap<String, usize>,
    ) -> Result<(), ParseError> {
        match f {
            Formula::Atom { predicate, args } => {
                let table = self.schema.table(predicate).expect("atoms are resolved");
                for (arg, field) in args.iter().zip(&table.fields) {
                    let ctx = || format!("argument `{}` of `{}` ({})", arg, f, field.name);
                    match arg {
                        Term::Var(v) => {
                            let s = self.slot(scope, free, v);
                            self.constrain(s, field.value_type, &ctx)?;
                        }
                        Term::Const(c) if c.value_type() != field.value_type => {
                            return Err(ParseError::Type(format!(
                                "{}: constant {} is not of type {}",
                                ctx(),
                                c,
                                field.value_type
                            )))
                        }
                        Term::Const(_) => {}
                    }
                }
            }
            Formula::Compare { left, op, right } => {
                let ctx = || format!("`{}`", f);
                let side = |t: &Term, me: &mut Self, scope: &mut Vec<(String, usize)>, free: &mut HashMap<String, usize>| match t {
                    Term::Var(v) => (Some(me.slot(scope, free, v)), None),
                    Term::Const(c) => (None, Some(c.value_type())),
                };
                let (ls, lt) = side(left, self, scope, free);
                let (rs, rt) = side(right, self, scope, free);
                match (ls, lt, rs, rt) {
                    (Some(a), _, Some(b), _) => self.unify(a, b, &ctx)?,
                    (Some(a), _, None, Some(t)) | (None, Some(t), Some(a), _) => self.constrain(a, t, &ctx)?,
                    (None, Some(x), None, Some(y)) if x != y => {
                        return Err(ParseError::Type(format!("{}: compares {} with {}", ctx(), x, y)))
                    }
                    _ => {}
                }
                if op.is_ordering() {
                    for (s, t) in [(ls, lt), (rs, rt)] {
                        self.orderings.push((s, t, f.to_string()));
                    }
                }
            }
            Formula::Not(g) => self.walk(g, scope, free)?,
            Formula::And(parts) => {
                for p in parts {
                    self.walk(p, scope, free)?;
                }
            }
            Formula::Or(a, b) => {
                self.walk(a, scope, free)?;
                self.walk(b, scope, free)?;
            }
            Formula::Exists(v, g) | Formula::Forall(v, g) => {
                let s = self.fresh();
                scope.push((v.clone(), s));
                self.walk(g, scope, free)?;
                scope.pop();
            }
        }
        Ok(())
    }
}

/// Check typing: atom arguments agree with field types, compared terms have
/// matching types, and ordering comparisons are over integers only.
pub fn typecheck(f: &Formula, schema: &Schema) -> Result<(), ParseError> {
    let mut t = Typer {
        schema,
        parent: Vec::new(),
        ty: Vec::new(),
        orderings: Vec::new(),
    };
    t.walk(f, &mut Vec::new(), &mut HashMap::new())?;
    for (slot, ty, text) in std::mem::take(&mut t.orderings) {
        let resolved = match (slot, ty) {
            (Some(s), _) => {
                let r = t.find(s);
                t.ty[r]
            }
            (None, ty) => ty,
        };
        if resolved != Some(ValueType::Integer) {
            return Err(ParseError::Type(format!(
                "`{}`: ordering comparisons need integer operands",
                text
            )));
        }
    }
    Ok(())
}

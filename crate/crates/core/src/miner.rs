//! Level-wise search for frequent ER queries and confident ER rules.
//!
//! The language bias is a pool of literal conjunctions. Each pool item, with
//! its non-head variables existentially closed, is a *block*; a candidate is
//! a set of blocks (optionally negated) read as their conjunction. Because a
//! conjunction is never more frequent than any admissible part of it, a
//! candidate with an infrequent admissible sub-candidate is pruned unseen.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use log::{debug, info};
use num_rational::Ratio;
use rayon::prelude::*;
use serde::Deserialize;

use crate::er::{is_er_query, is_valid_for};
use crate::formula::{Formula, QueryDecl, Term};
use crate::parser::{is_variable_name, parse_formula, ParseError, QueryRegistry};
use crate::safety::check_safe;
use crate::schema::{DatabaseInstance, Schema};
use crate::stats::{confidence, decimal, frequency, ErRule, Frequency, StatsError};

#[derive(Debug, thiserror::Error)]
pub enum MineError {
    #[error("invalid bias document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("pool item `{item}`: {source}")]
    Parse { item: String, source: ParseError },
    #[error("invalid bias: {0}")]
    Bias(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BiasDoc {
    head: Vec<String>,
    anchors: Vec<String>,
    pool: Vec<PoolDoc>,
    max_conjuncts: usize,
    #[serde(default)]
    allow_negation: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolDoc {
    name: String,
    literals: String,
}

/// One pool item with a polarity, existentially closed and canonicalized.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub positive: bool,
    pub formula: Formula,
    /// Printed canonical form; equal keys are the same block.
    pub key: String,
    /// Positive, with an anchor-table atom over all head variables.
    pub anchored: bool,
}

#[derive(Clone, Debug)]
pub struct LanguageBias {
    pub head: Vec<String>,
    pub anchors: Vec<String>,
    pub max_conjuncts: usize,
    pub allow_negation: bool,
    /// Sorted by key.
    pub blocks: Vec<Block>,
}

impl LanguageBias {
    pub fn from_json(text: &str, schema: &Schema) -> Result<Self, MineError> {
        let doc: BiasDoc = serde_json::from_str(text)?;
        if doc.head.is_empty() {
            return Err(MineError::Bias("head must list at least one variable".into()));
        }
        if let Some(v) = doc.head.iter().find(|v| !is_variable_name(v)) {
            return Err(MineError::Bias(format!("`{}` is not a variable name", v)));
        }
        if doc.head.iter().collect::<BTreeSet<_>>().len() != doc.head.len() {
            return Err(MineError::Bias("duplicate head variable".into()));
        }
        if let Some(t) = doc.anchors.iter().find(|t| schema.table(t).is_none()) {
            return Err(MineError::Bias(format!("unknown anchor table `{}`", t)));
        }
        if doc.max_conjuncts == 0 {
            return Err(MineError::Bias("max_conjuncts must be positive".into()));
        }
        let mut items = Vec::new();
        for p in &doc.pool {
            let f = parse_formula(&p.literals, schema, &QueryRegistry::new()).map_err(|source| MineError::Parse {
                item: p.name.clone(),
                source,
            })?;
            if let Some(bad) = f.conjuncts().iter().find(|c| !c.is_literal()) {
                return Err(MineError::Bias(format!(
                    "pool item `{}`: `{}` is not a literal",
                    p.name, bad
                )));
            }
            items.push((p.name.clone(), f.conjuncts().to_vec()));
        }
        Ok(Self::new(
            doc.head,
            doc.anchors,
            items,
            doc.max_conjuncts,
            doc.allow_negation,
        ))
    }

    /// Build from named literal lists.
    pub fn new(
        head: Vec<String>,
        anchors: Vec<String>,
        items: Vec<(String, Vec<Formula>)>,
        max_conjuncts: usize,
        allow_negation: bool,
    ) -> Self {
        let mut blocks: Vec<Block> = Vec::new();
        let mut seen = HashSet::new();
        for (name, literals) in items {
            let (formula, anchored) = close_item(&head, &anchors, &literals);
            let mut polarities = vec![(true, formula.clone())];
            if allow_negation {
                polarities.push((false, Formula::not(formula)));
            }
            for (positive, f) in polarities {
                let key = f.to_string();
                if seen.insert(key.clone()) {
                    blocks.push(Block {
                        name: if positive { name.clone() } else { format!("NOT {}", name) },
                        positive,
                        formula: f,
                        key,
                        anchored: anchored && positive,
                    });
                }
            }
        }
        blocks.sort_by(|a, b| a.key.cmp(&b.key));
        LanguageBias {
            head,
            anchors,
            max_conjuncts,
            allow_negation,
            blocks,
        }
    }

    /// The conjunction of the given blocks, as a query over the head.
    pub fn query(&self, blocks: &[usize]) -> QueryDecl {
        let names: Vec<&str> = blocks.iter().map(|&i| self.blocks[i].name.as_str()).collect();
        QueryDecl {
            name: names.join(" & "),
            head: self.head.clone(),
            body: Formula::conjunction(blocks.iter().map(|&i| self.blocks[i].formula.clone()).collect())
                .expect("non-empty candidate"),
        }
    }

    fn names(&self, blocks: &[usize]) -> Vec<String> {
        blocks.iter().map(|&i| self.blocks[i].name.clone()).collect()
    }
}

/// Rename an item's non-head variables in first-use order over its sorted
/// literals and close them existentially.
fn close_item(head: &[String], anchors: &[String], literals: &[Formula]) -> (Formula, bool) {
    let is_local = |v: &str| !head.iter().any(|h| h == v);
    // Order literals by shape, with local variables masked.
    let mask: std::collections::BTreeMap<String, Term> = literals
        .iter()
        .flat_map(|l| l.free_variables())
        .filter(|v| is_local(v))
        .map(|v| (v, Term::var("_")))
        .collect();
    let mut sorted: Vec<&Formula> = literals.iter().collect();
    sorted.sort_by_cached_key(|l| l.substitute(&mask).to_string());

    let mut locals: Vec<String> = Vec::new();
    for l in &sorted {
        for v in l.free_variables() {
            if is_local(&v) && !locals.contains(&v) {
                locals.push(v);
            }
        }
    }
    let mut renaming = std::collections::BTreeMap::new();
    let mut fresh = Vec::new();
    let mut n = 0;
    for v in &locals {
        let name = loop {
            n += 1;
            let cand = format!("L{}", n);
            if !head.contains(&cand) {
                break cand;
            }
        };
        renaming.insert(v.clone(), Term::var(name.clone()));
        fresh.push(name);
    }
    let mut renamed: Vec<Formula> = sorted.iter().map(|l| l.substitute(&renaming)).collect();
    renamed.sort_by_cached_key(|l| l.to_string());
    renamed.dedup();

    let anchored = renamed.iter().any(|l| match l {
        Formula::Atom { predicate, args } => {
            anchors.contains(predicate)
                && head.iter().all(|h| args.iter().any(|t| t.as_var() == Some(h.as_str())))
        }
        _ => false,
    });
    let body = Formula::conjunction(renamed).expect("pool items are non-empty");
    (Formula::exists_all(fresh, body), anchored)
}

/// An admissible candidate: a set of block indices (ascending) and its query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub blocks: Vec<usize>,
    pub query: QueryDecl,
}

/// Why a block set is not a candidate, or `None` if it is one.
fn rejection(bias: &LanguageBias, inst: &DatabaseInstance, blocks: &[usize]) -> Option<String> {
    if !blocks.iter().any(|&i| bias.blocks[i].anchored) {
        return Some("no positive anchor block".into());
    }
    let q = bias.query(blocks);
    let free = q.body.free_variable_set();
    if free != bias.head.iter().cloned().collect() {
        return Some("free variables differ from the head".into());
    }
    let report = check_safe(&q.body.normalize());
    if let Some(v) = report.first() {
        return Some(format!("unsafe: {}", v));
    }
    match is_er_query(&q.body, inst) {
        Ok(r) if r.is_er => {}
        Ok(r) => return Some(format!("not ER: {:?}", r.failures)),
        Err(e) => return Some(e.to_string()),
    }
    if let Some((at, sub)) = is_valid_for(&q.body, &q.head).failure {
        return Some(format!("not valid at {} `{}`", at, sub));
    }
    None
}

fn admit(bias: &LanguageBias, inst: &DatabaseInstance, blocks: Vec<usize>) -> Option<Candidate> {
    match rejection(bias, inst, &blocks) {
        None => Some(Candidate {
            query: bias.query(&blocks),
            blocks,
        }),
        Some(why) => {
            debug!("dropped {{{}}}: {}", bias.names(&blocks).join(", "), why);
            None
        }
    }
}

/// Per-level bookkeeping.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LevelStats {
    pub level: usize,
    /// Distinct block sets considered.
    pub generated: usize,
    /// Discarded by the sub-candidate check before evaluation.
    pub pruned: usize,
    /// Passed the safety, ER and validity checks.
    pub admissible: usize,
    pub frequent: usize,
}

/// Candidates of size `k`. Level 1 is every admissible single block; higher
/// levels extend the `(k-1)`-survivors by one block, drop sets with an
/// admissible `(k-1)`-subset that did not survive, and keep the admissible
/// rest.
pub fn enumerate_level(
    bias: &LanguageBias,
    inst: &DatabaseInstance,
    k: usize,
    survivors: &[Candidate],
) -> (Vec<Candidate>, LevelStats) {
    let mut stats = LevelStats {
        level: k,
        ..LevelStats::default()
    };
    let sets: Vec<Vec<usize>> = if k == 1 {
        (0..bias.blocks.len()).map(|i| vec![i]).collect()
    } else {
        let mut out = BTreeSet::new();
        for s in survivors.iter().filter(|s| s.blocks.len() == k - 1) {
            for b in 0..bias.blocks.len() {
                if !s.blocks.contains(&b) {
                    let mut set = s.blocks.clone();
                    set.push(b);
                    set.sort_unstable();
                    out.insert(set);
                }
            }
        }
        out.into_iter().collect()
    };
    stats.generated = sets.len();
    let alive: BTreeSet<&[usize]> = survivors.iter().map(|s| s.blocks.as_slice()).collect();
    let mut out = Vec::new();
    for set in sets {
        if k > 1 {
            let dominated = (0..set.len()).find_map(|drop| {
                let sub: Vec<usize> = set.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, &b)| b).collect();
                (!alive.contains(sub.as_slice()) && rejection(bias, inst, &sub).is_none()).then_some(sub)
            });
            if let Some(sub) = dominated {
                debug!(
                    "pruned {{{}}}: {{{}}} is infrequent",
                    bias.names(&set).join(", "),
                    bias.names(&sub).join(", ")
                );
                stats.pruned += 1;
                continue;
            }
        }
        if let Some(c) = admit(bias, inst, set) {
            out.push(c);
        }
    }
    stats.admissible = out.len();
    (out, stats)
}

/// Every admissible block set of size `k`, without any pruning.
pub fn enumerate_exhaustive(bias: &LanguageBias, inst: &DatabaseInstance, k: usize) -> (Vec<Candidate>, LevelStats) {
    let mut sets = Vec::new();
    combinations(bias.blocks.len(), k, 0, &mut Vec::new(), &mut sets);
    let mut stats = LevelStats {
        level: k,
        generated: sets.len(),
        ..LevelStats::default()
    };
    let out: Vec<Candidate> = sets.into_iter().filter_map(|s| admit(bias, inst, s)).collect();
    stats.admissible = out.len();
    (out, stats)
}

fn combinations(n: usize, k: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in from..n {
        cur.push(i);
        combinations(n, k, i + 1, cur, out);
        cur.pop();
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequentQuery {
    pub blocks: Vec<usize>,
    pub names: Vec<String>,
    pub query: QueryDecl,
    pub frequency: Frequency,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinedRule {
    pub antecedent_names: Vec<String>,
    pub consequent_names: Vec<String>,
    pub rule: ErRule,
    pub support: Frequency,
    pub confidence: Frequency,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MiningResult {
    pub min_support: Option<Ratio<u64>>,
    pub min_confidence: Option<Ratio<u64>>,
    pub frequent: Vec<FrequentQuery>,
    pub rules: Vec<MinedRule>,
    pub levels: Vec<LevelStats>,
}

#[derive(Clone, Copy, Debug)]
pub struct MineOptions {
    pub min_support: Ratio<u64>,
    /// Caps the bias's `max_conjuncts`.
    pub max_level: Option<usize>,
    /// Evaluate every admissible candidate (differential mode).
    pub no_prune: bool,
}

fn frequency_of(inst: &DatabaseInstance, c: &Candidate) -> Option<Frequency> {
    match frequency(inst, &c.query) {
        Ok(f) => Some(f),
        Err(e) => {
            info!("skipped `{}`: {}", c.query.body, e);
            None
        }
    }
}

/// Frequent candidates, level by level.
pub fn mine_frequent(inst: &DatabaseInstance, bias: &LanguageBias, opts: &MineOptions) -> MiningResult {
    let top = opts.max_level.map_or(bias.max_conjuncts, |m| m.min(bias.max_conjuncts));
    let mut result = MiningResult {
        min_support: Some(opts.min_support),
        ..MiningResult::default()
    };
    let mut survivors: Vec<Candidate> = Vec::new();
    for k in 1..=top {
        let (cands, mut stats) = if opts.no_prune {
            enumerate_exhaustive(bias, inst, k)
        } else {
            enumerate_level(bias, inst, k, &survivors)
        };
        let freqs: Vec<Option<Frequency>> = cands.par_iter().map(|c| frequency_of(inst, c)).collect();
        survivors.clear();
        for (c, f) in cands.into_iter().zip(freqs) {
            let Some(f) = f else { continue };
            if f.value >= opts.min_support {
                result.frequent.push(FrequentQuery {
                    names: bias.names(&c.blocks),
                    blocks: c.blocks.clone(),
                    query: c.query.clone(),
                    frequency: f,
                });
                survivors.push(c);
            }
        }
        stats.frequent = survivors.len();
        info!(
            "level {}: {} generated, {} pruned, {} admissible, {} frequent",
            k, stats.generated, stats.pruned, stats.admissible, stats.frequent
        );
        result.levels.push(stats);
        if survivors.is_empty() && !opts.no_prune {
            break;
        }
    }
    result
}

/// Rules from splitting each frequent conjunction into antecedent and
/// consequent blocks; the antecedent must itself be a safe query over the
/// head.
pub fn mine_rules(
    inst: &DatabaseInstance,
    bias: &LanguageBias,
    frequent: &[FrequentQuery],
    min_confidence: Ratio<u64>,
) -> Vec<MinedRule> {
    let mut jobs = Vec::new();
    for fq in frequent.iter().filter(|f| f.blocks.len() >= 2) {
        let n = fq.blocks.len();
        for mask in 1..(1u32 << n) - 1 {
            let (mut ante, mut cons) = (Vec::new(), Vec::new());
            for (i, &b) in fq.blocks.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    ante.push(b);
                } else {
                    cons.push(b);
                }
            }
            jobs.push((fq, ante, cons));
        }
    }
    let found: Vec<Option<MinedRule>> = jobs
        .par_iter()
        .map(|(fq, ante, cons)| {
            let antecedent = bias.query(ante);
            if antecedent.body.free_variable_set() != bias.head.iter().cloned().collect()
                || !check_safe(&antecedent.body.normalize()).is_safe()
            {
                debug!("rule skipped: antecedent {{{}}} is not a safe head query", bias.names(ante).join(", "));
                return None;
            }
            let consequent = Formula::conjunction(cons.iter().map(|&i| bias.blocks[i].formula.clone()).collect())
                .expect("non-empty consequent");
            let rule = ErRule::new(antecedent, consequent).ok()?;
            match confidence(inst, &rule) {
                Ok(c) if c.value >= min_confidence => Some(MinedRule {
                    antecedent_names: bias.names(ante),
                    consequent_names: bias.names(cons),
                    rule,
                    support: fq.frequency,
                    confidence: c,
                }),
                Ok(_) => None,
                Err(StatsError::ZeroAntecedent) => {
                    info!("rule skipped: antecedent {{{}}} has no answers", bias.names(ante).join(", "));
                    None
                }
                Err(e) => {
                    info!("rule skipped: {}", e);
                    None
                }
            }
        })
        .collect();
    found.into_iter().flatten().collect()
}

/// Frequent queries and rules in one pass.
pub fn mine(
    inst: &DatabaseInstance,
    bias: &LanguageBias,
    opts: &MineOptions,
    min_confidence: Option<Ratio<u64>>,
) -> MiningResult {
    let mut result = mine_frequent(inst, bias, opts);
    if let Some(mc) = min_confidence {
        result.rules = mine_rules(inst, bias, &result.frequent, mc);
        result.min_confidence = Some(mc);
    }
    result
}

impl MiningResult {
    /// Deterministic text report.
    pub fn report(&self) -> String {
        let mut s = String::new();
        for l in &self.levels {
            let _ = writeln!(
                s,
                "level {}: {} generated, {} pruned, {} admissible, {} frequent",
                l.level, l.generated, l.pruned, l.admissible, l.frequent
            );
        }
        let ms = self.min_support.map(|r| r.to_string()).unwrap_or_default();
        let _ = writeln!(s, "\nfrequent queries (min support {}):", ms);
        for f in &self.frequent {
            let _ = writeln!(
                s,
                "  {:<7} {}  [{}]",
                f.frequency.value.to_string(),
                f.query.body,
                f.names.join(", ")
            );
        }
        if let Some(mc) = self.min_confidence {
            let _ = writeln!(s, "\nrules (min confidence {}):", mc);
            for r in &self.rules {
                let _ = writeln!(
                    s,
                    "  [{}] -> [{}]  support {} ({})  confidence {} ({})",
                    r.antecedent_names.join(", "),
                    r.consequent_names.join(", "),
                    r.support.value,
                    decimal(r.support.value),
                    r.confidence.value,
                    decimal(r.confidence.value),
                );
            }
        }
        s
    }

    /// `query,support,confidence` rows: frequent queries, then rules.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["query", "support", "confidence"]).expect("in-memory write");
        for f in &self.frequent {
            w.write_record([f.query.body.to_string(), f.frequency.value.to_string(), String::new()])
                .expect("in-memory write");
        }
        for r in &self.rules {
            w.write_record([
                r.rule.to_string(),
                r.support.value.to_string(),
                r.confidence.value.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
    }
}

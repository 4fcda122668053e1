//! Weighted soft implication rules `a => b (w)`: mining from label
//! co-occurrence, the `soft_rule("a","b",w).` text format, and validation
//! against a label vocabulary.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, LabelVocab, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Mined,
    Expert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub premise: String,
    pub conclusion: String,
    pub weight: f64,
    /// Joint support P(a and b) for mined rules.
    pub support: Option<f64>,
    pub origin: Origin,
}

fn weight_ok(w: f64) -> bool {
    w > 0.0 && w <= 1.0
}

impl Rule {
    pub fn new(
        premise: impl Into<String>,
        conclusion: impl Into<String>,
        weight: f64,
        origin: Origin,
    ) -> Result<Self> {
        let premise = premise.into();
        let conclusion = conclusion.into();
        if !weight_ok(weight) {
            return Err(Error::InvalidWeight(weight));
        }
        if premise == conclusion {
            return Err(Error::SelfImplication(premise));
        }
        Ok(Rule {
            premise,
            conclusion,
            weight,
            support: None,
            origin,
        })
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.premise, &self.conclusion)
    }
}

/// A rule resolved against a vocabulary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexedRule {
    pub premise: usize,
    pub conclusion: usize,
    pub weight: f64,
}

/// Ordered rules with unique `(premise, conclusion)` keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rules.len());
        for r in &rules {
            if !weight_ok(r.weight) {
                return Err(Error::InvalidWeight(r.weight));
            }
            if r.premise == r.conclusion {
                return Err(Error::SelfImplication(r.premise.clone()));
            }
            if !seen.insert(r.key()) {
                return Err(Error::DuplicateRule {
                    premise: r.premise.clone(),
                    conclusion: r.conclusion.clone(),
                });
            }
        }
        Ok(RuleSet { rules })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Rule> {
        self.rules.iter()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Resolves label names to vocabulary positions.
    pub fn index(&self, vocab: &LabelVocab) -> Result<Vec<IndexedRule>> {
        self.rules
            .iter()
            .map(|r| {
                Ok(IndexedRule {
                    premise: vocab.require(&r.premise)?,
                    conclusion: vocab.require(&r.conclusion)?,
                    weight: r.weight,
                })
            })
            .collect()
    }
}

impl<'a> IntoIterator for &'a RuleSet {
    type Item = &'a Rule;
    type IntoIter = std::slice::Iter<'a, Rule>;

    fn into_iter(self) -> Self::IntoIter {
        self.rules.iter()
    }
}

/// Mines `a => b` for every ordered label pair with `P(a) >= min_support`
/// and `P(b | a) >= min_confidence`. The weight is the confidence itself.
pub fn mine_rules(dataset: &Dataset, min_support: f64, min_confidence: f64) -> Result<RuleSet> {
    if dataset.split != Split::Train {
        return Err(Error::InvalidArgument(format!(
            "rules must be mined from the train split, got {}",
            dataset.split
        )));
    }
    if !(0.0..=1.0).contains(&min_support) {
        return Err(Error::InvalidArgument(format!(
            "min_support {min_support} outside [0, 1]"
        )));
    }
    if !(min_confidence > 0.0 && min_confidence <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "min_confidence {min_confidence} outside (0, 1]"
        )));
    }
    let m = dataset.vocab.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "rule mining needs at least 2 labels, vocabulary has {m}"
        )));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let n = dataset.len() as f64;
    let mut single = vec![0usize; m];
    let mut pair = vec![0usize; m * m];
    for r in &dataset.records {
        let idx: Vec<usize> = r
            .labels
            .iter()
            .map(|l| dataset.vocab.require(l))
            .collect::<Result<_>>()?;
        for &a in &idx {
            single[a] += 1;
            for &b in &idx {
                pair[a * m + b] += 1;
            }
        }
    }

    let mut rules = Vec::new();
    for a in 0..m {
        if single[a] == 0 || (single[a] as f64 / n) < min_support {
            continue;
        }
        for b in (0..m).filter(|&b| b != a) {
            let joint = pair[a * m + b];
            let confidence = joint as f64 / single[a] as f64;
            if confidence >= min_confidence {
                rules.push(Rule {
                    premise: dataset.vocab.name(a).to_string(),
                    conclusion: dataset.vocab.name(b).to_string(),
                    weight: confidence,
                    support: Some(joint as f64 / n),
                    origin: Origin::Mined,
                });
            }
        }
    }
    rules.sort_by(|x, y| {
        y.weight
            .total_cmp(&x.weight)
            .then_with(|| x.key().cmp(&y.key()))
    });
    RuleSet::new(rules)
}

/// Merges expert rules into a mined set. Keys present in both keep the
/// mined position but take the expert weight; expert-only rules are appended.
pub fn merge_rules(mined: &RuleSet, expert: &RuleSet) -> RuleSet {
    let overrides: BTreeMap<(&str, &str), &Rule> = expert.iter().map(|r| (r.key(), r)).collect();
    let mut out: Vec<Rule> = mined
        .iter()
        .map(|r| match overrides.get(&r.key()) {
            Some(e) => (*e).clone(),
            None => r.clone(),
        })
        .collect();
    let have: HashSet<(String, String)> = mined
        .iter()
        .map(|r| (r.premise.clone(), r.conclusion.clone()))
        .collect();
    out.extend(
        expert
            .iter()
            .filter(|r| !have.contains(&(r.premise.clone(), r.conclusion.clone())))
            .cloned(),
    );
    // both inputs already satisfy the set invariants and keys are disjoint
    RuleSet { rules: out }
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: msg.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn skip_ws(&mut self) {
        let r = self.rest();
        self.pos += r.len() - r.trim_start().len();
    }

    fn expect(&mut self, tok: &str) -> Result<()> {
        self.skip_ws();
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            Ok(())
        } else {
            Err(self.err(format!("expected `{tok}`")))
        }
    }

    fn term(&mut self) -> Result<String> {
        self.skip_ws();
        let rest = self.rest();
        if let Some(body) = rest.strip_prefix('"') {
            let mut out = String::new();
            let mut chars = body.char_indices();
            while let Some((i, c)) = chars.next() {
                match c {
                    '"' => {
                        self.pos += 1 + i + 1;
                        return Ok(out);
                    }
                    '\\' => match chars.next() {
                        Some((_, e @ ('"' | '\\'))) => out.push(e),
                        Some((_, 'n')) => out.push('\n'),
                        _ => return Err(self.err("bad escape in string")),
                    },
                    c => out.push(c),
                }
            }
            Err(self.err("unterminated string"))
        } else {
            let len = rest
                .find(|c: char| !(c.is_alphanumeric() || c == '_'))
                .unwrap_or(rest.len());
            if len == 0 {
                return Err(self.err("expected a label"));
            }
            self.pos += len;
            Ok(rest[..len].to_string())
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
            .unwrap_or(rest.len());
        let text = &rest[..len];
        let value = text
            .parse::<f64>()
            .map_err(|_| self.err(format!("bad weight `{text}`")))?;
        self.pos += text.len();
        Ok(value)
    }
}

/// Parses `soft_rule(premise, conclusion, weight).` facts, one per line.
/// Blank lines and `%` comments are skipped. Parsed rules have origin `expert`.
pub fn parse_rules(text: &str) -> Result<RuleSet> {
    let mut rules: Vec<Rule> = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let mut c = Cursor {
            s: line,
            pos: 0,
            line: i + 1,
        };
        c.expect("soft_rule")?;
        c.expect("(")?;
        let premise = c.term()?;
        c.expect(",")?;
        let conclusion = c.term()?;
        c.expect(",")?;
        let weight = c.number()?;
        c.expect(")")?;
        c.expect(".")?;
        c.skip_ws();
        if !(c.rest().is_empty() || c.rest().starts_with('%')) {
            return Err(c.err("trailing input after rule"));
        }

        if !weight_ok(weight) {
            return Err(Error::WeightRange {
                line: i + 1,
                weight,
            });
        }
        if premise == conclusion {
            return Err(Error::SelfImplication(premise));
        }
        if !seen.insert((premise.clone(), conclusion.clone())) {
            return Err(Error::DuplicateRule {
                premise,
                conclusion,
            });
        }
        rules.push(Rule {
            premise,
            conclusion,
            weight,
            support: None,
            origin: Origin::Expert,
        });
    }
    Ok(RuleSet { rules })
}

fn quote(label: &str) -> String {
    let mut s = String::with_capacity(label.len() + 2);
    s.push('"');
    for c in label.chars() {
        match c {
            '"' => s.push_str("\\\""),
            '\\' => s.push_str("\\\\"),
            '\n' => s.push_str("\\n"),
            c => s.push(c),
        }
    }
    s.push('"');
    s
}

/// One `soft_rule("a","b",w).` line per rule, weight at four decimals.
pub fn serialize_rules(rules: &RuleSet) -> String {
    let mut out = String::new();
    for r in rules {
        // keep tiny weights parseable: 0.0000 would be rejected on read
        let w = r.weight.max(1e-4);
        let _ = writeln!(
            out,
            "soft_rule({},{},{:.4}).",
            quote(&r.premise),
            quote(&r.conclusion),
            w
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnknownLabel {
    pub rule_index: usize,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub unknown_labels: Vec<UnknownLabel>,
    /// Elementary directed cycles, each starting at its smallest label.
    pub cycles: Vec<Vec<String>>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.unknown_labels.is_empty() && self.cycles.is_empty()
    }
}

pub fn validate_ruleset(rules: &RuleSet, vocab: &LabelVocab) -> ValidationReport {
    let mut unknown_labels = Vec::new();
    for (i, r) in rules.iter().enumerate() {
        for label in [&r.premise, &r.conclusion] {
            if !vocab.contains(label) {
                unknown_labels.push(UnknownLabel {
                    rule_index: i,
                    label: label.clone(),
                });
            }
        }
    }
    ValidationReport {
        unknown_labels,
        cycles: find_cycles(rules),
    }
}

fn find_cycles(rules: &RuleSet) -> Vec<Vec<String>> {
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in rules {
        adj.entry(&r.premise).or_default().insert(&r.conclusion);
        adj.entry(&r.conclusion).or_default();
    }

    fn walk<'a>(
        start: &'a str,
        node: &'a str,
        adj: &BTreeMap<&'a str, BTreeSet<&'a str>>,
        path: &mut Vec<&'a str>,
        out: &mut Vec<Vec<String>>,
    ) {
        for &next in &adj[node] {
            if next == start {
                out.push(path.iter().map(|s| s.to_string()).collect());
            } else if next > start && !path.contains(&next) {
                path.push(next);
                walk(start, next, adj, path, out);
                path.pop();
            }
        }
    }

    let mut out = Vec::new();
    for &start in adj.keys() {
        let mut path = vec![start];
        walk(start, start, &adj, &mut path, &mut out);
    }
    out
}

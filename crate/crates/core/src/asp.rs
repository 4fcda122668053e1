//! ASP encoding of soft rules and a solver-free violation auditor.
//!
//! A rule `a => b (w)` becomes
//!
//! ```text
//! :~ holds("a"), not holds("b"). [W@1,"a","b"]
//! violation("a","b") :- holds("a"), not holds("b").
//! ```
//!
//! with the integer penalty `W = max(1, round(100 w))`. Grounded with one
//! document's `holds/1` facts the program is stratified, so its answer set
//! is unique and `violation/2` holds exactly for the pairs the auditor counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io::Write as _;
use std::path::Path;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::PredictionBatch;
use crate::rulekit::RuleSet;

pub const PROGRAM_HEADER: &str = "% soft implication rules as weak constraints\n";

#[derive(Debug, Clone, PartialEq)]
pub struct AspProgram {
    pub text: String,
    /// Weak-constraint line emitted for each `(premise, conclusion)`.
    pub rule_index: BTreeMap<(String, String), String>,
}

fn asp_string(label: &str) -> Result<String> {
    if label
        .chars()
        .any(|c| c == '"' || c == '\\' || c.is_control())
    {
        return Err(Error::Encoding(label.to_string()));
    }
    Ok(format!("\"{label}\""))
}

/// Integer penalty for a rule weight in (0, 1].
pub fn penalty(weight: f64) -> u32 {
    ((100.0 * weight).round() as u32).clamp(1, 100)
}

pub fn emit_weak_constraints(rules: &RuleSet) -> Result<AspProgram> {
    let mut text = String::from(PROGRAM_HEADER);
    let mut rule_index = BTreeMap::new();
    for r in rules {
        if !(r.weight > 0.0 && r.weight <= 1.0) {
            return Err(Error::InvalidWeight(r.weight));
        }
        let a = asp_string(&r.premise)?;
        let b = asp_string(&r.conclusion)?;
        let constraint = format!(
            ":~ holds({a}), not holds({b}). [{}@1,{a},{b}]",
            penalty(r.weight)
        );
        let _ = writeln!(text, "{constraint}");
        let _ = writeln!(text, "violation({a},{b}) :- holds({a}), not holds({b}).");
        rule_index.insert((r.premise.clone(), r.conclusion.clone()), constraint);
    }
    Ok(AspProgram { text, rule_index })
}

/// `holds("label").` for every predicted label of one document, sorted by name.
pub fn emit_prediction_facts(batch: &PredictionBatch, doc_index: usize) -> Result<String> {
    if doc_index >= batch.len() {
        return Err(Error::OutOfRange {
            index: doc_index,
            len: batch.len(),
        });
    }
    let mut active: Vec<&str> = batch
        .decisions
        .row(doc_index)
        .iter()
        .enumerate()
        .filter(|(_, d)| **d != 0)
        .map(|(j, _)| batch.vocab.name(j))
        .collect();
    active.sort_unstable();
    let facts = active
        .into_iter()
        .map(|l| Ok(format!("holds({}).", asp_string(l)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(facts.join("\n"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleViolations {
    pub premise: String,
    pub conclusion: String,
    pub premise_active: usize,
    pub violated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub total: usize,
    /// (document, rule) pairs whose premise is predicted.
    pub active_premises: usize,
    pub num_docs: usize,
    pub rate_percent: f64,
    pub per_doc: f64,
    pub per_1k: f64,
    pub per_rule: Vec<RuleViolations>,
}

impl ViolationReport {
    /// Derives the normalized figures from raw counts. The rate is 0 when
    /// no premise is active; per-document figures are 0 for an empty batch.
    pub fn from_counts(total: usize, active_premises: usize, num_docs: usize) -> Self {
        let rate_percent = if active_premises == 0 {
            0.0
        } else {
            100.0 * total as f64 / active_premises as f64
        };
        let per_doc = if num_docs == 0 {
            0.0
        } else {
            total as f64 / num_docs as f64
        };
        ViolationReport {
            total,
            active_premises,
            num_docs,
            rate_percent,
            per_doc,
            per_1k: 1000.0 * per_doc,
            per_rule: Vec::new(),
        }
    }

    /// Combines reports over disjoint document sets audited with the same rules.
    pub fn merge(&self, other: &ViolationReport) -> Result<ViolationReport> {
        let same_rules = self.per_rule.len() == other.per_rule.len()
            && self
                .per_rule
                .iter()
                .zip(&other.per_rule)
                .all(|(x, y)| x.premise == y.premise && x.conclusion == y.conclusion);
        if !same_rules {
            return Err(Error::InvalidArgument(
                "cannot merge violation reports over different rule sets".into(),
            ));
        }
        let mut out = ViolationReport::from_counts(
            self.total + other.total,
            self.active_premises + other.active_premises,
            self.num_docs + other.num_docs,
        );
        out.per_rule = self
            .per_rule
            .iter()
            .zip(&other.per_rule)
            .map(|(x, y)| RuleViolations {
                premise: x.premise.clone(),
                conclusion: x.conclusion.clone(),
                premise_active: x.premise_active + y.premise_active,
                violated: x.violated + y.violated,
            })
            .collect();
        Ok(out)
    }
}

impl fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "violations={} rate_percent={:.2} per_doc={:.4} per_1k={:.1}",
            self.total, self.rate_percent, self.per_doc, self.per_1k
        )
    }
}

pub fn audit_violations(batch: &PredictionBatch, rules: &RuleSet) -> Result<ViolationReport> {
    let indexed = rules.index(&batch.vocab)?;
    let mut per_rule: Vec<RuleViolations> = rules
        .iter()
        .map(|r| RuleViolations {
            premise: r.premise.clone(),
            conclusion: r.conclusion.clone(),
            premise_active: 0,
            violated: 0,
        })
        .collect();
    for row in batch.decisions.rows() {
        for (counts, r) in per_rule.iter_mut().zip(&indexed) {
            if row[r.premise] != 0 {
                counts.premise_active += 1;
                if row[r.conclusion] == 0 {
                    counts.violated += 1;
                }
            }
        }
    }
    let total = per_rule.iter().map(|c| c.violated).sum();
    let active = per_rule.iter().map(|c| c.premise_active).sum();
    let mut report = ViolationReport::from_counts(total, active, batch.len());
    report.per_rule = per_rule;
    Ok(report)
}

/// Violated `(premise, conclusion)` pairs for each document.
pub fn violated_pairs(
    batch: &PredictionBatch,
    rules: &RuleSet,
) -> Result<Vec<BTreeSet<(String, String)>>> {
    let indexed = rules.index(&batch.vocab)?;
    Ok(batch
        .decisions
        .rows()
        .into_iter()
        .map(|row| {
            rules
                .iter()
                .zip(&indexed)
                .filter(|(_, ir)| row[ir.premise] != 0 && row[ir.conclusion] == 0)
                .map(|(r, _)| (r.premise.clone(), r.conclusion.clone()))
                .collect()
        })
        .collect())
}

/// Grounds `program` with `facts` using an external clingo executable and
/// returns the `violation/2` atoms of the optimal answer set.
pub fn clingo_violations(
    clingo: &Path,
    program: &AspProgram,
    facts: &str,
) -> Result<BTreeSet<(String, String)>> {
    let mut child = Command::new(clingo)
        .args(["--outf=2", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Solver(format!("cannot start {}: {e}", clingo.display())))?;
    {
        let stdin = child.stdin.as_mut().expect("piped stdin");
        let input = format!("{}{}\n#show violation/2.\n", program.text, facts);
        stdin
            .write_all(input.as_bytes())
            .map_err(|e| Error::Solver(e.to_string()))?;
    }
    let out = child
        .wait_with_output()
        .map_err(|e| Error::Solver(e.to_string()))?;

    #[derive(Deserialize)]
    struct Witness {
        #[serde(rename = "Value", default)]
        value: Vec<String>,
    }
    #[derive(Deserialize)]
    struct Call {
        #[serde(rename = "Witnesses", default)]
        witnesses: Vec<Witness>,
    }
    #[derive(Deserialize)]
    struct Output {
        #[serde(rename = "Call")]
        call: Vec<Call>,
    }

    let parsed: Output = serde_json::from_slice(&out.stdout).map_err(|e| {
        Error::Solver(format!(
            "unreadable solver output ({e}): {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    })?;
    // the last witness of an optimization run is the optimal model
    let atoms = parsed
        .call
        .last()
        .and_then(|c| c.witnesses.last())
        .ok_or_else(|| Error::Solver("no answer set".into()))?;
    atoms
        .value
        .iter()
        .map(|a| parse_violation_atom(a))
        .collect()
}

fn parse_violation_atom(atom: &str) -> Result<(String, String)> {
    let bad = || Error::Solver(format!("unexpected atom {atom}"));
    let inner = atom
        .strip_prefix("violation(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(bad)?;
    let (a, b) = inner.split_once("\",\"").ok_or_else(bad)?;
    let a = a.strip_prefix('"').ok_or_else(bad)?;
    let b = b.strip_suffix('"').ok_or_else(bad)?;
    Ok((a.to_string(), b.to_string()))
}

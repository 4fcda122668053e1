//! Rule-based label augmentation: for every training record where a rule's
//! premise is present and its conclusion absent, add one copy of the record
//! with the missing conclusions switched on. Originals are always kept.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::Serialize;

use crate::corpus::{Dataset, Record, Split};
use crate::error::{Error, Result};
use crate::rulekit::RuleSet;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AugmentOptions {
    /// Upper bound on added records as a percentage of the original size.
    pub max_growth_percent: Option<f64>,
    /// Apply rules repeatedly until no rule fires (otherwise a single step).
    pub closure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleAdditions {
    pub premise: String,
    pub conclusion: String,
    pub added: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentationSummary {
    pub original_size: usize,
    pub added: usize,
    pub per_rule_added: Vec<RuleAdditions>,
    pub growth_percent: f64,
}

struct Candidate {
    record: usize,
    labels: BTreeSet<String>,
    fired: Vec<usize>,
    max_weight: f64,
}

pub fn augment_dataset(
    dataset: &Dataset,
    rules: &RuleSet,
    options: AugmentOptions,
) -> Result<(Dataset, AugmentationSummary)> {
    if dataset.split != Split::Train {
        return Err(Error::InvalidArgument(format!(
            "augmentation applies to the train split, got {}",
            dataset.split
        )));
    }
    if let Some(g) = options.max_growth_percent {
        if g.is_nan() || g < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "max growth {g} must be >= 0"
            )));
        }
    }
    // resolve every label up front so unknown labels fail before any work
    rules.index(&dataset.vocab)?;

    let mut candidates = Vec::new();
    for (i, rec) in dataset.records.iter().enumerate() {
        let mut labels = rec.labels.clone();
        let mut fired = Vec::new();
        loop {
            let step: Vec<usize> = rules
                .iter()
                .enumerate()
                .filter(|(k, r)| {
                    !fired.contains(k)
                        && labels.contains(&r.premise)
                        && !labels.contains(&r.conclusion)
                })
                .map(|(k, _)| k)
                .collect();
            if step.is_empty() {
                break;
            }
            for &k in &step {
                labels.insert(rules.rules()[k].conclusion.clone());
            }
            fired.extend(step);
            if !options.closure {
                break;
            }
        }
        if !fired.is_empty() {
            let max_weight = fired
                .iter()
                .map(|&k| rules.rules()[k].weight)
                .fold(f64::MIN, f64::max);
            candidates.push(Candidate {
                record: i,
                labels,
                fired,
                max_weight,
            });
        }
    }

    if let Some(g) = options.max_growth_percent {
        let cap = (g / 100.0 * dataset.len() as f64).floor() as usize;
        if candidates.len() > cap {
            candidates.sort_by(|a, b| {
                b.max_weight
                    .total_cmp(&a.max_weight)
                    .then(a.record.cmp(&b.record))
            });
            candidates.truncate(cap);
            candidates.sort_by_key(|c| c.record);
        }
    }

    let mut ids: HashSet<String> = dataset.records.iter().map(|r| r.id.clone()).collect();
    let mut per_rule = vec![0usize; rules.len()];
    let mut records = dataset.records.clone();
    for c in &candidates {
        let base = &dataset.records[c.record].id;
        let mut k = 1;
        let id = loop {
            let id = format!("{base}#aug{k}");
            if !ids.contains(&id) {
                break id;
            }
            k += 1;
        };
        ids.insert(id.clone());
        for &r in &c.fired {
            per_rule[r] += 1;
        }
        records.push(Record {
            id,
            text: dataset.records[c.record].text.clone(),
            labels: c.labels.clone(),
        });
    }

    let added = candidates.len();
    let summary = AugmentationSummary {
        original_size: dataset.len(),
        added,
        per_rule_added: rules
            .iter()
            .zip(per_rule)
            .map(|(r, n)| RuleAdditions {
                premise: r.premise.clone(),
                conclusion: r.conclusion.clone(),
                added: n,
            })
            .collect(),
        growth_percent: if dataset.is_empty() {
            0.0
        } else {
            100.0 * added as f64 / dataset.len() as f64
        },
    };
    let out = Dataset::new(records, dataset.vocab.clone(), Split::Train)?;
    Ok((out, summary))
}

/// Per-rule addition counts keyed by `(premise, conclusion)`.
pub fn additions_by_rule(summary: &AugmentationSummary) -> BTreeMap<(String, String), usize> {
    summary
        .per_rule_added
        .iter()
        .map(|r| ((r.premise.clone(), r.conclusion.clone()), r.added))
        .collect()
}

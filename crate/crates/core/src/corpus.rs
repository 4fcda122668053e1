//! Multi-label records, the label vocabulary, dataset files and the
//! synthetic planted-rule generator used by the test fixtures.
//!
//! Dataset files hold one JSON object per line:
//!
//! ```text
//! {"id":"r1","text":"engine fire after takeoff","labels":["Engine Failure","Emergency Landing"]}
//! ```

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rulekit::RuleSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub text: String,
    pub labels: BTreeSet<String>,
}

/// Ordered label space. Positions follow lexicographic order of the names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocab {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sorted: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        let labels: Vec<String> = sorted.into_iter().collect();
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        LabelVocab { labels, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Like [`index_of`](Self::index_of) but an absent label is a vocabulary error.
    pub fn require(&self, label: &str) -> Result<usize> {
        self.index_of(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    /// Inverse of [`encode_labels`].
    pub fn decode(&self, multi_hot: &[u8]) -> BTreeSet<String> {
        multi_hot
            .iter()
            .zip(&self.labels)
            .filter(|(v, _)| **v != 0)
            .map(|(_, l)| l.clone())
            .collect()
    }
}

impl Serialize for LabelVocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.labels.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelVocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<String>::deserialize(d)?;
        let vocab = LabelVocab::new(labels.iter().cloned());
        if vocab.labels != labels {
            return Err(serde::de::Error::custom(
                "label vocabulary must be sorted and free of duplicates",
            ));
        }
        Ok(vocab)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub vocab: LabelVocab,
    pub split: Split,
}

/// Side information gathered while loading a dataset file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    /// Number of repeated labels dropped from individual records.
    pub duplicate_labels: usize,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    labels: Vec<String>,
}

#[derive(Serialize)]
struct RecordLine<'a> {
    id: &'a str,
    text: &'a str,
    labels: &'a BTreeSet<String>,
}

impl Dataset {
    /// Builds a dataset, checking id uniqueness and that every label is in `vocab`.
    pub fn new(records: Vec<Record>, vocab: LabelVocab, split: Split) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.id.is_empty() {
                return Err(Error::InvalidArgument("record id must be non-empty".into()));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
            if let Some(l) = r.labels.iter().find(|l| !vocab.contains(l)) {
                return Err(Error::UnknownLabel(l.clone()));
            }
        }
        Ok(Dataset {
            records,
            vocab,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Multi-hot targets, one row per record.
    pub fn targets(&self) -> ndarray::Array2<u8> {
        let m = self.vocab.len();
        let mut out = ndarray::Array2::zeros((self.records.len(), m));
        for (i, r) in self.records.iter().enumerate() {
            for l in &r.labels {
                // labels were checked against the vocab on construction
                out[[i, self.vocab.index_of(l).unwrap()]] = 1;
            }
        }
        out
    }

    pub fn texts(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.text.as_str()).collect()
    }

    /// Serializes to the line-oriented file format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = RecordLine {
                id: &r.id,
                text: &r.text,
                labels: &r.labels,
            };
            // string-keyed struct serialization cannot fail
            out.push_str(&serde_json::to_string(&line).unwrap());
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Parses dataset file contents. Blank lines are skipped.
pub fn parse_dataset(
    contents: &str,
    vocab: Option<&LabelVocab>,
    split: Split,
) -> Result<(Dataset, LoadStats)> {
    let mut stats = LoadStats::default();
    let mut records = Vec::new();
    for (lineno, line) in contents.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let n = raw.labels.len();
        let labels: BTreeSet<String> = raw.labels.into_iter().collect();
        if labels.len() < n {
            stats.duplicate_labels += n - labels.len();
            log::warn!(
                "line {}: record {:?} has duplicate labels, deduplicated",
                lineno + 1,
                raw.id
            );
        }
        if let Some(v) = vocab {
            if let Some(l) = labels.iter().find(|l| !v.contains(l)) {
                return Err(Error::UnknownLabel(l.clone()));
            }
        }
        records.push(Record {
            id: raw.id,
            text: raw.text,
            labels,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let vocab = match vocab {
        Some(v) => v.clone(),
        None => LabelVocab::new(records.iter().flat_map(|r| r.labels.iter().cloned())),
    };
    Ok((Dataset::new(records, vocab, split)?, stats))
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    vocab: Option<&LabelVocab>,
    split: Split,
) -> Result<(Dataset, LoadStats)> {
    let path = path.as_ref();
    let contents = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&contents, vocab, split)
}

pub fn encode_labels(record: &Record, vocab: &LabelVocab) -> Result<Vec<u8>> {
    let mut out = vec![0u8; vocab.len()];
    for l in &record.labels {
        out[vocab.require(l)?] = 1;
    }
    Ok(out)
}

/// Seeded partition into train/validation/test. Every part keeps the full vocabulary.
pub fn split_dataset(
    dataset: &Dataset,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    if !(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fractions train={train_frac} val={val_frac} must be positive and sum to at most 1"
        )));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * train_frac).round() as usize;
    let n_val = ((n as f64 * val_frac).round() as usize).min(n - n_train);
    let take = |idx: &[usize], split| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        let records = idx.iter().map(|&i| dataset.records[i].clone()).collect();
        Dataset {
            records,
            vocab: dataset.vocab.clone(),
            split,
        }
    };
    Ok((
        take(&order[..n_train], Split::Train),
        take(&order[n_train..n_train + n_val], Split::Validation),
        take(&order[n_train + n_val..], Split::Test),
    ))
}

/// Name of the `index`-th synthetic label.
pub fn synthetic_label(index: usize) -> String {
    format!("L{index}")
}

fn synthetic_index(name: &str, vocab_size: usize) -> Result<usize> {
    let idx: usize = name
        .strip_prefix('L')
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::InvalidArgument(format!("{name:?} is not a synthetic label")))?;
    if idx >= vocab_size {
        return Err(Error::InvalidArgument(format!(
            "planted rule label {name:?} has index {idx} >= vocab size {vocab_size}"
        )));
    }
    Ok(idx)
}

const BASE_RATE: f64 = 0.3;
const BAG_SIZE: usize = 8;
const TOKENS_PER_LABEL: usize = 2;
const LEAK_RATE: f64 = 0.5;
const FILLER_BAG: usize = 30;
const FILLER_TOKENS: usize = 5;

/// Generates a dataset over labels `L0..L{vocab_size-1}` whose co-occurrences
/// follow `planted_rules`.
///
/// Each label is drawn independently at a fixed base rate. For every planted
/// rule `a => b` with `a` active, a biased coin with probability `noise`
/// marks the pair as an exception; exceptions force `b` off, all other pairs
/// force `b` on, and additions are propagated to a fixpoint. The text is a
/// shuffled bag of label-specific tokens (with some cross-label leakage) and
/// shared filler tokens.
pub fn generate_synthetic(
    num_records: usize,
    vocab_size: usize,
    planted_rules: &RuleSet,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if vocab_size < 2 {
        return Err(Error::InvalidArgument(
            "vocab_size must be at least 2".into(),
        ));
    }
    if !(0.0..0.5).contains(&noise) {
        return Err(Error::InvalidArgument(format!(
            "noise {noise} outside [0, 0.5)"
        )));
    }
    if num_records == 0 {
        return Err(Error::EmptyDataset);
    }
    let rules: Vec<(usize, usize)> = planted_rules
        .iter()
        .map(|r| {
            Ok((
                synthetic_index(&r.premise, vocab_size)?,
                synthetic_index(&r.conclusion, vocab_size)?,
            ))
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..vocab_size).map(synthetic_label).collect();
    let vocab = LabelVocab::new(names.iter().cloned());
    let mut records = Vec::with_capacity(num_records);

    for i in 0..num_records {
        let mut active: Vec<bool> = (0..vocab_size)
            .map(|_| rng.random_bool(BASE_RATE))
            .collect();
        let exempt: Vec<bool> = rules.iter().map(|_| rng.random_bool(noise)).collect();
        for (&(a, b), &ex) in rules.iter().zip(&exempt) {
            if ex && active[a] {
                active[b] = false;
            }
        }
        loop {
            let mut changed = false;
            for (&(a, b), &ex) in rules.iter().zip(&exempt) {
                if !ex && active[a] && !active[b] {
                    active[b] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut tokens = Vec::new();
        for (j, _) in active.iter().enumerate().filter(|(_, on)| **on) {
            for _ in 0..TOKENS_PER_LABEL {
                let source = if rng.random_bool(LEAK_RATE) {
                    rng.random_range(0..vocab_size)
                } else {
                    j
                };
                tokens.push(format!("lab{source}tok{}", rng.random_range(0..BAG_SIZE)));
            }
        }
        for _ in 0..FILLER_TOKENS {
            tokens.push(format!("common{}", rng.random_range(0..FILLER_BAG)));
        }
        tokens.shuffle(&mut rng);

        let labels = active
            .iter()
            .zip(&names)
            .filter(|(on, _)| **on)
            .map(|(_, n)| n.clone())
            .collect();
        records.push(Record {
            id: format!("syn{i:06}"),
            text: tokens.join(" "),
            labels,
        });
    }
    Dataset::new(records, vocab, Split::Train)
}

//! TF-IDF text features.
//!
//! Tokens are maximal alphanumeric runs of length >= 2 (optionally
//! lowercased). The smoothed inverse document frequency is
//! `ln((1 + N) / (1 + df)) + 1` and every vector is L2-normalized.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const VECTORIZER_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorizerConfig {
    pub lowercase: bool,
    pub min_token_freq: usize,
    pub max_features: usize,
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        VectorizerConfig {
            lowercase: true,
            min_token_freq: 1,
            max_features: 20_000,
        }
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub dim: usize,
}

impl FeatureVector {
    pub fn zeros(dim: usize) -> Self {
        FeatureVector {
            indices: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vectorizer {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    idf: Vec<f64>,
    config: VectorizerConfig,
}

#[derive(Serialize, Deserialize)]
struct VectorizerFile {
    version: u32,
    config: VectorizerConfig,
    tokens: Vec<String>,
    idf: Vec<f64>,
}

pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(|t| {
            if lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

pub fn fit_vectorizer<S: AsRef<str>>(texts: &[S], config: VectorizerConfig) -> Result<Vectorizer> {
    if texts.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot fit a vectorizer on an empty corpus".into(),
        ));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for t in texts {
        let distinct: BTreeSet<String> =
            tokenize(t.as_ref(), config.lowercase).into_iter().collect();
        for tok in distinct {
            *df.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = df
        .into_iter()
        .filter(|(_, f)| *f >= config.min_token_freq)
        .collect();
    // BTreeMap order is lexicographic, so a stable sort keeps ties lexicographic
    kept.sort_by_key(|k| std::cmp::Reverse(k.1));
    kept.truncate(config.max_features);
    kept.sort_by(|a, b| a.0.cmp(&b.0));

    let n = texts.len() as f64;
    let idf = kept
        .iter()
        .map(|(_, f)| ((1.0 + n) / (1.0 + *f as f64)).ln() + 1.0)
        .collect();
    let tokens: Vec<String> = kept.into_iter().map(|(t, _)| t).collect();
    Ok(Vectorizer::from_parts(tokens, idf, config))
}

impl Vectorizer {
    fn from_parts(tokens: Vec<String>, idf: Vec<f64>, config: VectorizerConfig) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vectorizer {
            tokens,
            index,
            idf,
            config,
        }
    }

    pub fn dim(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn config(&self) -> VectorizerConfig {
        self.config
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.index.get(token).map(|&i| self.idf[i])
    }

    pub fn vectorize(&self, text: &str) -> FeatureVector {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in tokenize(text, self.config.lowercase) {
            if let Some(&i) = self.index.get(&tok) {
                *tf.entry(i).or_default() += 1.0;
            }
        }
        let mut indices = Vec::with_capacity(tf.len());
        let mut values = Vec::with_capacity(tf.len());
        for (i, count) in tf {
            indices.push(i);
            values.push(count * self.idf[i]);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        FeatureVector {
            indices,
            values,
            dim: self.dim(),
        }
    }

    pub fn to_json(&self) -> String {
        let file = VectorizerFile {
            version: VECTORIZER_VERSION,
            config: self.config,
            tokens: self.tokens.clone(),
            idf: self.idf.clone(),
        };
        serde_json::to_string_pretty(&file).expect("vectorizer serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: VectorizerFile = serde_json::from_str(s)?;
        if file.version != VECTORIZER_VERSION {
            return Err(Error::Version {
                found: file.version,
                expected: VECTORIZER_VERSION,
            });
        }
        if file.tokens.len() != file.idf.len() {
            return Err(Error::DimensionMismatch {
                expected: file.tokens.len(),
                actual: file.idf.len(),
            });
        }
        if file.idf.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "idf values must be finite and >= 0".into(),
            ));
        }
        Ok(Vectorizer::from_parts(file.tokens, file.idf, file.config))
    }

    /// SHA-256 of the persisted form; models record it to pin their feature space.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

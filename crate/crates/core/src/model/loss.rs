//! Weighted binary cross-entropy, the fuzzy implication loss and class weights.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, LabelVocab};
use crate::error::{Error, Result};
use crate::rulekit::{IndexedRule, RuleSet};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;
pub const DEFAULT_WEIGHT_CAP: f64 = 100.0;
pub const MIN_CLASS_WEIGHT: f64 = 1e-3;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w: Vec<f64>,
}

impl ClassWeights {
    pub fn ones(m: usize) -> Self {
        ClassWeights { w: vec![1.0; m] }
    }
}

/// `w_j = n_neg / (n_pos + 1e-5)`, clamped to `[1e-3, cap]`. With `cap = None`
/// only the lower clamp applies, which matters only for labels present in
/// every record.
pub fn compute_class_weights(dataset: &Dataset, cap: Option<f64>) -> ClassWeights {
    let m = dataset.vocab.len();
    let mut pos = vec![0usize; m];
    for r in &dataset.records {
        for l in &r.labels {
            if let Some(j) = dataset.vocab.index_of(l) {
                pos[j] += 1;
            }
        }
    }
    let n = dataset.len();
    ClassWeights {
        w: pos
            .into_iter()
            .map(|p| class_weight(p, n - p, cap))
            .collect(),
    }
}

pub fn class_weight(n_pos: usize, n_neg: usize, cap: Option<f64>) -> f64 {
    let raw = n_neg as f64 / (n_pos as f64 + 1e-5);
    raw.clamp(MIN_CLASS_WEIGHT, cap.unwrap_or(f64::INFINITY))
}

/// Per-sample weighted BCE and its gradient with respect to the logits,
/// `(1 - y) p - w y (1 - p)`.
pub fn bce_loss(probs: &[f64], targets: &[u8], weights: &ClassWeights) -> (f64, Vec<f64>) {
    debug_assert_eq!(probs.len(), targets.len());
    debug_assert_eq!(probs.len(), weights.w.len());
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(probs.len());
    for ((&p, &y), &w) in probs.iter().zip(targets).zip(&weights.w) {
        let pc = p.clamp(EPS, 1.0 - EPS);
        if y != 0 {
            loss -= w * pc.ln();
            grad.push(-w * (1.0 - p));
        } else {
            loss -= (1.0 - pc).ln();
            grad.push(p);
        }
    }
    (loss, grad)
}

/// Mean fuzzy violation `max(0, p_a - p_b)` per rule, weighted by the rule
/// weight, averaged over rules and scaled by `beta`. Returns the loss and its
/// subgradient with respect to the probabilities (0 at `p_a == p_b`).
pub fn fuzzy_loss_indexed(
    probs: ArrayView2<f64>,
    rules: &[IndexedRule],
    beta: f64,
) -> (f64, Array2<f64>) {
    let (b, _) = probs.dim();
    let mut grad = Array2::zeros(probs.dim());
    if rules.is_empty() || b == 0 {
        return (0.0, grad);
    }
    // beta is applied last so that the result is exactly beta times the beta = 1 value
    let per_rule = 1.0 / rules.len() as f64;
    let mut loss = 0.0;
    for r in rules {
        let step = r.weight * per_rule / b as f64;
        let mut sum = 0.0;
        for (i, row) in probs.rows().into_iter().enumerate() {
            let v = row[r.premise] - row[r.conclusion];
            if v > 0.0 {
                sum += v;
                grad[[i, r.premise]] += step;
                grad[[i, r.conclusion]] -= step;
            }
        }
        loss += r.weight * (sum / b as f64);
    }
    grad.mapv_inplace(|g| beta * g);
    (beta * (loss * per_rule), grad)
}

pub fn fuzzy_loss(
    probs: ArrayView2<f64>,
    rules: &RuleSet,
    vocab: &LabelVocab,
    beta: f64,
) -> Result<(f64, Array2<f64>)> {
    if probs.ncols() != vocab.len() {
        return Err(Error::DimensionMismatch {
            expected: vocab.len(),
            actual: probs.ncols(),
        });
    }
    let indexed = rules.index(vocab)?;
    Ok(fuzzy_loss_indexed(probs, &indexed, beta))
}

/// Chains a gradient with respect to probabilities through the sigmoid.
pub fn probs_grad_to_logits(probs: ArrayView2<f64>, grad: &Array2<f64>) -> Array2<f64> {
    let mut out = grad.clone();
    out.zip_mut_with(&probs, |g, &p| *g *= p * (1.0 - p));
    out
}

pub fn total_loss(bce: f64, fuzzy: f64) -> f64 {
    bce + fuzzy
}

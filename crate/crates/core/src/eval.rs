//! Per-label threshold tuning, thresholded prediction batches and the
//! multi-label metrics report (micro/macro F1, Hamming loss, rule consistency).

use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::asp::{audit_violations, ViolationReport};
use crate::corpus::LabelVocab;
use crate::error::{Error, Result};
use crate::rulekit::RuleSet;

pub const MIN_THRESHOLD: f64 = 0.05;
pub const MAX_THRESHOLD: f64 = 0.95;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub t: Vec<f64>,
}

impl Thresholds {
    pub fn uniform(m: usize, t: f64) -> Self {
        Thresholds { t: vec![t; m] }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// F1 convention for a label that never occurs and is never predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroSupport {
    #[default]
    One,
    Zero,
}

impl ZeroSupport {
    fn value(self) -> f64 {
        match self {
            ZeroSupport::One => 1.0,
            ZeroSupport::Zero => 0.0,
        }
    }
}

fn f1(tp: usize, fp: usize, fn_: usize, empty: ZeroSupport) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        empty.value()
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch {
    pub probs: Array2<f64>,
    pub decisions: Array2<u8>,
    pub vocab: LabelVocab,
    pub doc_ids: Vec<String>,
}

impl PredictionBatch {
    /// Batch with hard decisions only; probabilities mirror the decisions.
    pub fn from_decisions(
        decisions: Array2<u8>,
        vocab: LabelVocab,
        doc_ids: Vec<String>,
    ) -> Result<Self> {
        check_dims(decisions.nrows(), decisions.ncols(), &vocab, &doc_ids)?;
        Ok(PredictionBatch {
            probs: decisions.mapv(f64::from),
            decisions,
            vocab,
            doc_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.decisions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_json(&self) -> String {
        let file = PredictionFile {
            vocab: self.vocab.clone(),
            docs: self
                .doc_ids
                .iter()
                .zip(self.probs.rows())
                .zip(self.decisions.rows())
                .map(|((id, p), d)| PredictionDoc {
                    id: id.clone(),
                    probs: p.to_vec(),
                    decisions: d.to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("prediction batch serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: PredictionFile = serde_json::from_str(s)?;
        let n = file.docs.len();
        let m = file.vocab.len();
        let mut probs = Array2::zeros((n, m));
        let mut decisions = Array2::zeros((n, m));
        let mut doc_ids = Vec::with_capacity(n);
        for (i, d) in file.docs.into_iter().enumerate() {
            if d.probs.len() != m || d.decisions.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    actual: d.probs.len().max(d.decisions.len()),
                });
            }
            for j in 0..m {
                probs[[i, j]] = d.probs[j];
                decisions[[i, j]] = u8::from(d.decisions[j] != 0);
            }
            doc_ids.push(d.id);
        }
        Ok(PredictionBatch {
            probs,
            decisions,
            vocab: file.vocab,
            doc_ids,
        })
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

#[derive(Serialize, Deserialize)]
struct PredictionFile {
    vocab: LabelVocab,
    docs: Vec<PredictionDoc>,
}

#[derive(Serialize, Deserialize)]
struct PredictionDoc {
    id: String,
    probs: Vec<f64>,
    decisions: Vec<u8>,
}

fn check_dims(n: usize, m: usize, vocab: &LabelVocab, ids: &[String]) -> Result<()> {
    if m != vocab.len() {
        return Err(Error::DimensionMismatch {
            expected: vocab.len(),
            actual: m,
        });
    }
    if n != ids.len() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            actual: n,
        });
    }
    Ok(())
}

/// Thresholds chosen per label together with the F1 each achieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedThresholds {
    pub thresholds: Thresholds,
    pub per_label_f1: Vec<f64>,
    /// Labels without positive targets, left at the default threshold.
    pub untuned: Vec<usize>,
}

/// Sweeps each label's threshold over the midpoints between consecutive
/// distinct probabilities plus 0.5, keeping the per-label F1 maximizer.
///
/// Candidates are clamped into `[0.05, 0.95]` before scoring, so the score
/// attached to a threshold is always the score it actually produces. Ties go
/// to the candidate closest to 0.5, then to the smaller one.
pub fn tune_thresholds(probs: ArrayView2<f64>, targets: ArrayView2<u8>) -> Result<TunedThresholds> {
    if probs.dim() != targets.dim() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            actual: targets.len(),
        });
    }
    if probs.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let m = probs.ncols();
    let mut t = Vec::with_capacity(m);
    let mut per_label_f1 = Vec::with_capacity(m);
    let mut untuned = Vec::new();

    for j in 0..m {
        let mut col: Vec<(f64, bool)> = probs
            .column(j)
            .iter()
            .zip(targets.column(j))
            .map(|(&p, &y)| (p, y != 0))
            .collect();
        let positives = col.iter().filter(|c| c.1).count();
        if positives == 0 {
            untuned.push(j);
            t.push(DEFAULT_THRESHOLD);
            per_label_f1.push(0.0);
            continue;
        }
        col.sort_by(|a, b| a.0.total_cmp(&b.0));
        // suffix counts: positives / negatives with rank >= k
        let n = col.len();
        let mut pos_from = vec![0usize; n + 1];
        let mut neg_from = vec![0usize; n + 1];
        for k in (0..n).rev() {
            pos_from[k] = pos_from[k + 1] + usize::from(col[k].1);
            neg_from[k] = neg_from[k + 1] + usize::from(!col[k].1);
        }
        let score = |thr: f64| {
            let k = col.partition_point(|c| c.0 < thr);
            let tp = pos_from[k];
            let fp = neg_from[k];
            f1(tp, fp, positives - tp, ZeroSupport::Zero)
        };

        let mut distinct: Vec<f64> = col.iter().map(|c| c.0).collect();
        distinct.dedup();
        let mut candidates: Vec<f64> = distinct
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .chain(std::iter::once(DEFAULT_THRESHOLD))
            .map(|c| c.clamp(MIN_THRESHOLD, MAX_THRESHOLD))
            .collect();
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();

        let mut best = (DEFAULT_THRESHOLD, score(DEFAULT_THRESHOLD));
        for &c in &candidates {
            let s = score(c);
            let closer = (c - 0.5).abs() < (best.0 - 0.5).abs()
                || ((c - 0.5).abs() == (best.0 - 0.5).abs() && c < best.0);
            if s > best.1 || (s == best.1 && closer) {
                best = (c, s);
            }
        }
        t.push(best.0);
        per_label_f1.push(best.1);
    }
    Ok(TunedThresholds {
        thresholds: Thresholds { t },
        per_label_f1,
        untuned,
    })
}

/// Decision is inclusive: `p >= t`.
pub fn apply_thresholds(
    probs: Array2<f64>,
    thresholds: &Thresholds,
    vocab: &LabelVocab,
    doc_ids: Vec<String>,
) -> Result<PredictionBatch> {
    check_dims(probs.nrows(), probs.ncols(), vocab, &doc_ids)?;
    if thresholds.len() != probs.ncols() {
        return Err(Error::DimensionMismatch {
            expected: probs.ncols(),
            actual: thresholds.len(),
        });
    }
    let mut decisions = Array2::zeros(probs.dim());
    for ((i, j), &p) in probs.indexed_iter() {
        decisions[[i, j]] = u8::from(p >= thresholds.t[j]);
    }
    Ok(PredictionBatch {
        probs,
        decisions,
        vocab: vocab.clone(),
        doc_ids,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub hamming: f64,
    pub per_label: Vec<LabelMetrics>,
    pub consistency: ViolationReport,
}

/// The six headline columns reported per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub hamming: f64,
    pub violations: usize,
    pub viol_per_doc: f64,
    pub viol_per_1k: f64,
}

impl MetricsReport {
    pub fn table_row(&self) -> TableRow {
        TableRow {
            micro_f1: self.micro_f1,
            macro_f1: self.macro_f1,
            hamming: self.hamming,
            violations: self.consistency.total,
            viol_per_doc: self.consistency.per_doc,
            viol_per_1k: self.consistency.per_1k,
        }
    }
}

impl fmt::Display for TableRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "micro_f1={:.4} macro_f1={:.4} hamming={:.4} violations={} viol_per_doc={:.4} viol_per_1k={:.1}",
            self.micro_f1,
            self.macro_f1,
            self.hamming,
            self.violations,
            self.viol_per_doc,
            self.viol_per_1k
        )
    }
}

pub fn compute_metrics(
    batch: &PredictionBatch,
    targets: ArrayView2<u8>,
    rules: &RuleSet,
    zero_support: ZeroSupport,
) -> Result<MetricsReport> {
    if batch.decisions.dim() != targets.dim() {
        return Err(Error::DimensionMismatch {
            expected: batch.decisions.len(),
            actual: targets.len(),
        });
    }
    let (n, m) = targets.dim();
    let mut per_label = Vec::with_capacity(m);
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    let mut mismatched = 0usize;
    for j in 0..m {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (&d, &y) in batch.decisions.column(j).iter().zip(targets.column(j)) {
            match (d != 0, y != 0) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        mismatched += fp + fn_;
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        per_label.push(LabelMetrics {
            label: batch.vocab.name(j).to_string(),
            support: tp + fn_,
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: f1(tp, fp, fn_, zero_support),
        });
    }
    let macro_f1 = if m == 0 {
        zero_support.value()
    } else {
        per_label.iter().map(|l| l.f1).sum::<f64>() / m as f64
    };
    let cells = n * m;
    Ok(MetricsReport {
        micro_f1: f1(tp_all, fp_all, fn_all, zero_support),
        macro_f1,
        hamming: if cells == 0 {
            0.0
        } else {
            mismatched as f64 / cells as f64
        },
        per_label,
        consistency: audit_violations(batch, rules)?,
    })
}

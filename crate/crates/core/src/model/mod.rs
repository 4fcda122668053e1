//! Sparse-input linear multi-label classifier trained on weighted BCE plus
//! the fuzzy rule penalty.

mod loss;
mod optim;
mod train;

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::LabelVocab;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub use loss::{
    bce_loss, class_weight, compute_class_weights, fuzzy_loss, fuzzy_loss_indexed,
    probs_grad_to_logits, sigmoid, total_loss, ClassWeights, DEFAULT_WEIGHT_CAP, EPS,
    MIN_CLASS_WEIGHT,
};
pub use optim::Adam;
pub use train::{train, train_bce_only, EpochLog, F1Kind, TrainConfig, TrainLog};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    /// `m x d`, one row per label.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub vocab: LabelVocab,
    /// Fingerprint of the vectorizer that defines the feature space.
    pub vectorizer_ref: String,
}

impl Model {
    pub fn zeros(vocab: LabelVocab, dim: usize, vectorizer_ref: impl Into<String>) -> Self {
        let m = vocab.len();
        Model {
            weights: Array2::zeros((m, dim)),
            bias: Array1::zeros(m),
            vocab,
            vectorizer_ref: vectorizer_ref.into(),
        }
    }

    /// Weights drawn uniformly from `[-scale, scale]`, bias zero.
    pub fn seeded(
        vocab: LabelVocab,
        dim: usize,
        vectorizer_ref: impl Into<String>,
        scale: f64,
        seed: u64,
    ) -> Self {
        let mut model = Model::zeros(vocab, dim, vectorizer_ref);
        if scale > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            model
                .weights
                .mapv_inplace(|_| rng.random_range(-scale..=scale));
        }
        model
    }

    pub fn num_labels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn logits(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        if x.dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.dim,
            });
        }
        Ok(self
            .weights
            .rows()
            .into_iter()
            .zip(&self.bias)
            .map(|(row, &b)| b + x.iter().map(|(k, v)| row[k] * v).sum::<f64>())
            .collect())
    }

    /// Logits `z = W x + b` and probabilities `sigmoid(z)`.
    pub fn forward(&self, x: &FeatureVector) -> Result<(Vec<f64>, Vec<f64>)> {
        let z = self.logits(x)?;
        let p = z.iter().map(|&v| sigmoid(v)).collect();
        Ok((z, p))
    }

    pub fn predict_probs(&self, xs: &[FeatureVector]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((xs.len(), self.num_labels()));
        for (i, x) in xs.iter().enumerate() {
            let (_, p) = self.forward(x)?;
            out.row_mut(i).assign(&Array1::from(p));
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Everything needed to reload a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: Model,
    pub config: TrainConfig,
    pub class_weights: ClassWeights,
    pub log: TrainLog,
}

impl Checkpoint {
    pub fn new(
        model: Model,
        config: TrainConfig,
        class_weights: ClassWeights,
        log: TrainLog,
    ) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            model,
            config,
            class_weights,
            log,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: ck.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if ck.model.bias.len() != ck.model.num_labels()
            || ck.model.vocab.len() != ck.model.num_labels()
        {
            return Err(Error::DimensionMismatch {
                expected: ck.model.num_labels(),
                actual: ck.model.vocab.len(),
            });
        }
        if !ck.model.is_finite() {
            return Err(Error::InvalidArgument(
                "checkpoint has non-finite parameters".into(),
            ));
        }
        Ok(ck)
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

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> LabelVocab {
        LabelVocab::new(["A", "B", "C"])
    }

    fn x(dim: usize) -> FeatureVector {
        FeatureVector {
            indices: vec![0, 2],
            values: vec![0.6, 0.8],
            dim,
        }
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = Model::zeros(vocab(), 4, "v");
        let (z, p) = m.forward(&x(4)).unwrap();
        assert_eq!(z, vec![0.0; 3]);
        assert_eq!(p, vec![0.5; 3]);
    }

    #[test]
    fn bias_drives_probabilities() {
        let mut m = Model::zeros(vocab(), 4, "v");
        m.bias = Array1::from(vec![10.0, -10.0, 0.0]);
        let (_, p) = m.forward(&FeatureVector::zeros(4)).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-4);
        assert!(p[1] < 1e-4 && p[1] > 0.0);
    }

    #[test]
    fn forward_is_pure() {
        let m = Model::seeded(vocab(), 4, "v", 0.5, 9);
        let a = m.forward(&x(4)).unwrap();
        let b = m.forward(&x(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(m, Model::seeded(vocab(), 4, "v", 0.5, 9));
        let (z, _) = a;
        let manual = m.bias[1] + 0.6 * m.weights[[1, 0]] + 0.8 * m.weights[[1, 2]];
        assert_eq!(z[1], manual);
    }

    #[test]
    fn dimension_mismatch() {
        let m = Model::zeros(vocab(), 4, "v");
        assert!(matches!(
            m.forward(&x(5)),
            Err(Error::DimensionMismatch {
                expected: 4,
                actual: 5
            })
        ));
    }
}

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{
    bce_loss, compute_class_weights, fuzzy_loss_indexed, sigmoid, total_loss, ClassWeights,
};
use super::optim::Adam;
use super::{Model, DEFAULT_WEIGHT_CAP};
use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::eval::{apply_thresholds, compute_metrics, Thresholds, ZeroSupport};
use crate::features::{FeatureVector, Vectorizer};
use crate::rulekit::{IndexedRule, RuleSet};

const INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Kind {
    #[default]
    Micro,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the fuzzy rule term; 0 disables it.
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub l2: f64,
    /// Upper clamp on class weights; `None` keeps the raw ratio.
    pub class_weight_cap: Option<f64>,
    pub early_stop_metric: F1Kind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 0.0,
            learning_rate: 5e-3,
            epochs: 50,
            batch_size: 32,
            early_stop_patience: 5,
            seed: 0,
            l2: 1e-6,
            class_weight_cap: Some(DEFAULT_WEIGHT_CAP),
            early_stop_metric: F1Kind::Micro,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!(
                "beta must be a finite value >= 0, got {}",
                self.beta
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad(format!("l2 must be >= 0, got {}", self.l2));
        }
        if let Some(cap) = self.class_weight_cap {
            if cap.is_nan() || cap <= 0.0 {
                return bad(format!("class weight cap must be > 0, got {cap}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Full-pass training losses after the epoch.
    pub bce: f64,
    pub fuzzy: f64,
    pub total: f64,
    pub val_micro_f1: f64,
    pub val_macro_f1: f64,
    pub val_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// State before the first update.
    pub initial: EpochLog,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
}

impl TrainLog {
    pub fn best(&self) -> &EpochLog {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .unwrap_or(&self.initial)
    }
}

/// Trains on weighted BCE plus, when `beta > 0` and rules exist, the fuzzy
/// rule term. `rules` are also audited on the validation split every epoch.
pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    vectorizer: &Vectorizer,
    rules: &RuleSet,
    config: &TrainConfig,
) -> Result<(Model, TrainLog)> {
    let mut warnings = Vec::new();
    let fuzzy = if config.beta > 0.0 {
        if rules.is_empty() {
            let msg = format!(
                "beta = {} with an empty rule set; fuzzy term is 0",
                config.beta
            );
            log::warn!("{msg}");
            warnings.push(msg);
            None
        } else {
            Some(rules.index(&train_set.vocab)?)
        }
    } else {
        None
    };
    run(
        train_set,
        val_set,
        vectorizer,
        rules,
        fuzzy.as_deref(),
        config,
        warnings,
    )
}

/// Same loop with the fuzzy term compiled out; `config.beta` is ignored.
pub fn train_bce_only(
    train_set: &Dataset,
    val_set: &Dataset,
    vectorizer: &Vectorizer,
    rules: &RuleSet,
    config: &TrainConfig,
) -> Result<(Model, TrainLog)> {
    run(
        train_set,
        val_set,
        vectorizer,
        rules,
        None,
        config,
        Vec::new(),
    )
}

struct Split<'a> {
    xs: Vec<FeatureVector>,
    ys: Array2<u8>,
    data: &'a Dataset,
}

impl<'a> Split<'a> {
    fn new(data: &'a Dataset, vectorizer: &Vectorizer) -> Self {
        Split {
            xs: data
                .records
                .iter()
                .map(|r| vectorizer.vectorize(&r.text))
                .collect(),
            ys: data.targets(),
            data,
        }
    }
}

fn run(
    train_set: &Dataset,
    val_set: &Dataset,
    vectorizer: &Vectorizer,
    monitor: &RuleSet,
    fuzzy: Option<&[IndexedRule]>,
    config: &TrainConfig,
    warnings: Vec<String>,
) -> Result<(Model, TrainLog)> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train_set.vocab != val_set.vocab {
        return Err(Error::InvalidArgument(
            "train and validation splits must share one label vocabulary".into(),
        ));
    }
    monitor.index(&train_set.vocab)?;

    let vocab = &train_set.vocab;
    let (m, d) = (vocab.len(), vectorizer.dim());
    let tr = Split::new(train_set, vectorizer);
    let va = Split::new(val_set, vectorizer);
    let weights = compute_class_weights(train_set, config.class_weight_cap);

    let mut model = Model::seeded(
        vocab.clone(),
        d,
        vectorizer.fingerprint(),
        INIT_SCALE,
        config.seed,
    );
    let mut opt_w = Adam::new(m * d, config.learning_rate);
    let mut opt_b = Adam::new(m, config.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..tr.xs.len()).collect();

    let initial = measure(&model, &tr, &va, &weights, fuzzy, config, monitor, 0)?;
    let mut epochs: Vec<EpochLog> = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    let mut grad_w = Array2::<f64>::zeros((m, d));
    let mut grad_b = vec![0.0; m];

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let b = chunk.len();
            let mut probs = Array2::<f64>::zeros((b, m));
            for (r, &i) in chunk.iter().enumerate() {
                for (j, z) in model.logits(&tr.xs[i])?.into_iter().enumerate() {
                    probs[[r, j]] = sigmoid(z);
                }
            }

            let mut g_logits = Array2::<f64>::zeros((b, m));
            let mut bce = 0.0;
            for (r, &i) in chunk.iter().enumerate() {
                let targets = tr.ys.row(i);
                let (l, g) = bce_loss(
                    probs.row(r).as_slice().expect("row-major"),
                    targets.as_slice().expect("row-major"),
                    &weights,
                );
                bce += l;
                for (j, gj) in g.into_iter().enumerate() {
                    g_logits[[r, j]] = gj / b as f64;
                }
            }
            bce /= b as f64;

            let mut fz = 0.0;
            if let Some(rules) = fuzzy {
                let (l, gp) = fuzzy_loss_indexed(probs.view(), rules, config.beta);
                fz = l;
                for ((g, &gp), &p) in g_logits.iter_mut().zip(&gp).zip(&probs) {
                    *g += gp * p * (1.0 - p);
                }
            }
            if !total_loss(bce, fz).is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    bce,
                    fuzzy: fz,
                });
            }

            grad_w.fill(0.0);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            for (r, &i) in chunk.iter().enumerate() {
                for j in 0..m {
                    let g = g_logits[[r, j]];
                    if g == 0.0 {
                        continue;
                    }
                    grad_b[j] += g;
                    for (k, v) in tr.xs[i].iter() {
                        grad_w[[j, k]] += g * v;
                    }
                }
            }
            if config.l2 > 0.0 {
                grad_w.zip_mut_with(&model.weights, |g, &w| *g += config.l2 * w);
            }
            opt_w.step(
                model.weights.as_slice_mut().expect("row-major"),
                grad_w.as_slice().expect("row-major"),
            );
            opt_b.step(model.bias.as_slice_mut().expect("contiguous"), &grad_b);
        }

        if !model.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                bce: f64::NAN,
                fuzzy: f64::NAN,
            });
        }
        let log = measure(&model, &tr, &va, &weights, fuzzy, config, monitor, epoch)?;
        let score = match config.early_stop_metric {
            F1Kind::Micro => log.val_micro_f1,
            F1Kind::Macro => log.val_macro_f1,
        };
        log::debug!(
            "epoch {epoch}: total={:.6} bce={:.6} fuzzy={:.6} val_f1={score:.4} val_violations={}",
            log.total,
            log.bce,
            log.fuzzy,
            log.val_violations
        );
        epochs.push(log);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (_, best_epoch, best_model) = best.expect("at least one epoch runs");
    Ok((
        best_model,
        TrainLog {
            initial,
            epochs,
            best_epoch,
            stopped_early,
            warnings,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn measure(
    model: &Model,
    tr: &Split,
    va: &Split,
    weights: &ClassWeights,
    fuzzy: Option<&[IndexedRule]>,
    config: &TrainConfig,
    monitor: &RuleSet,
    epoch: usize,
) -> Result<EpochLog> {
    let probs = model.predict_probs(&tr.xs)?;
    let mut bce = 0.0;
    for (p, y) in probs.rows().into_iter().zip(tr.ys.rows()) {
        bce += bce_loss(
            p.as_slice().expect("row-major"),
            y.as_slice().expect("row-major"),
            weights,
        )
        .0;
    }
    bce /= tr.xs.len() as f64;
    let fuzzy = fuzzy.map_or(0.0, |r| fuzzy_loss_indexed(probs.view(), r, config.beta).0);

    let val_probs = model.predict_probs(&va.xs)?;
    let ids = va.data.records.iter().map(|r| r.id.clone()).collect();
    let batch = apply_thresholds(
        val_probs,
        &Thresholds::uniform(model.num_labels(), 0.5),
        &va.data.vocab,
        ids,
    )?;
    let report = compute_metrics(&batch, va.ys.view(), monitor, ZeroSupport::One)?;
    Ok(EpochLog {
        epoch,
        bce,
        fuzzy,
        total: total_loss(bce, fuzzy),
        val_micro_f1: report.micro_f1,
        val_macro_f1: report.macro_f1,
        val_violations: report.consistency.total,
    })
}

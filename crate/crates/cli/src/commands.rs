use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use nasp_core::asp::{self, AspProgram};
use nasp_core::augment::{augment_dataset, AugmentOptions};
use nasp_core::corpus::{self, load_dataset, Dataset, Split};
use nasp_core::eval::{self, PredictionBatch, Thresholds, ZeroSupport};
use nasp_core::features::{fit_vectorizer, Vectorizer, VectorizerConfig};
use nasp_core::model::{self, compute_class_weights, Checkpoint, F1Kind, TrainConfig};
use nasp_core::rulekit::{self, Origin, Rule, RuleSet};

use crate::run::{read, RunDir};
use crate::{
    AuditArgs, AugmentArgs, EmitAspArgs, EvaluateArgs, Metric, MineArgs, SplitArgs, SynthArgs,
    ThresholdMode, TrainArgs, ZeroSupportArg,
};

pub const RULES_FILE: &str = "rules.txt";
pub const VECTORIZER_FILE: &str = "vectorizer.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

fn load_rules(path: &std::path::Path) -> Result<RuleSet> {
    rulekit::parse_rules(&read(path)?).with_context(|| format!("in rule file {}", path.display()))
}

fn load(
    path: &std::path::Path,
    vocab: Option<&corpus::LabelVocab>,
    split: Split,
) -> Result<Dataset> {
    let (ds, stats) =
        load_dataset(path, vocab, split).with_context(|| format!("loading {}", path.display()))?;
    if stats.duplicate_labels > 0 {
        log::warn!(
            "{}: {} duplicate labels dropped",
            path.display(),
            stats.duplicate_labels
        );
    }
    Ok(ds)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut run = RunDir::create(&a.out_dir, "synth", a)?;
    let planted = a
        .rules
        .iter()
        .map(|s| {
            let (p, c) = s
                .split_once("=>")
                .ok_or_else(|| anyhow!("planted rule {s:?} is not of the form A=>B"))?;
            Ok(Rule::new(p.trim(), c.trim(), 1.0, Origin::Expert)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let planted = RuleSet::new(planted)?;
    let ds = corpus::generate_synthetic(a.num_records, a.vocab_size, &planted, a.noise, a.seed)?;
    ds.save(run.path("data.jsonl"))?;
    run.write("planted_rules.txt", &rulekit::serialize_rules(&planted))?;
    run.note(format!(
        "synth: {} records, {} labels, {} planted rules",
        ds.len(),
        ds.vocab.len(),
        planted.len()
    ));
    run.finish()
}

pub fn split(a: &SplitArgs) -> Result<()> {
    let mut run = RunDir::create(&a.out_dir, "split", a)?;
    let ds = load(&a.input, None, Split::Train)?;
    let (tr, va, te) = corpus::split_dataset(&ds, a.train_frac, a.val_frac, a.seed)?;
    tr.save(run.path("train.jsonl"))?;
    va.save(run.path("val.jsonl"))?;
    te.save(run.path("test.jsonl"))?;
    run.note(format!(
        "split: train={} val={} test={}",
        tr.len(),
        va.len(),
        te.len()
    ));
    run.finish()
}

pub fn mine_rules(a: &MineArgs) -> Result<()> {
    let mut run = RunDir::create(&a.out_dir, "mine-rules", a)?;
    let ds = load(&a.train, None, Split::Train)?;
    let mined = rulekit::mine_rules(&ds, a.min_support, a.min_confidence)?;
    let rules = match &a.expert_rules {
        Some(p) => rulekit::merge_rules(&mined, &load_rules(p)?),
        None => mined.clone(),
    };
    let report = rulekit::validate_ruleset(&rules, &ds.vocab);
    run.write(RULES_FILE, &rulekit::serialize_rules(&rules))?;
    run.write_json("validation.json", &report)?;
    run.note(format!(
        "mine-rules: {} mined, {} total, {} cycles, {} unknown labels",
        mined.len(),
        rules.len(),
        report.cycles.len(),
        report.unknown_labels.len()
    ));
    run.finish()
}

pub fn emit_asp(a: &EmitAspArgs) -> Result<()> {
    let mut run = RunDir::create(&a.out_dir, "emit-asp", a)?;
    let rules = load_rules(&a.rules)?;
    let program = asp::emit_weak_constraints(&rules)?;
    run.write("rules.lp", &program.text)?;
    run.note(format!(
        "emit-asp: {} weak constraints",
        program.rule_index.len()
    ));
    run.finish()
}

pub fn augment(a: &AugmentArgs) -> Result<()> {
    let mut run = RunDir::create(&a.out_dir, "augment", a)?;
    let ds = load(&a.train, None, Split::Train)?;
    let rules = load_rules(&a.rules)?;
    let (out, summary) = augment_dataset(
        &ds,
        &rules,
        AugmentOptions {
            max_growth_percent: a.max_growth,
            closure: a.closure,
        },
    )?;
    out.save(run.path("train_aug.jsonl"))?;
    run.write_json("augment_summary.json", &summary)?;
    run.note(format!(
        "augment: {} -> {} records (+{:.2}%)",
        summary.original_size,
        out.len(),
        summary.growth_percent
    ));
    run.finish()
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut run = RunDir::create(&a.out_dir, "train", a)?;
    let tr = load(&a.train, None, Split::Train)?;
    let va = load(&a.val, Some(&tr.vocab), Split::Validation)?;
    let rules = load_rules(&a.rules)?;

    let vectorizer = fit_vectorizer(
        &tr.texts(),
        VectorizerConfig {
            lowercase: !a.no_lowercase,
            min_token_freq: a.min_token_freq,
            max_features: a.max_features,
        },
    )?;
    let config = TrainConfig {
        beta: a.beta,
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        batch_size: a.batch_size,
        early_stop_patience: a.patience,
        seed: a.seed,
        l2: a.l2,
        class_weight_cap: (!a.no_class_weight_cap).then_some(a.class_weight_cap),
        early_stop_metric: match a.early_stop_metric {
            Metric::Micro => F1Kind::Micro,
            Metric::Macro => F1Kind::Macro,
        },
    };
    let (model, log) = model::train(&tr, &va, &vectorizer, &rules, &config)?;
    let weights = compute_class_weights(&tr, config.class_weight_cap);

    for w in &log.warnings {
        run.note(format!("warning: {w}"));
    }
    for e in &log.epochs {
        run.note(format!(
            "epoch {:>3} total={:.6} bce={:.6} fuzzy={:.6} val_micro_f1={:.4} val_violations={}",
            e.epoch, e.total, e.bce, e.fuzzy, e.val_micro_f1, e.val_violations
        ));
    }
    let best = log.best().clone();
    let initial_total = log.initial.total;
    vectorizer.save(run.path(VECTORIZER_FILE))?;
    run.write(RULES_FILE, &rulekit::serialize_rules(&rules))?;
    Checkpoint::new(model, config, weights, log).save(run.path(CHECKPOINT_FILE))?;
    run.note(format!(
        "train: best epoch {} total_loss={:.6} (initial {:.6}) val_micro_f1={:.4}",
        best.epoch, best.total, initial_total, best.val_micro_f1
    ));
    run.finish()
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    threshold_mode: ThresholdMode,
    thresholds: &'a Thresholds,
    untuned_labels: Vec<String>,
    validation_per_label_f1: Option<&'a [f64]>,
    test: &'a eval::MetricsReport,
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut run = RunDir::create(&a.out_dir, "evaluate", a)?;
    let ck = Checkpoint::load(a.model_dir.join(CHECKPOINT_FILE))?;
    let vectorizer = Vectorizer::load(a.model_dir.join(VECTORIZER_FILE))?;
    if vectorizer.fingerprint() != ck.model.vectorizer_ref {
        bail!(
            "vectorizer in {} does not match the checkpoint",
            a.model_dir.display()
        );
    }
    let rules = load_rules(
        &a.rules
            .clone()
            .unwrap_or_else(|| a.model_dir.join(RULES_FILE)),
    )?;
    let vocab = ck.model.vocab.clone();
    let va = load(&a.val, Some(&vocab), Split::Validation)?;
    let te = load(&a.test, Some(&vocab), Split::Test)?;

    let probs_of = |ds: &Dataset| {
        let xs: Vec<_> = ds
            .records
            .iter()
            .map(|r| vectorizer.vectorize(&r.text))
            .collect();
        ck.model.predict_probs(&xs)
    };
    let (thresholds, tuned) = match a.thresholds {
        ThresholdMode::Tuned => {
            let tuned = eval::tune_thresholds(probs_of(&va)?.view(), va.targets().view())?;
            (tuned.thresholds.clone(), Some(tuned))
        }
        ThresholdMode::Uniform => {
            if !(eval::MIN_THRESHOLD..=eval::MAX_THRESHOLD).contains(&a.threshold) {
                bail!(
                    "threshold {} outside [{}, {}]",
                    a.threshold,
                    eval::MIN_THRESHOLD,
                    eval::MAX_THRESHOLD
                );
            }
            (Thresholds::uniform(vocab.len(), a.threshold), None)
        }
    };

    let ids = te.records.iter().map(|r| r.id.clone()).collect();
    let batch = eval::apply_thresholds(probs_of(&te)?, &thresholds, &vocab, ids)?;
    let zero = match a.zero_support_f1 {
        ZeroSupportArg::One => ZeroSupport::One,
        ZeroSupportArg::Zero => ZeroSupport::Zero,
    };
    let report = eval::compute_metrics(&batch, te.targets().view(), &rules, zero)?;

    batch.save(run.path("predictions.json"))?;
    run.write_json("thresholds.json", &thresholds)?;
    run.write_json("metrics.json", &report.table_row())?;
    run.write_json(
        "report.json",
        &EvaluationReport {
            threshold_mode: a.thresholds,
            thresholds: &thresholds,
            untuned_labels: tuned
                .as_ref()
                .map(|t| {
                    t.untuned
                        .iter()
                        .map(|&j| vocab.name(j).to_string())
                        .collect()
                })
                .unwrap_or_default(),
            validation_per_label_f1: tuned.as_ref().map(|t| t.per_label_f1.as_slice()),
            test: &report,
        },
    )?;
    run.note(report.table_row().to_string());
    run.note(format!("consistency: {}", report.consistency));
    run.finish()
}

#[derive(Serialize)]
struct ClingoCheck {
    documents: usize,
    mismatched_documents: Vec<String>,
}

pub fn audit(a: &AuditArgs) -> Result<()> {
    let mut run = RunDir::create(&a.out_dir, "audit", a)?;
    let batch = PredictionBatch::load(&a.predictions)?;
    let rules = load_rules(&a.rules)?;
    let report = asp::audit_violations(&batch, &rules)?;
    run.write_json("violations.json", &report)?;
    run.note(format!("audit: {report}"));

    if let Some(clingo) = &a.clingo_path {
        let program: AspProgram = asp::emit_weak_constraints(&rules)?;
        let expected = asp::violated_pairs(&batch, &rules)?;
        let mut mismatched = Vec::new();
        for (i, want) in expected.iter().enumerate() {
            let facts = asp::emit_prediction_facts(&batch, i)?;
            let got = asp::clingo_violations(clingo, &program, &facts)?;
            if &got != want {
                mismatched.push(batch.doc_ids[i].clone());
            }
        }
        run.write_json(
            "clingo_check.json",
            &ClingoCheck {
                documents: batch.len(),
                mismatched_documents: mismatched.clone(),
            },
        )?;
        run.note(format!(
            "clingo cross-check: {} documents, {} mismatches",
            batch.len(),
            mismatched.len()
        ));
        if !mismatched.is_empty() {
            run.finish()?;
            bail!(
                "solver disagrees with the auditor on {} documents",
                mismatched.len()
            );
        }
    }
    run.finish()
}

use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;

use nasp_core::asp::audit_violations;
use nasp_core::augment::{augment_dataset, AugmentOptions};
use nasp_core::corpus::{
    encode_labels, generate_synthetic, parse_dataset, synthetic_label, Dataset, LabelVocab, Record,
    Split,
};
use nasp_core::eval::{
    apply_thresholds, compute_metrics, tune_thresholds, PredictionBatch, ZeroSupport,
};
use nasp_core::features::{fit_vectorizer, VectorizerConfig};
use nasp_core::model::fuzzy_loss_indexed;
use nasp_core::rulekit::{
    mine_rules, parse_rules, serialize_rules, IndexedRule, Origin, Rule, RuleSet,
};

fn vocab(m: usize) -> LabelVocab {
    LabelVocab::new((0..m).map(synthetic_label))
}

fn dataset_from(rows: &[Vec<bool>], m: usize) -> Dataset {
    let vocab = vocab(m);
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, row)| Record {
            id: format!("d{i:04}"),
            text: format!("doc {i}"),
            labels: row
                .iter()
                .enumerate()
                .filter(|(_, &on)| on)
                .map(|(j, _)| synthetic_label(j))
                .collect(),
        })
        .collect();
    Dataset::new(records, vocab, Split::Train).unwrap()
}

fn label_rows(max_m: usize, max_n: usize) -> impl Strategy<Value = (usize, Vec<Vec<bool>>)> {
    (2..=max_m).prop_flat_map(move |m| {
        (
            Just(m),
            prop::collection::vec(prop::collection::vec(any::<bool>(), m), 1..max_n),
        )
    })
}

fn batch_from(rows: &[Vec<bool>], m: usize) -> PredictionBatch {
    let n = rows.len();
    let decisions = Array2::from_shape_fn((n, m), |(i, j)| u8::from(rows[i][j]));
    let ids = (0..n).map(|i| format!("d{i:04}")).collect();
    PredictionBatch::from_decisions(decisions, vocab(m), ids).unwrap()
}

fn rule_set(m: usize, pairs: &[(usize, usize, f64)]) -> RuleSet {
    let mut seen = BTreeSet::new();
    let rules = pairs
        .iter()
        .map(|&(a, b, w)| (a % m, b % m, w))
        .filter(|&(a, b, _)| a != b && seen.insert((a, b)))
        .map(|(a, b, w)| {
            Rule::new(synthetic_label(a), synthetic_label(b), w, Origin::Mined).unwrap()
        })
        .collect();
    RuleSet::new(rules).unwrap()
}

fn rule_pairs() -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((0usize..16, 0usize..16, 0.01f64..=1.0), 0..8)
}

/// Per-label F1 computed directly from counts.
fn f1_oracle(pred: &[bool], gold: &[bool]) -> f64 {
    let tp = pred.iter().zip(gold).filter(|(p, g)| **p && **g).count() as f64;
    let fp = pred.iter().zip(gold).filter(|(p, g)| **p && !**g).count() as f64;
    let fn_ = pred.iter().zip(gold).filter(|(p, g)| !**p && **g).count() as f64;
    if tp + fp + fn_ == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn encode_then_decode_is_identity((m, rows) in label_rows(12, 10)) {
        let v = vocab(m);
        for row in &rows {
            let labels: BTreeSet<String> = row
                .iter()
                .enumerate()
                .filter(|(_, &on)| on)
                .map(|(j, _)| synthetic_label(j))
                .collect();
            let rec = Record { id: "x".into(), text: String::new(), labels: labels.clone() };
            let hot = encode_labels(&rec, &v).unwrap();
            prop_assert_eq!(hot.len(), m);
            prop_assert_eq!(v.decode(&hot), labels);
        }
    }

    #[test]
    fn loading_is_deterministic((m, rows) in label_rows(6, 20)) {
        let text = dataset_from(&rows, m).to_jsonl();
        let (a, _) = parse_dataset(&text, None, Split::Train).unwrap();
        let (b, _) = parse_dataset(&text, None, Split::Train).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.to_jsonl(), text);
    }

    #[test]
    fn rule_file_round_trip(m in 2usize..10, pairs in rule_pairs()) {
        let rules = rule_set(m, &pairs);
        let parsed = parse_rules(&serialize_rules(&rules)).unwrap();
        prop_assert_eq!(parsed.len(), rules.len());
        for (a, b) in rules.iter().zip(parsed.iter()) {
            prop_assert_eq!(a.key(), b.key());
            prop_assert!((a.weight - b.weight).abs() <= 5e-5 + 1e-12);
        }
        prop_assert_eq!(serialize_rules(&parsed), serialize_rules(&rules));
    }

    #[test]
    fn mining_is_order_invariant_and_matches_recount(
        (m, rows) in label_rows(6, 60),
        rot in 0usize..60,
        min_conf in 0.0f64..1.0,
    ) {
        let ds = dataset_from(&rows, m);
        let mined = mine_rules(&ds, 0.0, min_conf).unwrap();

        let mut shuffled = rows.clone();
        shuffled.reverse();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        let other = mine_rules(&dataset_from(&shuffled, m), 0.0, min_conf).unwrap();
        prop_assert_eq!(serialize_rules(&mined), serialize_rules(&other));
        for (x, y) in mined.iter().zip(other.iter()) {
            prop_assert_eq!(x.weight.to_bits(), y.weight.to_bits());
        }

        for r in &mined {
            let a = r.premise[1..].parse::<usize>().unwrap();
            let b = r.conclusion[1..].parse::<usize>().unwrap();
            let prem = rows.iter().filter(|row| row[a]).count();
            let co = rows.iter().filter(|row| row[a] && row[b]).count();
            prop_assert_eq!(r.weight, co as f64 / prem as f64);
            prop_assert!(r.weight >= min_conf);
        }
    }

    #[test]
    fn audit_is_permutation_invariant_and_additive(
        (m, rows) in label_rows(6, 40),
        pairs in rule_pairs(),
        cut in 0usize..40,
    ) {
        let rules = rule_set(m, &pairs);
        let full = audit_violations(&batch_from(&rows, m), &rules).unwrap();

        let mut reversed = rows.clone();
        reversed.reverse();
        prop_assert_eq!(&audit_violations(&batch_from(&reversed, m), &rules).unwrap(), &full);

        let cut = 1 + cut % rows.len();
        if cut < rows.len() {
            let head = audit_violations(&batch_from(&rows[..cut], m), &rules).unwrap();
            let tail = audit_violations(&batch_from(&rows[cut..], m), &rules).unwrap();
            let merged = head.merge(&tail).unwrap();
            prop_assert_eq!(merged.total, head.total + tail.total);
            prop_assert_eq!(merged.total, full.total);
            prop_assert_eq!(&merged.per_rule, &full.per_rule);
        }

        let oracle: usize = rows
            .iter()
            .map(|row| {
                rules
                    .iter()
                    .filter(|r| {
                        let a = r.premise[1..].parse::<usize>().unwrap();
                        let b = r.conclusion[1..].parse::<usize>().unwrap();
                        row[a] && !row[b]
                    })
                    .count()
            })
            .sum();
        prop_assert_eq!(full.total, oracle);
    }

    #[test]
    fn fuzzy_loss_is_monotone_and_linear_in_beta(
        probs in prop::collection::vec(0.0f64..1.0, 4 * 5),
        pairs in prop::collection::vec((0usize..4, 0usize..4, 0.01f64..=1.0), 1..6),
        cell in 0usize..20,
        delta in 0.0f64..0.5,
        beta in 0.0f64..2.0,
    ) {
        let p = Array2::from_shape_vec((5, 4), probs).unwrap();
        let rules: Vec<IndexedRule> = pairs
            .iter()
            .filter(|(a, b, _)| a != b)
            .map(|&(premise, conclusion, weight)| IndexedRule { premise, conclusion, weight })
            .collect();
        prop_assume!(!rules.is_empty());

        let (one, g1) = fuzzy_loss_indexed(p.view(), &rules, 1.0);
        let (scaled, gb) = fuzzy_loss_indexed(p.view(), &rules, beta);
        prop_assert_eq!(scaled.to_bits(), (beta * one).to_bits());
        prop_assert_eq!(gb, g1.mapv(|g| beta * g));

        let (i, j) = (cell / 4, cell % 4);
        let mut up = p.clone();
        up[[i, j]] += delta;
        let (base, _) = fuzzy_loss_indexed(p.view(), &rules, 1.0);
        let (after, _) = fuzzy_loss_indexed(up.view(), &rules, 1.0);
        let is_premise = rules.iter().any(|r| r.premise == j);
        let is_conclusion = rules.iter().any(|r| r.conclusion == j);
        if is_premise && !is_conclusion {
            prop_assert!(after >= base - 1e-15);
        }
        if is_conclusion && !is_premise {
            prop_assert!(after <= base + 1e-15);
        }
        if !is_premise && !is_conclusion {
            prop_assert_eq!(after, base);
        }
    }

    #[test]
    fn vectorized_norm_is_zero_or_one(
        corpus in prop::collection::vec("[a-z ]{0,40}", 1..12),
        probe in "[a-zA-Z0-9 .,]{0,60}",
    ) {
        let v = fit_vectorizer(&corpus, VectorizerConfig::default());
        prop_assume!(v.is_ok());
        let v = v.unwrap();
        for text in corpus.iter().chain(std::iter::once(&probe)) {
            let x = v.vectorize(text);
            let n = x.norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12, "norm {}", n);
            prop_assert_eq!(&v.vectorize(text), &x);
        }
    }

    #[test]
    fn hamming_against_own_decisions_is_zero((m, rows) in label_rows(6, 30), pairs in rule_pairs()) {
        let batch = batch_from(&rows, m);
        let rules = rule_set(m, &pairs);
        let report = compute_metrics(&batch, batch.decisions.view(), &rules, ZeroSupport::One).unwrap();
        prop_assert_eq!(report.hamming, 0.0);
        prop_assert_eq!(report.micro_f1, 1.0);
    }

    #[test]
    fn tuned_thresholds_never_lose_to_half(
        (m, rows) in label_rows(5, 40),
        probs in prop::collection::vec(0.0f64..1.0, 5 * 40),
    ) {
        let n = rows.len();
        let p = Array2::from_shape_fn((n, m), |(i, j)| probs[i * 5 + j]);
        let y = Array2::from_shape_fn((n, m), |(i, j)| u8::from(rows[i][j]));
        let tuned = tune_thresholds(p.view(), y.view()).unwrap();
        for j in 0..m {
            let t = tuned.thresholds.t[j];
            prop_assert!((0.05..=0.95).contains(&t));
            let gold: Vec<bool> = (0..n).map(|i| rows[i][j]).collect();
            let at = |thr: f64| -> Vec<bool> { (0..n).map(|i| p[[i, j]] >= thr).collect() };
            let tuned_f1 = f1_oracle(&at(t), &gold);
            prop_assert!(tuned_f1 >= f1_oracle(&at(0.5), &gold));
            if !tuned.untuned.contains(&j) {
                prop_assert!((tuned_f1 - tuned.per_label_f1[j]).abs() < 1e-12);
            }
        }
        let ids = (0..n).map(|i| i.to_string()).collect();
        let batch = apply_thresholds(p.clone(), &tuned.thresholds, &vocab(m), ids).unwrap();
        for ((i, j), &d) in batch.decisions.indexed_iter() {
            prop_assert_eq!(d == 1, p[[i, j]] >= tuned.thresholds.t[j]);
        }
    }

    #[test]
    fn augmentation_repairs_every_added_record(
        (m, rows) in label_rows(6, 30),
        pairs in rule_pairs(),
        closure in any::<bool>(),
    ) {
        let ds = dataset_from(&rows, m);
        let rules = rule_set(m, &pairs);
        let (out, summary) = augment_dataset(&ds, &rules, AugmentOptions { max_growth_percent: None, closure }).unwrap();

        let premises: BTreeSet<&str> = rules.iter().map(|r| r.premise.as_str()).collect();
        let chained = rules.iter().any(|r| premises.contains(r.conclusion.as_str()));
        let fires = |labels: &BTreeSet<String>| {
            rules.iter().any(|r| labels.contains(&r.premise) && !labels.contains(&r.conclusion))
        };
        let expected_added = ds.records.iter().filter(|r| fires(&r.labels)).count();

        prop_assert!(out.len() >= ds.len());
        prop_assert_eq!(out.len() - ds.len(), expected_added);
        prop_assert_eq!(summary.added, expected_added);
        prop_assert_eq!(&out.records[..ds.len()], &ds.records[..]);
        for added in &out.records[ds.len()..] {
            let src = ds.records.iter().find(|r| added.id.starts_with(&format!("{}#aug", r.id))).unwrap();
            prop_assert_eq!(&added.text, &src.text);
            prop_assert!(added.labels.is_superset(&src.labels));
            if closure || !chained {
                prop_assert!(!fires(&added.labels));
            }
        }
    }
}

#[test]
fn noiseless_synthetic_data_never_violates_planted_rules() {
    let planted = RuleSet::new(vec![
        Rule::new("L0", "L1", 1.0, Origin::Expert).unwrap(),
        Rule::new("L1", "L2", 1.0, Origin::Expert).unwrap(),
        Rule::new("L3", "L0", 1.0, Origin::Expert).unwrap(),
    ])
    .unwrap();
    for seed in 0..5 {
        let ds = generate_synthetic(400, 5, &planted, 0.0, seed).unwrap();
        let ids = ds.records.iter().map(|r| r.id.clone()).collect();
        let batch = PredictionBatch::from_decisions(ds.targets(), ds.vocab.clone(), ids).unwrap();
        let report = audit_violations(&batch, &planted).unwrap();
        assert_eq!(report.total, 0, "seed {seed}");
        assert!(report.active_premises > 0);
    }
}

#[test]
fn synthetic_generation_is_seed_deterministic() {
    let planted = RuleSet::new(vec![Rule::new("L0", "L1", 1.0, Origin::Expert).unwrap()]).unwrap();
    let a = generate_synthetic(300, 4, &planted, 0.1, 11).unwrap();
    let b = generate_synthetic(300, 4, &planted, 0.1, 11).unwrap();
    let c = generate_synthetic(300, 4, &planted, 0.1, 12).unwrap();
    assert_eq!(a.to_jsonl(), b.to_jsonl());
    assert_ne!(a.to_jsonl(), c.to_jsonl());
}

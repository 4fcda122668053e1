use nasp_core::corpus::{generate_synthetic, split_dataset, Dataset};
use nasp_core::features::{fit_vectorizer, Vectorizer, VectorizerConfig};
use nasp_core::model::{train, train_bce_only, Checkpoint, ClassWeights, Model, TrainConfig};
use nasp_core::rulekit::{mine_rules, Origin, Rule, RuleSet};

fn fixture(seed: u64) -> (Dataset, Dataset, Vectorizer, RuleSet) {
    let planted = RuleSet::new(vec![Rule::new("L0", "L1", 1.0, Origin::Expert).unwrap()]).unwrap();
    let ds = generate_synthetic(300, 4, &planted, 0.1, seed).unwrap();
    let (tr, va, _) = split_dataset(&ds, 0.6, 0.2, seed).unwrap();
    let vec = fit_vectorizer(&tr.texts(), VectorizerConfig::default()).unwrap();
    let rules = mine_rules(&tr, 0.01, 0.7).unwrap();
    assert!(!rules.is_empty());
    (tr, va, vec, rules)
}

fn config(beta: f64) -> TrainConfig {
    TrainConfig {
        beta,
        epochs: 8,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn bits(model: &Model) -> (Vec<u64>, Vec<u64>) {
    (
        model.weights.iter().map(|w| w.to_bits()).collect(),
        model.bias.iter().map(|w| w.to_bits()).collect(),
    )
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let (tr, va, vec, rules) = fixture(5);
    let (a, log_a) = train(&tr, &va, &vec, &rules, &config(0.5)).unwrap();
    let (b, log_b) = train(&tr, &va, &vec, &rules, &config(0.5)).unwrap();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(log_a, log_b);

    let other = TrainConfig {
        seed: 4,
        ..config(0.5)
    };
    let (c, _) = train(&tr, &va, &vec, &rules, &other).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn zero_beta_is_bit_identical_to_bce_only_training() {
    let (tr, va, vec, rules) = fixture(6);
    let (a, log_a) = train(&tr, &va, &vec, &rules, &config(0.0)).unwrap();
    let (b, log_b) = train_bce_only(&tr, &va, &vec, &rules, &config(0.0)).unwrap();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(log_a.epochs, log_b.epochs);
    assert_eq!(log_a.best_epoch, log_b.best_epoch);

    let (c, _) = train(&tr, &va, &vec, &rules, &config(0.9)).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn best_checkpoint_loss_does_not_exceed_initial_loss() {
    for (seed, beta) in [(1, 0.0), (2, 0.1), (3, 0.9)] {
        let (tr, va, vec, rules) = fixture(seed);
        let (_, log) = train(&tr, &va, &vec, &rules, &config(beta)).unwrap();
        assert!(
            log.best().total <= log.initial.total,
            "seed {seed}: best {} initial {}",
            log.best().total,
            log.initial.total
        );
        for e in &log.epochs {
            assert!((e.total - (e.bce + e.fuzzy)).abs() < 1e-12);
            if beta == 0.0 {
                assert_eq!(e.fuzzy, 0.0);
            }
        }
    }
}

#[test]
fn checkpoint_round_trips_through_json() {
    let (tr, va, vec, rules) = fixture(8);
    let cfg = config(0.5);
    let (model, log) = train(&tr, &va, &vec, &rules, &cfg).unwrap();
    let ck = Checkpoint::new(model, cfg, ClassWeights::ones(tr.vocab.len()), log);
    let text = ck.to_json();
    let back = Checkpoint::from_json(&text).unwrap();
    assert_eq!(bits(&back.model), bits(&ck.model));
    assert_eq!(back.to_json(), text);

    let xs: Vec<_> = va.records.iter().map(|r| vec.vectorize(&r.text)).collect();
    let p1 = ck.model.predict_probs(&xs).unwrap();
    let p2 = back.model.predict_probs(&xs).unwrap();
    assert!(p1.iter().zip(&p2).all(|(a, b)| a.to_bits() == b.to_bits()));
}

use std::path::PathBuf;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nasp_core::asp::{
    clingo_violations, emit_prediction_facts, emit_weak_constraints, violated_pairs,
};
use nasp_core::corpus::LabelVocab;
use nasp_core::eval::PredictionBatch;
use nasp_core::rulekit::{Origin, Rule, RuleSet};

/// `NASP_CLINGO`, else `clingo` on `PATH`.
fn find_clingo() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os("NASP_CLINGO") {
        return Some(PathBuf::from(p));
    }
    std::env::split_paths(&std::env::var_os("PATH")?)
        .map(|d| d.join("clingo"))
        .find(|p| p.is_file())
}

#[test]
fn auditor_agrees_with_clingo_on_every_document() {
    let Some(clingo) = find_clingo() else {
        eprintln!("clingo not found; skipping solver cross-check");
        return;
    };
    let labels = [
        "Altitude Deviation",
        "ATC Issue",
        "Fuel-Issue",
        "Ground Event",
        "Türbulenz",
    ];
    let vocab = LabelVocab::new(labels);
    let rules = RuleSet::new(vec![
        Rule::new("Altitude Deviation", "ATC Issue", 0.9, Origin::Mined).unwrap(),
        Rule::new("ATC Issue", "Ground Event", 0.72, Origin::Mined).unwrap(),
        Rule::new("Fuel-Issue", "Türbulenz", 0.3, Origin::Expert).unwrap(),
        Rule::new("Ground Event", "Altitude Deviation", 0.004, Origin::Mined).unwrap(),
    ])
    .unwrap();
    let program = emit_weak_constraints(&rules).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let n = 20;
    let mut decisions =
        Array2::from_shape_fn((n, labels.len()), |_| u8::from(rng.random_bool(0.5)));
    decisions.row_mut(0).fill(0);
    decisions.row_mut(1).fill(1);
    let ids = (0..n).map(|i| format!("doc{i:02}")).collect();
    let batch = PredictionBatch::from_decisions(decisions, vocab, ids).unwrap();

    let expected = violated_pairs(&batch, &rules).unwrap();
    assert!(expected.iter().any(|s| !s.is_empty()));
    for (i, want) in expected.iter().enumerate() {
        let facts = emit_prediction_facts(&batch, i).unwrap();
        let got = clingo_violations(&clingo, &program, &facts).unwrap();
        assert_eq!(&got, want, "document {i}");
    }
}

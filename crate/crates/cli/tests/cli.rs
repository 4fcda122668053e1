use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nasp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nasp"))
        .args(args)
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn malformed_rule_file_fails_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let rules = tmp.path().join("bad.txt");
    fs::write(
        &rules,
        "soft_rule(\"A\",\"B\",0.5).\nsoft_rule(\"A\",\"C\",1.5).\n",
    )
    .unwrap();
    let out = nasp(&[
        "emit-asp",
        "--rules",
        p(&rules),
        "--out-dir",
        p(&tmp.path().join("o")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn evaluate_reruns_identically_from_a_model_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let d = |n: &str| tmp.path().join(n);
    let run = |args: &[&str]| {
        let out = nasp(args);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    };
    run(&[
        "synth",
        "--num-records",
        "200",
        "--rule",
        "L0=>L1",
        "--out-dir",
        p(&d("syn")),
    ]);
    run(&[
        "split",
        "--input",
        p(&d("syn").join("data.jsonl")),
        "--out-dir",
        p(&d("sp")),
    ]);
    let (tr, va, te) = (
        d("sp").join("train.jsonl"),
        d("sp").join("val.jsonl"),
        d("sp").join("test.jsonl"),
    );
    run(&["mine-rules", "--train", p(&tr), "--out-dir", p(&d("mr"))]);
    let rules = d("mr").join("rules.txt");
    run(&[
        "train",
        "--train",
        p(&tr),
        "--val",
        p(&va),
        "--rules",
        p(&rules),
        "--beta",
        "0.5",
        "--epochs",
        "5",
        "--out-dir",
        p(&d("model")),
    ]);
    let eval = |out: &str| {
        run(&[
            "evaluate",
            "--model-dir",
            p(&d("model")),
            "--val",
            p(&va),
            "--test",
            p(&te),
            "--thresholds",
            "uniform",
            "--out-dir",
            p(&d(out)),
        ])
    };
    let first = eval("e1");
    let second = eval("e2");
    assert_eq!(first, second);
    assert!(first.starts_with("micro_f1="), "{first}");
    for f in [
        "predictions.json",
        "metrics.json",
        "thresholds.json",
        "report.json",
    ] {
        assert_eq!(
            fs::read(d("e1").join(f)).unwrap(),
            fs::read(d("e2").join(f)).unwrap(),
            "{f}"
        );
    }

    run(&[
        "train",
        "--train",
        p(&tr),
        "--val",
        p(&va),
        "--rules",
        p(&rules),
        "--epochs",
        "1",
        "--min-token-freq",
        "3",
        "--out-dir",
        p(&d("other")),
    ]);
    fs::copy(
        d("other").join("vectorizer.json"),
        d("model").join("vectorizer.json"),
    )
    .unwrap();
    let out = nasp(&[
        "evaluate",
        "--model-dir",
        p(&d("model")),
        "--val",
        p(&va),
        "--test",
        p(&te),
        "--out-dir",
        p(&d("e3")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("does not match"), "{err}");
}

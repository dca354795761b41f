use std::path::Path;
use std::process::{Command, Output};

fn asa(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_asa"));
    c.current_dir(dir).args(args);
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CONFIG: &str = r#"
manifest = "data/manifest.jsonl"
output_dir = "run"

[generate]
audio = false

[model]
hidden_dim = 8
n_heads = 2
n_encoder_layers = 1
ffn_dim = 16

[train]
epochs = 2
batch_size = 8
"#;

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("asa.toml"), CONFIG).unwrap();
    let c = ["--config", "asa.toml"];
    for cmd in ["generate", "extract", "train"] {
        let o = asa(d, &[&[cmd][..], &c[..]].concat(), &[]);
        assert_eq!(code(&o), 0, "{cmd}: {}", stderr(&o));
    }
    assert!(d.join("data/manifest.jsonl").is_file());
    assert!(d.join("run/checkpoint.asac").is_file());
    let o = asa(
        d,
        &["eval", "--config", "asa.toml", "--split", "unknown_test"],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(
        table.contains("accuracy") && table.contains("binary accuracy"),
        "{table}"
    );
    assert!(d.join("run/reports/unknown_test.json").is_file());
    let o = asa(d, &["ablate", "--config", "asa.toml", "--grid", "holistic"], &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("w/o Multifaceted"));
}

#[test]
fn seed_flag_changes_the_corpus_and_reruns_match() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let read = |p: &str| std::fs::read(d.join(p)).unwrap();
    for (out, seed) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let m = format!("{out}/manifest.jsonl");
        let o = asa(d, &["generate", "--manifest", &m, "--seed", seed], &[]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(read("a/manifest.jsonl"), read("b/manifest.jsonl"));
    assert_ne!(read("a/manifest.jsonl"), read("c/manifest.jsonl"));
}

#[test]
fn validation_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "[train]\nepoch = 3\n").unwrap();
    let o = asa(d, &["train", "--config", "bad.toml"], &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("train.epoch"), "{}", stderr(&o));

    let o = asa(d, &["train", "--manifest", "nowhere.jsonl"], &[]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    let o = asa(d, &["eval", "--split", "everything"], &[]);
    assert_eq!(code(&o), 1);

    std::fs::write(d.join("ok.toml"), CONFIG).unwrap();
    let o = asa(
        d,
        &["train", "--config", "ok.toml"],
        &[("ASA__train__epochs", "many")],
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("train.epochs"), "{}", stderr(&o));
}

#[test]
fn unreachable_splitter_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("asa.toml"), CONFIG).unwrap();
    assert_eq!(code(&asa(d, &["generate", "--config", "asa.toml"], &[])), 0);
    let o = asa(
        d,
        &[
            "extract",
            "--config",
            "asa.toml",
            "--splitter",
            "llm",
            "--splitter-endpoint",
            "http://127.0.0.1:9/v1/generate",
        ],
        &[],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let report = std::fs::read_to_string(d.join("run/extract_report.json")).unwrap();
    assert!(report.contains("S01-R01"));
}

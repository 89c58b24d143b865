use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semauto::synthetic::{generate, SyntheticConfig};

fn tiny(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures/tiny")
        .join(name)
}

fn semauto(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_semauto"));
    for (key, _) in std::env::vars().filter(|(k, _)| k.starts_with("SEMAUTO_")) {
        cmd.env_remove(key);
    }
    cmd.env("RUST_LOG", "warn").args(args).output().unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr is empty");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn synthetic_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    generate(&SyntheticConfig::default())
        .unwrap()
        .write_files(dir.path())
        .unwrap();
    dir
}

fn evaluate(data: &Path, out: &Path) -> Output {
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    semauto(&[
        "--ratings",
        &s(&data.join("ratings.dat")),
        "--movies",
        &s(&data.join("movies.dat")),
        "--mapping",
        &s(&data.join("mapping.tsv")),
        "--triples",
        &s(&data.join("triples.nt")),
        "--out-dir",
        &s(out),
        "--seed",
        "11",
        "--n-values",
        "2,5",
        "--k-values",
        "5,10",
        "--max-epochs",
        "300",
        "evaluate",
    ])
}

#[test]
fn evaluate_writes_reports() {
    let data = synthetic_dir();
    let out = data.path().join("out");
    let run = evaluate(data.path(), &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    for col in ["f1@10", "precision@10", "recall@10", "nDCG@10", "ERR-IA@10"] {
        assert!(header.contains(col), "{header}");
    }
    // 2 n values × (2 k values + 2 baselines) plus the header.
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 11);
    assert!(out.join("plot_f1.csv").exists());
    assert!(out.join("timings.json").exists());
}

#[test]
fn evaluate_is_idempotent() {
    let data = synthetic_dir();
    let (a, b) = (data.path().join("a"), data.path().join("b"));
    assert!(evaluate(data.path(), &a).status.success());
    assert!(evaluate(data.path(), &b).status.success());
    assert!(evaluate(data.path(), &b).status.success());
    for file in ["report.csv", "report.json", "plot_f1.csv"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn untrainable_user_is_reported() {
    let run = semauto(&[
        "--ratings",
        tiny("ratings.dat").to_str().unwrap(),
        "--mapping",
        tiny("mapping.tsv").to_str().unwrap(),
        "--triples",
        tiny("triples.nt").to_str().unwrap(),
        "recommend",
        "--user",
        "10",
    ]);
    assert_eq!(run.status.code(), Some(1));
    let err = stderr_json(&run);
    assert_eq!(err["error"], "validation");
    assert!(err["message"].as_str().unwrap().contains("not trainable"), "{err}");
}

#[test]
fn recommend_lists_unrated_items() {
    let run = semauto(&[
        "--ratings",
        tiny("ratings.dat").to_str().unwrap(),
        "--mapping",
        tiny("mapping.tsv").to_str().unwrap(),
        "--triples",
        tiny("triples.nt").to_str().unwrap(),
        "--k",
        "3",
        "recommend",
        "--user",
        "1",
        "--top",
        "2",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8(run.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rank,item,score");
    assert_eq!(lines.len(), 3);
}

#[test]
fn gradcheck_passes() {
    let run = semauto(&["gradcheck"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(report["networks"], 100);
    assert!(report["max_relative_error"].as_f64().unwrap() < 1e-5);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[train]\nlearning_rte = 0.5\n").unwrap();
    let run = semauto(&["--config", path.to_str().unwrap(), "gradcheck", "--networks", "1"]);
    assert_eq!(run.status.code(), Some(1));
    let err = stderr_json(&run);
    assert!(err["message"].as_str().unwrap().contains("learning_rte"), "{err}");
}

#[test]
fn missing_input_is_a_validation_error() {
    let run = semauto(&["evaluate"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(stderr_json(&run)["message"].as_str().unwrap().contains("paths.ratings"));
}

#[test]
fn help_lists_every_section() {
    let run = semauto(&["--help"]);
    let text = String::from_utf8(run.stdout).unwrap();
    for key in [
        "--learning-rate",
        "--cold-fraction",
        "--predicates",
        "--completion",
        "--out-dir",
        "SEMAUTO_PROFILES_K",
    ] {
        assert!(text.contains(key), "{key} missing from help");
    }
}

#[test]
fn train_profiles_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let fm = dir.path().join("features.txt");
    let profiles = dir.path().join("profiles.txt");
    let extract = semauto(&[
        "--mapping",
        tiny("mapping.tsv").to_str().unwrap(),
        "--triples",
        tiny("triples.nt").to_str().unwrap(),
        "--feature-map",
        fm.to_str().unwrap(),
        "extract-features",
    ]);
    assert!(extract.status.success());
    let train = semauto(&[
        "--ratings",
        tiny("ratings.dat").to_str().unwrap(),
        "--feature-map",
        fm.to_str().unwrap(),
        "--profiles",
        profiles.to_str().unwrap(),
        "train-profiles",
        "--dump-nets",
        dir.path().join("nets").to_str().unwrap(),
    ]);
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&train.stdout).unwrap();
    assert_eq!(summary["summary"]["trained"], 10);
    assert_eq!(summary["summary"]["not_trainable"], 2);
    let map = semauto::kg::load_feature_map(&fm).unwrap();
    assert_eq!(semauto::profiles::load_profiles(&profiles, &map).unwrap().len(), 10);
    assert_eq!(std::fs::read_dir(dir.path().join("nets")).unwrap().count(), 10);
}

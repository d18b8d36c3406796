use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bginv_core::pipeline::PipelineConfig;
use serde_json::Value;

fn bginv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bginv"))
        .args(args)
        .output()
        .expect("run bginv")
}

fn ok(args: &[&str]) -> Value {
    let out = bginv(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1, "{stdout}");
    serde_json::from_str(stdout.trim()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = bginv(&["mine", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(bginv(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn resample_rejects_r1_before_reading() {
    let out = bginv(&["resample", "--clouds", "/definitely/missing", "--out-dir", "/definitely/missing/out", "--r", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("resample") && err.contains("r must be >= 2"), "{err}");
    assert!(!err.contains("missing"), "{err}");
}

#[test]
fn failing_stage_names_itself_and_input() {
    let out = bginv(&["mine", "--corpus", "/definitely/missing.jsonl", "--out", "/tmp/x.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bginv mine") && err.contains("/definitely/missing.jsonl"), "{err}");
}

fn small_bundle(dir: &Path) -> PathBuf {
    ok(&["synth", "--out-dir", s(dir), "--models-per-profile", "4", "--targets", "4", "--n", "5"]);
    let cfg_path = dir.join("pipeline.json");
    let mut cfg = PipelineConfig::load(&cfg_path).unwrap();
    cfg.trees = 10;
    cfg.rounds = 5;
    cfg.repeats = 3;
    cfg.r = 8;
    cfg.save(&cfg_path).unwrap();
    cfg_path
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn assert_same_dir(a: &Path, b: &Path) {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        assert_eq!(read(&a.join(&n)), read(&b.join(&n)), "{n:?}");
    }
}

#[test]
fn pipeline_equals_manual_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = small_bundle(dir.path());
    let summary = ok(&["pipeline", "--config", s(&cfg_path)]);
    assert_eq!(summary["stage"], "pipeline");
    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    let out = dir.path().join("out");
    let m = dir.path().join("manual");
    std::fs::create_dir_all(m.join("models")).unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let meas = dir.path().join("measurements.jsonl");
    let ann = dir.path().join("annotations.jsonl");
    let max_level = cfg.max_level.to_string();
    let n = cfg.n.to_string();
    let seed = cfg.seed.to_string();
    let r = cfg.r.to_string();

    ok(&["mine", "--corpus", s(&corpus), "--out", s(&m.join("support.json"))]);
    ok(&["build-ontology", "--support", s(&m.join("support.json")), "--out", s(&m.join("ontology.json"))]);
    ok(&[
        "search", "--corpus", s(&corpus), "--ontology", s(&m.join("ontology.json")),
        "--out", s(&m.join("manifest.jsonl")), "--n", &n, "--max-level", &max_level, "--seed", &seed,
    ]);
    ok(&[
        "distances", "--corpus", s(&corpus), "--ontology", s(&m.join("ontology.json")),
        "--manifest", s(&m.join("manifest.jsonl")), "--out", s(&m.join("distances.jsonl")),
        "--max-level", &max_level,
    ]);
    ok(&[
        "pointcloud", "--measurements", s(&meas), "--manifest", s(&m.join("distances.jsonl")),
        "--out-dir", s(&m.join("clouds")),
    ]);
    ok(&["resample", "--clouds", s(&m.join("clouds")), "--out-dir", s(&m.join("matrices")), "--r", &r]);
    ok(&[
        "render", "--matrices", s(&m.join("matrices")), "--clouds", s(&m.join("clouds")),
        "--out-dir", s(&m.join("render")),
    ]);
    ok(&["features", "--matrices", s(&m.join("matrices")), "--out", s(&m.join("features.json"))]);
    let features = m.join("features.json");
    let dists = m.join("distances.jsonl");
    let report = m.join("report.json");
    let baseline = ["--measurements", s(&meas), "--manifest", s(&dists)];
    for kind in ["random_forest", "adaboost", "threshold_baseline"] {
        let model = m.join("models").join(format!("{kind}.json"));
        let mut args = vec![
            "train", "--features", s(&features), "--annotations", s(&ann), "--kind", kind,
            "--out", s(&model), "--trees", "10", "--rounds", "5", "--seed", &seed,
        ];
        args.extend(baseline);
        ok(&args);
    }
    let mut args = vec![
        "evaluate", "--features", s(&features), "--annotations", s(&ann), "--out", s(&report),
        "--trees", "10", "--rounds", "5", "--repeats", "3", "--seed", &seed,
        "--kinds", "random_forest,adaboost,threshold_baseline",
    ];
    args.extend(baseline);
    ok(&args);

    for f in ["support.json", "ontology.json", "manifest.jsonl", "distances.jsonl", "features.json", "report.json"] {
        assert_eq!(read(&out.join(f)), read(&m.join(f)), "{f}");
    }
    for d in ["clouds", "matrices", "render", "models"] {
        assert_same_dir(&out.join(d), &m.join(d));
    }

    let pred = m.join("pred.jsonl");
    let summary = ok(&[
        "assess", "--model", s(&m.join("models/random_forest.json")), "--features", s(&m.join("features.json")),
        "--out", s(&pred),
    ]);
    assert_eq!(summary["models"], 12);
    assert_eq!(std::fs::read_to_string(&pred).unwrap().lines().count(), 12);
}

#[test]
fn expand_prints_levels() {
    let dir = tempfile::tempdir().unwrap();
    small_bundle(dir.path());
    let corpus = dir.path().join("corpus.jsonl");
    let support = dir.path().join("support.json");
    let onto = dir.path().join("ontology.json");
    ok(&["mine", "--corpus", s(&corpus), "--out", s(&support), "--miner", "apriori"]);
    ok(&["build-ontology", "--support", s(&support), "--out", s(&onto)]);
    let v = ok(&["expand", "--ontology", s(&onto), "--keyword", "Scene  03", "--max-level", "2"]);
    assert_eq!(v["levels"][0], serde_json::json!(["scene 03"]));
    assert_eq!(v["frontiers"][1], serde_json::json!(["scene 02", "scene 04"]));
    let out = bginv(&["expand", "--ontology", s(&onto), "--keyword", "nowhere"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn baseline_training_needs_measurements() {
    let dir = tempfile::tempdir().unwrap();
    let out = bginv(&[
        "train", "--features", s(&dir.path().join("f.json")), "--annotations", s(&dir.path().join("a.jsonl")),
        "--kind", "threshold_baseline", "--out", s(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold_baseline"));
}

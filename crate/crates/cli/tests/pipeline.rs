use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use ssp_core::formats::{codebook_load, read_embeddings};
use ssp_core::quantizer::quantization_error;
use tempfile::TempDir;

const SMALL: &str =
    r#"{"num_classes": 8, "per_class": 10, "anchor_size": 512, "train_size": 256, "epochs": 3, "centroids": 16}"#;

fn ssp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssp")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = ssp(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn small_dir() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.json"), SMALL).unwrap();
    dir
}

fn assert_same_files(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let (pa, pb) = (a.join(&name), b.join(&name));
        if pa.is_file() {
            assert_eq!(fs::read(&pa).unwrap(), fs::read(&pb).unwrap(), "{name:?} differs");
        }
    }
}

#[test]
fn gen_is_reproducible_and_lists_four_splits() {
    let dir = small_dir();
    let d = dir.path();
    ok(d, &["gen", "--config", "c.json", "--out", "a"]);
    ok(d, &["gen", "--config", "c.json", "--out", "b"]);
    assert_same_files(&d.join("a"), &d.join("b"));
    let manifest = json(d.join("a/manifest.json"));
    let names: Vec<&str> = manifest["splits"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["anchor", "train", "query", "gallery"]);
    assert_eq!(manifest["splits"][2]["rows"], 8);
    assert_eq!(manifest["splits"][3]["rows"], 72);
}

#[test]
fn invalid_config_fails_with_structured_error() {
    let dir = small_dir();
    let out = ssp(dir.path(), &["gen", "--per-class", "1", "--out", "bad"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim().lines().last().unwrap()).unwrap();
    assert_eq!(err["error"], "BadConfig");

    fs::write(dir.path().join("typo.json"), r#"{"per_clas": 5}"#).unwrap();
    let out = ssp(dir.path(), &["gen", "--config", "typo.json"]);
    assert!(!out.status.success());

    let out = Command::new(env!("CARGO_BIN_EXE_ssp"))
        .current_dir(dir.path())
        .env("SSP_THREADS", "0")
        .args(["gen", "--config", "c.json"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn pipeline_artifacts_are_consistent_and_reproducible() {
    let dir = small_dir();
    let d = dir.path();
    ok(d, &["gen", "--config", "c.json"]);
    for run in ["r1", "r2"] {
        ok(d, &["train-codebook", "--config", "c.json", "--out", run]);
        let cb = format!("{run}/codebook.pqc");
        ok(d, &["train-query", "--config", "c.json", "--codebook", &cb, "--out", run]);
        let ck = format!("{run}/query.sspq");
        let ev = format!("{run}/eval");
        ok(d, &["eval", "--checkpoint", &ck, "--codebook", &cb, "--out", &ev]);
    }
    assert_same_files(&d.join("r1"), &d.join("r2"));
    assert_same_files(&d.join("r1/eval"), &d.join("r2/eval"));

    for name in ["symmetric_gallery", "symmetric_query", "asymmetric", "asymmetric_pq"] {
        let r = json(d.join(format!("r1/eval/{name}.json")));
        let map = r["map"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&map));
        assert_eq!(r["n_queries"], 8);
    }
    let csv = fs::read_to_string(d.join("r1/eval/summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    // summary objective equals the distortion recomputed from the saved codebook
    let summary = json(d.join("r1/codebook_summary.json"));
    let cb = codebook_load(d.join("r1/codebook.pqc")).unwrap();
    let anchors = read_embeddings(d.join("data/anchor_gallery.emb")).unwrap();
    let mut total = 0.0;
    for j in 0..cb.m() {
        let e = quantization_error(&anchors.subspace(j, cb.m()).unwrap().to_matrix(), cb.sub(j).centroids());
        assert!((e - summary["objectives"][j].as_f64().unwrap()).abs() < 1e-6);
        total += e;
    }
    assert!((total - summary["objective"].as_f64().unwrap()).abs() < 1e-6);
    assert_eq!(summary["k"], 16);
    assert_eq!(summary["anchor_count"], "4294967296");

    let report = json(d.join("r1/train_report.json"));
    assert_eq!(report["epoch_losses"].as_array().unwrap().len(), 3);
    assert_eq!(report["config"]["tau_g"], 0.1);
    assert_eq!(report["config"]["tau_q"], 1.0);
}

#[test]
fn train_query_flags_reach_the_config() {
    let dir = small_dir();
    let d = dir.path();
    ok(d, &["gen", "--config", "c.json"]);
    ok(d, &["train-codebook", "--config", "c.json"]);
    ok(d, &["train-query", "--config", "c.json", "--tau-g", "0", "--sim", "cosine", "--epochs", "2", "--out", "hard"]);
    let r = json(d.join("hard/train_report.json"));
    assert_eq!(r["config"]["tau_g"], 0.0);
    assert_eq!(r["epoch_losses"].as_array().unwrap().len(), 2);
    assert!(r["final_loss"].as_f64().unwrap().is_finite());

    ok(
        d,
        &[
            "train-query",
            "--config",
            "c.json",
            "--loss",
            "reg",
            "--sim",
            "l2",
            "--tau-q",
            "0.5",
            "--epochs",
            "1",
            "--out",
            "reg",
        ],
    );
    let r = json(d.join("reg/train_report.json"));
    assert_eq!(r["config"]["loss_kind"], "regression");
    assert_eq!(r["config"]["similarity_kind"], "neg_euclidean");
    assert_eq!(r["config"]["tau_q"], 0.5);
}

#[test]
fn flat_mode_warns_and_pq_bench_reports_each_m() {
    let dir = small_dir();
    let d = dir.path();
    ok(d, &["gen", "--config", "c.json"]);
    let out = ok(d, &["train-codebook", "--config", "c.json", "--m", "1", "--out", "flat"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("flat"));
    assert_eq!(json(d.join("flat/codebook_summary.json"))["flat_kmeans_baseline"], true);

    let out = Command::new(env!("CARGO_BIN_EXE_ssp"))
        .current_dir(d)
        .env("SSP_THREADS", "1")
        .args(["pq-bench", "--config", "c.json", "--m", "1,2,8", "--out", "bench"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let bench = json(d.join("bench/pq_bench.json"));
    let rows = bench["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2]["memory"]["code_bytes"], 72 * 8 / 2);
    assert!(rows[0]["asymmetric_map"].is_null());
}

/// Standard benchmark, seed 0: training must not hurt asymmetric retrieval, and
/// the M=32, K=256 memory row reproduces the 1M-gallery arithmetic.
#[test]
fn standard_benchmark_eval() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["gen"]);
    ok(d, &["train-codebook"]);
    ok(d, &["train-query", "--init-only", "--out", "init"]);
    ok(d, &["train-query"]);
    ok(d, &["eval", "--checkpoint", "init/query.sspq", "--out", "eval_init"]);
    ok(d, &["eval"]);
    let untrained = json(d.join("eval_init/asymmetric.json"))["map"].as_f64().unwrap();
    let trained = json(d.join("run/eval/asymmetric.json"))["map"].as_f64().unwrap();
    assert!(untrained <= trained, "untrained {untrained} > trained {trained}");

    ok(d, &["train-codebook", "--m", "32", "--out", "m32"]);
    ok(d, &["eval", "--codebook", "m32/codebook.pqc", "--out", "eval_m32"]);
    let mem = json(d.join("eval_m32/memory.json"));
    assert_eq!(mem["reference"]["code_bytes"], 32_191_808);
    assert_eq!(format!("{:.2}", mem["reference"]["mib"].as_f64().unwrap()), "30.70");
    assert_eq!(mem["gallery"]["code_bytes"], 736 * 32);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use roadsense::cli::{run, EXIT_INVALID, EXIT_OK, EXIT_RUNTIME};
use roadsense::io::read_json;
use roadsense::report::Manifest;
use roadsense::roadsense_core::experiment::MetricsReport;

const TINY: &str = r#"
budgets = [2, 4]
seeds = [1, 2]
base_sensors = 8
ablation_budget = 3
tabular_models = ["linear"]

[graph]
source = "synthetic"
n_nodes = 60

[model]
hidden_dim = 8
gat_heads = 2
head_hidden = 8
max_epochs = 30
learning_rate = 0.01

[agent]
episodes = 2
finetune_epochs = 2
batch_size = 4
q_hidden = 8
"#;

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.toml");
    fs::write(&p, TINY).unwrap();
    p
}

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("roadsense").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    let bin = env!("CARGO_BIN_EXE_roadsense");
    let out = Command::new(bin).args(["compare", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = Command::new(bin).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(Command::new(bin).arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"budgets": [20, 10]}"#).unwrap();
    assert_eq!(cli(&["compare", "--config", s(&bad)]), EXIT_INVALID);
    fs::write(&bad, r#"{"budgets": [10,"#).unwrap();
    assert_eq!(cli(&["compare", "--config", s(&bad)]), EXIT_INVALID);
    assert_eq!(cli(&["compare", "--config", s(&dir.path().join("missing.json"))]), EXIT_INVALID);
    let cfg = tiny_config(dir.path());
    assert_eq!(cli(&["place", "--config", s(&cfg), "--strategy", "psychic"]), EXIT_INVALID);
}

#[test]
fn runtime_failure_exits_two_and_flushes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("big");
    assert_eq!(cli(&["compare", "--config", s(&cfg), "--budget", "500", "--out", s(&out)]), EXIT_RUNTIME);
    let manifest: Manifest = read_json(&out.join("manifest.json")).unwrap();
    assert_eq!(manifest.status, "partial");
    assert_eq!(manifest.errors.len(), 2);
    let report: MetricsReport = read_json(&out.join("report.json")).unwrap();
    assert!(report.runs.is_empty());
}

#[test]
fn compare_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(cli(&["compare", "--config", s(&cfg), "--seed", "5", "--out", s(&a)]), EXIT_OK);
    assert_eq!(cli(&["compare", "--config", s(&cfg), "--seed", "5", "--out", s(&b)]), EXIT_OK);
    for f in ["report.json", "cells.csv", "summary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ma: Manifest = read_json(&a.join("manifest.json")).unwrap();
    let mb: Manifest = read_json(&b.join("manifest.json")).unwrap();
    assert_eq!(ma.files, mb.files);
    assert_eq!(ma.config_sha256, mb.config_sha256);
    assert_eq!(ma.seeds, vec![5]);
}

#[test]
fn generate_then_compare_on_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let gen = dir.path().join("gen");
    assert_eq!(cli(&["generate", "--config", s(&cfg), "--seed", "3", "--out", s(&gen)]), EXIT_OK);
    assert!(gen.join("nodes.csv").exists() && gen.join("edges.csv").exists());
    let emitted = gen.join("config.json");
    assert_eq!(cli(&["compare", "--config", s(&emitted)]), EXIT_OK);
    let report: MetricsReport = read_json(&gen.join("report.json")).unwrap();
    // --seed narrows the emitted config to that seed.
    assert_eq!(report.seeds, vec![3]);
    assert!(report.runs.iter().all(|r| r.node_count == 60));
    let tidy = fs::read_to_string(gen.join("cells.csv")).unwrap();
    assert_eq!(tidy.lines().next(), Some("strategy,model,budget,seed,metric,value"));
    // 7 strategies x 2 budgets x 2 models x 5 rows.
    assert_eq!(tidy.lines().count(), 1 + 7 * 2 * 2 * 5);
}

#[test]
fn train_place_coverage_ablate_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("o");
    assert_eq!(cli(&["train", "--config", s(&cfg), "--out", s(&out.join("train"))]), EXIT_OK);
    let ckpt: serde_json::Value = read_json(&out.join("train/model.json")).unwrap();
    assert_eq!(ckpt["kind"], "hybrid_gnn");

    assert_eq!(cli(&["place", "--config", s(&cfg), "--strategy", "betweenness", "--out", s(&out.join("place"))]), EXIT_OK);
    let placed: serde_json::Value = read_json(&out.join("place/placement.json")).unwrap();
    assert_eq!(placed["nodes"].as_array().unwrap().len(), 4);
    let scores = fs::read_to_string(out.join("place/scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 61);

    assert_eq!(cli(&["coverage", "--config", s(&cfg), "--strategy", "random", "--out", s(&out.join("cov"))]), EXIT_OK);
    let cov: serde_json::Value = read_json(&out.join("cov/coverage.json")).unwrap();
    let rows = cov["report"]["rows"].as_array().unwrap();
    let before: u64 = rows.iter().map(|r| r["sensors_before"].as_u64().unwrap()).sum();
    let after: u64 = rows.iter().map(|r| r["sensors_after"][1].as_u64().unwrap()).sum();
    assert_eq!((before, after), (8, 12));

    assert_eq!(cli(&["ablate", "--config", s(&cfg), "--seed", "1", "--out", s(&out.join("abl1"))]), EXIT_OK);
    assert_eq!(cli(&["ablate", "--config", s(&cfg), "--seed", "2", "--out", s(&out.join("abl2"))]), EXIT_OK);
    let abl: MetricsReport = read_json(&out.join("abl1/report.json")).unwrap();
    assert_eq!(abl.strategies, ["full", "no-rl", "gcn-only", "gat-only"]);

    let merged = out.join("merged");
    let (r1, r2) = (out.join("abl1/report.json"), out.join("abl2/report.json"));
    assert_eq!(cli(&["report", "--input", s(&r1), "--input", s(&r2), "--out", s(&merged)]), EXIT_OK);
    let m: MetricsReport = read_json(&merged.join("report.json")).unwrap();
    assert_eq!(m.seeds, vec![1, 2]);
    assert_eq!(m.summary.len(), 4);
    assert!(m.summary.iter().all(|s| s.mse.n == 2));
    // The same report twice is rejected.
    assert_eq!(cli(&["report", "--input", s(&r1), "--input", s(&r1)]), EXIT_INVALID);
}

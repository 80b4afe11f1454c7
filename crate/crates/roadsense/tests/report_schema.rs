//! The report layout is a contract: field paths of a pinned-seed report must
//! match the golden list. Set `UPDATE_GOLDEN=1` to rewrite it deliberately.

use std::collections::BTreeSet;
use std::path::Path;

use roadsense::harness::{run_ablation, run_comparison, LoadedConfig};
use roadsense::report::{summary_csv, tidy_csv};
use roadsense::roadsense_core::experiment::{ExperimentConfig, GraphSource};
use roadsense::roadsense_core::synthetic::SyntheticConfig;
use serde_json::Value;

fn pinned() -> LoadedConfig {
    let mut cfg = ExperimentConfig {
        graph: GraphSource::Synthetic(SyntheticConfig { n_nodes: 50, ..SyntheticConfig::default() }),
        base_sensors: 8,
        budgets: vec![0, 3],
        seeds: vec![11],
        ablation_budget: 2,
        ..ExperimentConfig::default()
    };
    cfg.model.hidden_dim = 8;
    cfg.model.gat_heads = 2;
    cfg.model.head_hidden = 8;
    cfg.model.max_epochs = 10;
    cfg.agent.episodes = 1;
    cfg.agent.finetune_epochs = 1;
    cfg.agent.q_hidden = 4;
    cfg.tabular.mlp_epochs = 5;
    LoadedConfig::from_config(cfg)
}

fn paths(v: &Value, prefix: String, out: &mut BTreeSet<String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                paths(child, format!("{prefix}.{k}"), out);
            }
        }
        Value::Array(items) => {
            for item in items {
                paths(item, format!("{prefix}[]"), out);
            }
            if items.is_empty() {
                out.insert(format!("{prefix}[]"));
            }
        }
        _ => {
            out.insert(prefix);
        }
    }
}

fn check_golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected, "{name} drifted; rerun with UPDATE_GOLDEN=1 if intended");
}

#[test]
fn comparison_and_ablation_layout() {
    let loaded = pinned();
    let (report, errors) = run_comparison(&loaded).unwrap();
    assert!(errors.is_empty());
    let mut keys = BTreeSet::new();
    paths(&serde_json::to_value(&report).unwrap(), "report".into(), &mut keys);
    let (ablation, errors) = run_ablation(&loaded).unwrap();
    assert!(errors.is_empty());
    paths(&serde_json::to_value(&ablation).unwrap(), "report".into(), &mut keys);
    let mut text: String = keys.into_iter().map(|k| k + "\n").collect();
    text.push_str(tidy_csv(&report).lines().next().unwrap());
    text.push('\n');
    text.push_str(summary_csv(&report).lines().next().unwrap());
    text.push('\n');
    check_golden("report_schema.txt", &text);
    assert_eq!(report.schema_version, 1);
}

//! Config loading and multi-seed drivers. Seeds run as independent rayon
//! jobs; results are merged in config seed order after all jobs finish.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use roadsense_core::experiment::{
    run_ablation_seed, run_comparison_seed, ExperimentConfig, ExperimentError, GraphSource, MetricsReport, SeedResult,
    ABLATION_ARMS,
};
use roadsense_core::graph::NetworkGraph;
use roadsense_core::synthetic::{generate_synthetic, SyntheticError};

use crate::io::{load_graph, read_config, IoError};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{failed} of {total} seeds failed; partial results written")]
    SeedsFailed { failed: usize, total: usize },
}

impl HarnessError {
    /// Bad input, as opposed to a failure while running.
    pub fn is_validation(&self) -> bool {
        match self {
            HarnessError::InvalidConfig(_) => true,
            HarnessError::Experiment(ExperimentError::InvalidConfig(_)) => true,
            HarnessError::Synthetic(SyntheticError::InvalidConfig(_)) => true,
            HarnessError::Io(IoError::ParseError { .. } | IoError::MissingFile(_)) => true,
            _ => false,
        }
    }
}

/// A parsed config and the directory its relative paths are resolved against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let config: ExperimentConfig = read_config(path)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    pub fn from_config(config: ExperimentConfig) -> Self {
        Self { config, base_dir: PathBuf::new() }
    }

    /// Bytes hashed into the manifest: the effective config after
    /// command-line overrides, output directory left out.
    pub fn fingerprint(&self) -> Vec<u8> {
        let cfg = ExperimentConfig { output_dir: String::new(), ..self.config.clone() };
        serde_json::to_vec(&cfg).expect("config serializes")
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }
}

/// The network a seed runs on: the file graph, or a fresh synthetic graph.
pub fn graph_for_seed(loaded: &LoadedConfig, seed: u64) -> Result<NetworkGraph, HarnessError> {
    match &loaded.config.graph {
        GraphSource::Files { nodes, edges } => Ok(load_graph(&loaded.resolve(nodes), &loaded.resolve(edges))?),
        GraphSource::Synthetic(_) => {
            let cfg = loaded.config.graph.synthetic_for_seed(seed).expect("synthetic source");
            Ok(generate_synthetic(&cfg)?)
        }
    }
}

/// Per-seed outcomes in seed order.
pub type SeedOutcomes = Vec<(u64, Result<SeedResult, HarnessError>)>;

fn run_seeds<F>(loaded: &LoadedConfig, job: F) -> Result<SeedOutcomes, HarnessError>
where
    F: Fn(&ExperimentConfig, &NetworkGraph, u64) -> Result<SeedResult, ExperimentError> + Sync,
{
    loaded.config.validate()?;
    let shared = match &loaded.config.graph {
        GraphSource::Files { .. } => Some(graph_for_seed(loaded, 0)?),
        GraphSource::Synthetic(_) => None,
    };
    Ok(loaded
        .config
        .seeds
        .par_iter()
        .map(|&seed| {
            let outcome = match &shared {
                Some(g) => job(&loaded.config, g, seed).map_err(HarnessError::from),
                None => graph_for_seed(loaded, seed).and_then(|g| Ok(job(&loaded.config, &g, seed)?)),
            };
            (seed, outcome)
        })
        .collect())
}

/// Splits outcomes into the report of the seeds that finished and the
/// errors of those that did not.
pub fn merge(kind: &str, loaded: &LoadedConfig, outcomes: SeedOutcomes) -> (MetricsReport, Vec<(u64, HarnessError)>) {
    let cfg = &loaded.config;
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    for (seed, r) in outcomes {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => errors.push((seed, e)),
        }
    }
    let (strategies, budgets) = if kind == "ablation" {
        (ABLATION_ARMS.iter().map(|s| s.to_string()).collect(), vec![cfg.ablation_budget])
    } else {
        (cfg.strategy_labels(), cfg.budgets.clone())
    };
    (MetricsReport::assemble(kind, strategies, budgets, cfg.seeds.clone(), runs), errors)
}

pub fn run_comparison(loaded: &LoadedConfig) -> Result<(MetricsReport, Vec<(u64, HarnessError)>), HarnessError> {
    Ok(merge("comparison", loaded, run_seeds(loaded, run_comparison_seed)?))
}

pub fn run_ablation(loaded: &LoadedConfig) -> Result<(MetricsReport, Vec<(u64, HarnessError)>), HarnessError> {
    Ok(merge("ablation", loaded, run_seeds(loaded, run_ablation_seed)?))
}

/// Combines reports of the same kind (for example one per seed batch).
pub fn merge_reports(reports: Vec<MetricsReport>) -> Result<MetricsReport, HarnessError> {
    let mut iter = reports.into_iter();
    let first = iter.next().ok_or_else(|| HarnessError::InvalidConfig("no reports to merge".into()))?;
    let (kind, strategies, budgets) = (first.kind.clone(), first.strategies.clone(), first.budgets.clone());
    let mut seeds = first.seeds.clone();
    let mut done: Vec<u64> = first.runs.iter().map(|r| r.seed).collect();
    let mut runs = first.runs;
    for r in iter {
        if r.kind != kind || r.strategies != strategies || r.budgets != budgets {
            return Err(HarnessError::InvalidConfig("reports differ in kind, strategies or budgets".into()));
        }
        seeds.extend(r.seeds.iter().filter(|s| !seeds.contains(s)).copied().collect::<Vec<_>>());
        for run in r.runs {
            if done.contains(&run.seed) {
                return Err(HarnessError::InvalidConfig(format!("seed {} appears in more than one report", run.seed)));
            }
            done.push(run.seed);
            runs.push(run);
        }
    }
    Ok(MetricsReport::assemble(&kind, strategies, budgets, seeds, runs))
}

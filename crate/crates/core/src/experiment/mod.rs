//! Per-seed experiment runs: strategy comparison, model comparison and
//! ablation arms.
//!
//! Every run builds its partition and splits from the run seed, pretrains a
//! model on the original sensors for the agent to fine-tune, then scores each
//! placement by retraining from a fresh initialization on the enlarged train
//! set and measuring the fixed test set. Retraining is a pure function of the
//! train set, so identical placements always score identically.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agent::{final_placement, train_agent, AgentConfig, AgentError, ExplorationKind, PlacementEnv};
use crate::baselines::{
    activity_proxy, select_excluding, select_rows, train_tabular, BaselineError, PlacementStrategy, StrategyKind,
    TabularConfig, TabularKind,
};
use crate::graph::NetworkGraph;
use crate::metrics::{bootstrap_mean_ci, compute_metrics, summarize, ConfidenceInterval, Metrics, MetricsError, Summary};
use crate::model::{predict_in, train_in, Architecture, GraphContext, HybridModelParams, ModelConfig, ModelError, TrainReport};
use crate::partition::{make_splits, partition_with_count, PartitionError, SensorPartition, SplitAssignment};
use crate::rng::mix;
use crate::synthetic::{SyntheticConfig, SyntheticError};

pub const SCHEMA_VERSION: u32 = 1;
pub const HYBRID_MODEL: &str = "hybrid_gnn";
pub const ABLATION_ARMS: [&str; 4] = ["full", "no-rl", "gcn-only", "gat-only"];

// Salts for the child seeds drawn from one run seed.
const GRAPH_SALT: u64 = 0x67;
const PARTITION_SALT: u64 = 1;
const SPLIT_SALT: u64 = 2;
const PRETRAIN_SALT: u64 = 3;
const RETRAIN_SALT: u64 = 4;
const AGENT_SALT: u64 = 5;
const RANDOM_SALT: u64 = 6;
const ACTIVITY_SALT: u64 = 7;
const TABULAR_SALT: u64 = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

type Result<T> = core::result::Result<T, ExperimentError>;

/// Where the network comes from. File paths are resolved by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum GraphSource {
    /// A fresh planted-signal graph per run seed, derived from `seed` here and
    /// the run seed.
    Synthetic(SyntheticConfig),
    Files { nodes: String, edges: String },
}

impl Default for GraphSource {
    fn default() -> Self {
        GraphSource::Synthetic(SyntheticConfig::default())
    }
}

impl GraphSource {
    /// Synthetic config for one run seed, or `None` for file graphs.
    pub fn synthetic_for_seed(&self, seed: u64) -> Option<SyntheticConfig> {
        match self {
            GraphSource::Synthetic(cfg) => Some(SyntheticConfig { seed: mix(cfg.seed, seed ^ GRAPH_SALT), ..cfg.clone() }),
            GraphSource::Files { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub graph: GraphSource,
    /// Number of original sensors.
    pub base_sensors: usize,
    /// Strictly ascending placement budgets.
    pub budgets: Vec<usize>,
    pub strategies: Vec<StrategyKind>,
    pub rl_variants: Vec<ExplorationKind>,
    /// Feature-only models scored on every placement next to the hybrid model.
    pub tabular_models: Vec<TabularKind>,
    pub seeds: Vec<u64>,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Log-scale noise of the observed-activity proxy.
    pub activity_noise_sd: f64,
    pub ablation_budget: usize,
    /// The seed field is replaced per run.
    pub model: ModelConfig,
    pub agent: AgentConfig,
    pub tabular: TabularConfig,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            graph: GraphSource::default(),
            base_sensors: 20,
            budgets: Vec::from([10, 20, 40]),
            strategies: StrategyKind::HEURISTICS.to_vec(),
            rl_variants: ExplorationKind::ALL.to_vec(),
            tabular_models: Vec::from([TabularKind::Linear, TabularKind::Mlp]),
            seeds: (0..5).collect(),
            val_fraction: 0.15,
            test_fraction: 0.15,
            activity_noise_sd: 0.5,
            ablation_budget: 20,
            model: ModelConfig::default(),
            agent: AgentConfig::default(),
            tabular: TabularConfig::default(),
            output_dir: "out".to_string(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ExperimentError::InvalidConfig(m.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(ExperimentError::InvalidConfig(format!(
                "schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.budgets.is_empty() || self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return bad("budgets must be non-empty and strictly ascending");
        }
        if self.seeds.is_empty() || self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be non-empty and distinct");
        }
        if self.base_sensors == 0 {
            return bad("base_sensors must be at least 1");
        }
        if self.strategies.contains(&StrategyKind::RlGreedy) {
            return bad("learned placement is configured through rl_variants");
        }
        if has_duplicates(&self.strategies) || has_duplicates(&self.rl_variants) || has_duplicates(&self.tabular_models) {
            return bad("strategies, rl_variants and tabular_models must not repeat");
        }
        if !(self.activity_noise_sd >= 0.0) {
            return bad("activity_noise_sd must be non-negative");
        }
        if let GraphSource::Synthetic(s) = &self.graph {
            s.validate()?;
        }
        self.model.validate()?;
        self.agent.validate()?;
        Ok(())
    }

    pub fn max_budget(&self) -> usize {
        self.budgets.last().copied().unwrap_or(0)
    }

    /// Strategy labels in report order: heuristics, then learned variants.
    pub fn strategy_labels(&self) -> Vec<String> {
        self.strategies
            .iter()
            .map(|s| s.as_str().to_string())
            .chain(self.rl_variants.iter().map(|k| rl_label(*k)))
            .collect()
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items.iter().enumerate().any(|(i, a)| items[..i].contains(a))
}

pub fn rl_label(kind: ExplorationKind) -> String {
    format!("rl_{}", kind.as_str())
}

pub fn tabular_label(kind: TabularKind) -> &'static str {
    match kind {
        TabularKind::Linear => "linear",
        TabularKind::Mlp => "mlp",
    }
}

/// Test-set metrics of one (strategy, model, budget, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub strategy: String,
    pub model: String,
    pub budget: usize,
    pub seed: u64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub strategy: String,
    pub seed: u64,
    pub budget: usize,
    pub nodes: Vec<usize>,
}

/// Validation-gain trace of one agent training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub strategy: String,
    pub seed: u64,
    pub budget: usize,
    pub episode: usize,
    pub extrinsic_total: f64,
    pub intrinsic_total: f64,
    pub initial_val_mse: f64,
    pub final_val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub node_count: usize,
    pub base_sensors: Vec<usize>,
    pub val_nodes: usize,
    pub test_nodes: usize,
    pub cells: Vec<CellResult>,
    pub placements: Vec<PlacementRecord>,
    pub episodes: Vec<EpisodeSummary>,
}

/// Mean and standard deviation over seeds of every metric of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub strategy: String,
    pub model: String,
    pub budget: usize,
    pub mse: Summary,
    pub rmse: Summary,
    pub mae: Summary,
    pub mape_pct: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub kind: String,
    pub strategies: Vec<String>,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub runs: Vec<SeedResult>,
    pub summary: Vec<CellSummary>,
}

impl MetricsReport {
    /// Orders runs by seed position in `seeds` and recomputes the summary.
    pub fn assemble(kind: &str, strategies: Vec<String>, budgets: Vec<usize>, seeds: Vec<u64>, mut runs: Vec<SeedResult>) -> Self {
        runs.sort_by_key(|r| seeds.iter().position(|s| *s == r.seed));
        let cells: Vec<&CellResult> = runs.iter().flat_map(|r| &r.cells).collect();
        let summary = aggregate(&cells);
        Self { schema_version: SCHEMA_VERSION, kind: kind.to_string(), strategies, budgets, seeds, runs, summary }
    }

    pub fn cells(&self) -> impl Iterator<Item = &CellResult> {
        self.runs.iter().flat_map(|r| &r.cells)
    }

    pub fn summary_for(&self, strategy: &str, model: &str, budget: usize) -> Option<&CellSummary> {
        self.summary.iter().find(|s| s.strategy == strategy && s.model == model && s.budget == budget)
    }

    /// Per-seed MSE of the hybrid model for one strategy and budget, in seed order.
    pub fn mse_by_seed(&self, strategy: &str, budget: usize) -> Vec<f64> {
        self.cells()
            .filter(|c| c.strategy == strategy && c.model == HYBRID_MODEL && c.budget == budget)
            .map(|c| c.metrics.mse)
            .collect()
    }

    /// Bootstrap interval of the mean per-seed MSE difference `a − b`.
    pub fn paired_difference(&self, a: &str, b: &str, budget: usize, resamples: usize, seed: u64) -> Option<ConfidenceInterval> {
        let xa = self.mse_by_seed(a, budget);
        let xb = self.mse_by_seed(b, budget);
        if xa.len() != xb.len() {
            return None;
        }
        let diff: Vec<f64> = xa.iter().zip(&xb).map(|(x, y)| x - y).collect();
        bootstrap_mean_ci(&diff, resamples, 0.95, seed)
    }
}

/// Groups cells by (strategy, model, budget) in first-seen order.
pub fn aggregate(cells: &[&CellResult]) -> Vec<CellSummary> {
    let mut order: Vec<(String, String, usize)> = Vec::new();
    let mut groups: BTreeMap<(String, String, usize), Vec<Metrics>> = BTreeMap::new();
    for c in cells {
        let key = (c.strategy.clone(), c.model.clone(), c.budget);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(c.metrics);
    }
    order
        .into_iter()
        .map(|key| {
            let ms = &groups[&key];
            let pick = |f: fn(&Metrics) -> f64| summarize(&ms.iter().map(f).collect::<Vec<_>>());
            CellSummary {
                mse: pick(|m| m.mse),
                rmse: pick(|m| m.rmse),
                mae: pick(|m| m.mae),
                mape_pct: pick(|m| m.mape_pct),
                strategy: key.0,
                model: key.1,
                budget: key.2,
            }
        })
        .collect()
}

/// Partition, splits and graph context shared by every arm of one run.
pub struct RunSetup<'g> {
    pub graph: &'g NetworkGraph,
    pub ctx: GraphContext,
    pub partition: SensorPartition,
    pub split: SplitAssignment,
    pub seed: u64,
}

impl<'g> RunSetup<'g> {
    pub fn new(config: &ExperimentConfig, graph: &'g NetworkGraph, seed: u64) -> Result<Self> {
        let partition = partition_with_count(graph, config.base_sensors, mix(seed, PARTITION_SALT))?;
        let split = make_splits(&partition, config.val_fraction, config.test_fraction, mix(seed, SPLIT_SALT))?;
        Ok(Self { graph, ctx: GraphContext::new(graph), partition, split, seed })
    }

    /// Nodes a placement may pick: unlabeled and not held out.
    pub fn candidate_count(&self) -> usize {
        self.partition.unlabeled().difference(&self.split.held_out()).count()
    }

    fn model_config(&self, base: &ModelConfig, architecture: Architecture, salt: u64) -> ModelConfig {
        ModelConfig { architecture, seed: mix(self.seed, salt), ..base.clone() }
    }

    /// Trains a fresh model on the original sensors.
    pub fn pretrain(&self, base: &ModelConfig, architecture: Architecture) -> Result<(HybridModelParams, TrainReport)> {
        let cfg = self.model_config(base, architecture, PRETRAIN_SALT);
        let mut params = HybridModelParams::init(&cfg, self.graph.feature_dim(), self.graph.edge_dim())?;
        let report = train_in(&mut params, &self.ctx, &self.split.train_vec(), &self.split.val_vec(), &cfg)?;
        Ok((params, report))
    }

    pub fn heuristic_placement(&self, config: &ExperimentConfig, kind: StrategyKind, budget: usize) -> Result<Vec<usize>> {
        let activity = activity_proxy(self.graph, config.activity_noise_sd, mix(self.seed, ACTIVITY_SALT));
        let strategy = PlacementStrategy { kind, seed: mix(self.seed, RANDOM_SALT) };
        Ok(select_excluding(self.graph, &self.partition, strategy, budget, Some(&activity), &self.split.held_out())?)
    }

    /// Trains an agent at `budget` and returns its greedy placement plus the
    /// training trace.
    pub fn rl_placement(
        &self,
        config: &ExperimentConfig,
        kind: ExplorationKind,
        architecture: Architecture,
        budget: usize,
        label: &str,
    ) -> Result<(Vec<usize>, Vec<EpisodeSummary>)> {
        if budget == 0 {
            return Ok((Vec::new(), Vec::new()));
        }
        let (pretrained, _) = self.pretrain(&config.model, architecture)?;
        let mut agent_cfg = config.agent.clone();
        agent_cfg.exploration.kind = kind;
        let mut env = PlacementEnv::from_context(
            self.ctx.clone(),
            self.partition.clone(),
            self.split.clone(),
            pretrained,
            budget,
            agent_cfg.finetune_epochs,
            agent_cfg.finetune_lr,
        )?;
        let (agent, traces) = train_agent(&mut env, &agent_cfg, mix(self.seed, AGENT_SALT))?;
        let nodes = final_placement(agent.qnet(), &mut env, budget)?;
        let episodes = traces
            .iter()
            .map(|t| EpisodeSummary {
                strategy: label.to_string(),
                seed: self.seed,
                budget,
                episode: t.episode,
                extrinsic_total: t.extrinsic.iter().sum(),
                intrinsic_total: t.intrinsic.iter().sum(),
                initial_val_mse: t.val_losses[0],
                final_val_mse: t.final_val_mse,
            })
            .collect();
        Ok((nodes, episodes))
    }

    /// Retrains from a fresh initialization on the original sensors plus
    /// `added` and scores the test set.
    pub fn evaluate(&self, config: &ExperimentConfig, architecture: Architecture, added: &[usize]) -> Result<Metrics> {
        let partition = self.partition.with_added(added)?;
        let split = self.split.with_train_from(&partition);
        let cfg = self.model_config(&config.model, architecture, RETRAIN_SALT);
        let mut params = HybridModelParams::init(&cfg, self.graph.feature_dim(), self.graph.edge_dim())?;
        train_in(&mut params, &self.ctx, &split.train_vec(), &split.val_vec(), &cfg)?;
        let pred = predict_in(&params, &self.ctx)?;
        self.score(&pred)
    }

    /// Feature-only model trained on the same enlarged train set.
    pub fn evaluate_tabular(&self, config: &ExperimentConfig, kind: TabularKind, added: &[usize]) -> Result<Metrics> {
        let partition = self.partition.with_added(added)?;
        let train: Vec<usize> = partition.train().into_iter().collect();
        let x = self.graph.feature_matrix();
        let labels: Vec<f64> = train.iter().map(|&i| self.graph.node(i).volume).collect();
        let cfg = TabularConfig { seed: mix(self.seed, TABULAR_SALT), ..config.tabular.clone() };
        let model = train_tabular(kind, &select_rows(&x, &train), &labels, &cfg)?;
        let pred = model.predict(&x)?;
        self.score(&pred)
    }

    /// Test-set metrics of per-node predictions.
    pub fn score(&self, pred: &[f64]) -> Result<Metrics> {
        let test = self.split.test_vec();
        let truth: Vec<f64> = test.iter().map(|&i| self.graph.node(i).volume).collect();
        let got: Vec<f64> = test.iter().map(|&i| pred[i]).collect();
        Ok(compute_metrics(&truth, &got)?)
    }
}

/// Scores of one train set, keyed by model label.
type Scored = Vec<(String, Metrics)>;

/// One seed of the strategy comparison: every strategy at every budget, each
/// scored by the hybrid model and the configured feature-only models.
pub fn run_comparison_seed(config: &ExperimentConfig, graph: &NetworkGraph, seed: u64) -> Result<SeedResult> {
    config.validate()?;
    let setup = RunSetup::new(config, graph, seed)?;
    let max_budget = config.max_budget();
    let available = setup.candidate_count();
    if max_budget > available {
        return Err(AgentError::BudgetTooLarge { budget: max_budget, available }.into());
    }

    let mut placements = Vec::new();
    let mut episodes = Vec::new();
    // Heuristic rankings are nested, so smaller budgets take prefixes. Each
    // RL budget gets its own agent trained with that episode length.
    for &kind in &config.strategies {
        let ranked = setup.heuristic_placement(config, kind, max_budget)?;
        for &budget in &config.budgets {
            placements.push(PlacementRecord {
                strategy: kind.as_str().to_string(),
                seed,
                budget,
                nodes: ranked[..budget].to_vec(),
            });
        }
    }
    for &kind in &config.rl_variants {
        let label = rl_label(kind);
        for &budget in &config.budgets {
            let (nodes, trace) = setup.rl_placement(config, kind, Architecture::Hybrid, budget, &label)?;
            placements.push(PlacementRecord { strategy: label.clone(), seed, budget, nodes });
            episodes.extend(trace);
        }
    }

    let mut cache: BTreeMap<BTreeSet<usize>, Scored> = BTreeMap::new();
    let mut cells = Vec::new();
    for record in &placements {
        let key: BTreeSet<usize> = record.nodes.iter().copied().collect();
        if !cache.contains_key(&key) {
            let added = &record.nodes;
            let mut scored = Vec::from([(HYBRID_MODEL.to_string(), setup.evaluate(config, Architecture::Hybrid, added)?)]);
            for &kind in &config.tabular_models {
                scored.push((tabular_label(kind).to_string(), setup.evaluate_tabular(config, kind, added)?));
            }
            cache.insert(key.clone(), scored);
        }
        for (model, metrics) in &cache[&key] {
            cells.push(CellResult {
                strategy: record.strategy.clone(),
                model: model.clone(),
                budget: record.budget,
                seed,
                metrics: *metrics,
            });
        }
    }
    Ok(SeedResult {
        seed,
        node_count: graph.node_count(),
        base_sensors: setup.partition.existing().iter().copied().collect(),
        val_nodes: setup.split.val.len(),
        test_nodes: setup.split.test.len(),
        cells,
        placements,
        episodes,
    })
}

/// One seed of the ablation at `config.ablation_budget`, arms in
/// [`ABLATION_ARMS`] order: hybrid with curiosity-driven placement, hybrid
/// with random placement, and the two single-mechanism models each with their
/// own curiosity-driven placement.
pub fn run_ablation_seed(config: &ExperimentConfig, graph: &NetworkGraph, seed: u64) -> Result<SeedResult> {
    config.validate()?;
    let setup = RunSetup::new(config, graph, seed)?;
    let budget = config.ablation_budget;
    let available = setup.candidate_count();
    if budget > available {
        return Err(AgentError::BudgetTooLarge { budget, available }.into());
    }
    let mut cells = Vec::new();
    let mut placements = Vec::new();
    let mut episodes = Vec::new();
    for arm in ABLATION_ARMS {
        let architecture = match arm {
            "gcn-only" => Architecture::GcnOnly,
            "gat-only" => Architecture::GatOnly,
            _ => Architecture::Hybrid,
        };
        let nodes = if arm == "no-rl" {
            setup.heuristic_placement(config, StrategyKind::Random, budget)?
        } else {
            let (nodes, trace) = setup.rl_placement(config, ExplorationKind::Curiosity, architecture, budget, arm)?;
            episodes.extend(trace);
            nodes
        };
        let metrics = setup.evaluate(config, architecture, &nodes)?;
        cells.push(CellResult { strategy: arm.to_string(), model: architecture_label(architecture).to_string(), budget, seed, metrics });
        placements.push(PlacementRecord { strategy: arm.to_string(), seed, budget, nodes });
    }
    Ok(SeedResult {
        seed,
        node_count: graph.node_count(),
        base_sensors: setup.partition.existing().iter().copied().collect(),
        val_nodes: setup.split.val.len(),
        test_nodes: setup.split.test.len(),
        cells,
        placements,
        episodes,
    })
}

pub fn architecture_label(architecture: Architecture) -> &'static str {
    match architecture {
        Architecture::Hybrid => HYBRID_MODEL,
        Architecture::GcnOnly => "gcn_only",
        Architecture::GatOnly => "gat_only",
    }
}

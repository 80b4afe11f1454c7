//! `roadsense` command line. Exit codes: 0 success, 1 invalid input,
//! 2 failure while running.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use roadsense_core::agent::ExplorationKind;
use roadsense_core::baselines::{betweenness, closeness, StrategyKind};
use roadsense_core::coverage::coverage_report;
use roadsense_core::experiment::{rl_label, ExperimentConfig, GraphSource, MetricsReport, RunSetup, SCHEMA_VERSION};
use roadsense_core::model::{predict_in, Architecture};
use serde::Serialize;

use crate::harness::{graph_for_seed, merge_reports, run_ablation, run_comparison, HarnessError, LoadedConfig};
use crate::io::{read_json, save_graph, save_scores, IoError};
use crate::report::{coverage_csv, render_table, write_report, RunRecorder};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "roadsense", version, about = "Volume estimation and sensor placement experiments on road networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic network as node/edge CSV plus a config that reads it.
    Generate(Common),
    /// Train the hybrid model on the original sensors and save a checkpoint.
    Train(Common),
    /// Place sensors with one strategy.
    Place {
        #[command(flatten)]
        common: Common,
        /// random, betweenness, closeness, observed_activity or rl_{standard,adaptive_epsilon,curiosity}.
        #[arg(long, default_value = "rl_curiosity")]
        strategy: String,
    },
    /// Compare every strategy at every budget over all seeds.
    Compare(Common),
    /// Run the four ablation arms at one budget.
    Ablate(Common),
    /// Sensors per road class before and after placement.
    Coverage {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "rl_curiosity")]
        strategy: String,
    },
    /// Merge report files and print the summary table.
    Report {
        /// report.json files to merge.
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON or TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run this single budget instead of the configured list.
    #[arg(long)]
    budget: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<LoadedConfig, HarnessError> {
        let mut loaded = match &self.config {
            Some(path) => LoadedConfig::from_file(path)?,
            None => LoadedConfig::from_config(ExperimentConfig::default()),
        };
        let cfg = &mut loaded.config;
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(budget) = self.budget {
            cfg.budgets = vec![budget];
            cfg.ablation_budget = budget;
        }
        if let Some(out) = &self.out {
            let abs = std::env::current_dir().map(|d| d.join(out)).unwrap_or_else(|_| out.clone());
            cfg.output_dir = abs.to_string_lossy().into_owned();
        }
        cfg.validate()?;
        Ok(loaded)
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_INVALID
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Generate(c) => generate(&c.load()?),
        Command::Train(c) => train(&c.load()?),
        Command::Place { common, strategy } => place(&common.load()?, &strategy),
        Command::Compare(c) => experiment(&c.load()?, "compare"),
        Command::Ablate(c) => experiment(&c.load()?, "ablate"),
        Command::Coverage { common, strategy } => coverage(&common.load()?, &strategy),
        Command::Report { inputs, out } => report(&inputs, out.as_deref()),
    }
}

fn first_seed(loaded: &LoadedConfig) -> u64 {
    loaded.config.seeds[0]
}

fn recorder(loaded: &LoadedConfig, command: &str) -> RunRecorder {
    RunRecorder::new(command, &loaded.fingerprint(), loaded.config.seeds.clone(), &loaded.output_dir())
}

fn generate(loaded: &LoadedConfig) -> Result<(), HarnessError> {
    if !matches!(loaded.config.graph, GraphSource::Synthetic(_)) {
        return Err(HarnessError::InvalidConfig("generate needs a synthetic graph source".into()));
    }
    let graph = graph_for_seed(loaded, first_seed(loaded))?;
    let mut rec = recorder(loaded, "generate");
    let dir = rec.out_dir().to_path_buf();
    save_graph(&graph, &dir.join("nodes.csv"), &dir.join("edges.csv"))?;
    let emitted = ExperimentConfig {
        graph: GraphSource::Files { nodes: "nodes.csv".into(), edges: "edges.csv".into() },
        output_dir: ".".into(),
        ..loaded.config.clone()
    };
    rec.json("config.json", &emitted)?;
    rec.finish()?;
    println!("wrote {} nodes and {} edges to {}", graph.node_count(), graph.edge_count(), dir.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainingRecord<'a> {
    schema_version: u32,
    seed: u64,
    training: &'a roadsense_core::model::TrainReport,
    test: roadsense_core::metrics::Metrics,
}

fn train(loaded: &LoadedConfig) -> Result<(), HarnessError> {
    let seed = first_seed(loaded);
    let graph = graph_for_seed(loaded, seed)?;
    let setup = RunSetup::new(&loaded.config, &graph, seed)?;
    let (params, report) = setup.pretrain(&loaded.config.model, loaded.config.model.architecture)?;
    let pred = predict_in(&params, &setup.ctx).map_err(roadsense_core::experiment::ExperimentError::from)?;
    let test = setup.score(&pred)?;
    let mut rec = recorder(loaded, "train");
    rec.json("model.json", &params.to_checkpoint())?;
    rec.json("training.json", &TrainingRecord { schema_version: SCHEMA_VERSION, seed, training: &report, test })?;
    rec.finish()?;
    println!("seed {seed}: best val mse {:.3} at epoch {}, test mse {:.3}", report.best_val_mse, report.best_epoch, test.mse);
    Ok(())
}

enum Chosen {
    Heuristic(StrategyKind),
    Learned(ExplorationKind),
}

fn parse_strategy(name: &str) -> Result<Chosen, HarnessError> {
    if let Some(k) = StrategyKind::HEURISTICS.into_iter().find(|k| k.as_str() == name) {
        return Ok(Chosen::Heuristic(k));
    }
    if let Some(k) = ExplorationKind::ALL.into_iter().find(|k| rl_label(*k) == name) {
        return Ok(Chosen::Learned(k));
    }
    Err(HarnessError::InvalidConfig(format!("unknown strategy {name:?}")))
}

fn placement(setup: &RunSetup, cfg: &ExperimentConfig, chosen: &Chosen, budget: usize, label: &str) -> Result<Vec<usize>, HarnessError> {
    Ok(match chosen {
        Chosen::Heuristic(k) => setup.heuristic_placement(cfg, *k, budget)?,
        Chosen::Learned(k) => setup.rl_placement(cfg, *k, Architecture::Hybrid, budget, label)?.0,
    })
}

#[derive(Serialize)]
struct PlacementFile<'a> {
    schema_version: u32,
    strategy: &'a str,
    seed: u64,
    budget: usize,
    nodes: Vec<usize>,
}

fn place(loaded: &LoadedConfig, strategy: &str) -> Result<(), HarnessError> {
    let chosen = parse_strategy(strategy)?;
    let (cfg, seed) = (&loaded.config, first_seed(loaded));
    let budget = cfg.max_budget();
    let graph = graph_for_seed(loaded, seed)?;
    let setup = RunSetup::new(cfg, &graph, seed)?;
    let nodes = placement(&setup, cfg, &chosen, budget, strategy)?;
    let mut rec = recorder(loaded, "place");
    match chosen {
        Chosen::Heuristic(StrategyKind::Betweenness) => save_scores(&betweenness(&graph).scores, &rec.out_dir().join("scores.csv"))?,
        Chosen::Heuristic(StrategyKind::Closeness) => save_scores(&closeness(&graph).scores, &rec.out_dir().join("scores.csv"))?,
        _ => {}
    }
    println!("{strategy} seed {seed} budget {budget}: {nodes:?}");
    rec.json("placement.json", &PlacementFile { schema_version: SCHEMA_VERSION, strategy, seed, budget, nodes })?;
    rec.finish()?;
    Ok(())
}

fn experiment(loaded: &LoadedConfig, command: &str) -> Result<(), HarnessError> {
    let (report, errors) = if command == "ablate" { run_ablation(loaded)? } else { run_comparison(loaded)? };
    let mut rec = recorder(loaded, command);
    write_report(&mut rec, &report)?;
    let failed = errors.len();
    for (seed, e) in errors {
        eprintln!("seed {seed}: {e}");
        rec.error(format!("seed {seed}: {e}"));
    }
    rec.finish()?;
    print!("{}", render_table(&report));
    if failed > 0 {
        return Err(HarnessError::SeedsFailed { failed, total: loaded.config.seeds.len() });
    }
    Ok(())
}

#[derive(Serialize)]
struct CoverageFile<'a> {
    schema_version: u32,
    strategy: &'a str,
    seed: u64,
    report: roadsense_core::coverage::CoverageReport,
}

fn coverage(loaded: &LoadedConfig, strategy: &str) -> Result<(), HarnessError> {
    let chosen = parse_strategy(strategy)?;
    let (cfg, seed) = (&loaded.config, first_seed(loaded));
    let graph = graph_for_seed(loaded, seed)?;
    let setup = RunSetup::new(cfg, &graph, seed)?;
    let nodes = placement(&setup, cfg, &chosen, cfg.max_budget(), strategy)?;
    let after = cfg
        .budgets
        .iter()
        .map(|&b| setup.partition.with_added(&nodes[..b]))
        .collect::<Result<Vec<_>, _>>()
        .map_err(roadsense_core::experiment::ExperimentError::from)?;
    let report = coverage_report(&graph, &setup.partition, &after, &cfg.budgets)
        .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let mut rec = recorder(loaded, "coverage");
    let csv = coverage_csv(&report);
    rec.text("coverage.csv", &csv)?;
    rec.json("coverage.json", &CoverageFile { schema_version: SCHEMA_VERSION, strategy, seed, report })?;
    rec.finish()?;
    print!("{csv}");
    Ok(())
}

fn report(inputs: &[PathBuf], out: Option<&Path>) -> Result<(), HarnessError> {
    let reports = inputs.iter().map(|p| read_json::<MetricsReport>(p)).collect::<Result<Vec<_>, IoError>>()?;
    let merged = merge_reports(reports)?;
    if let Some(dir) = out {
        let raw = inputs.iter().map(|p| p.to_string_lossy().into_owned()).collect::<Vec<_>>().join("\n");
        let mut rec = RunRecorder::new("report", raw.as_bytes(), merged.seeds.clone(), dir);
        write_report(&mut rec, &merged)?;
        rec.finish()?;
    }
    print!("{}", render_table(&merged));
    Ok(())
}

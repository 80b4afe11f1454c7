use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::centrality::{betweenness, closeness};
use super::BaselineError;
use crate::graph::NetworkGraph;
use crate::math;
use crate::partition::SensorPartition;
use crate::rng::{seeded, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    Betweenness,
    Closeness,
    ObservedActivity,
    /// Placement by a trained agent; see the `agent` module.
    RlGreedy,
}

impl StrategyKind {
    pub const HEURISTICS: [StrategyKind; 4] =
        [StrategyKind::Random, StrategyKind::Betweenness, StrategyKind::Closeness, StrategyKind::ObservedActivity];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Betweenness => "betweenness",
            StrategyKind::Closeness => "closeness",
            StrategyKind::ObservedActivity => "observed_activity",
            StrategyKind::RlGreedy => "rl_greedy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementStrategy {
    pub kind: StrategyKind,
    pub seed: u64,
}

/// Top-`budget` unlabeled nodes by the strategy's score, ties to the lower id.
/// Random placement is a seeded shuffle, so a smaller budget always yields a
/// prefix of a larger one.
pub fn select_by_strategy(
    graph: &NetworkGraph,
    partition: &SensorPartition,
    strategy: PlacementStrategy,
    budget: usize,
    activity: Option<&[f64]>,
) -> Result<Vec<usize>, BaselineError> {
    select_excluding(graph, partition, strategy, budget, activity, &BTreeSet::new())
}

/// As [`select_by_strategy`], never choosing a node in `reserved`
/// (held-out evaluation nodes).
pub fn select_excluding(
    graph: &NetworkGraph,
    partition: &SensorPartition,
    strategy: PlacementStrategy,
    budget: usize,
    activity: Option<&[f64]>,
    reserved: &BTreeSet<usize>,
) -> Result<Vec<usize>, BaselineError> {
    let mut pool: Vec<usize> = partition.unlabeled().difference(reserved).copied().collect();
    if budget > pool.len() {
        return Err(BaselineError::BudgetTooLarge { budget, available: pool.len() });
    }
    let scores = match strategy.kind {
        StrategyKind::Random => {
            pool.shuffle(&mut seeded(strategy.seed, Stream::Strategy));
            pool.truncate(budget);
            return Ok(pool);
        }
        StrategyKind::Betweenness => betweenness(graph).scores,
        StrategyKind::Closeness => closeness(graph).scores,
        StrategyKind::ObservedActivity => {
            let a = activity.ok_or(BaselineError::MissingActivityVector)?;
            if a.len() != graph.node_count() {
                return Err(BaselineError::ActivityLength { expected: graph.node_count(), got: a.len() });
            }
            a.to_vec()
        }
        StrategyKind::RlGreedy => return Err(BaselineError::NotAHeuristic),
    };
    Ok(top_by_score(&pool, &scores, budget))
}

fn top_by_score(pool: &[usize], scores: &[f64], budget: usize) -> Vec<usize> {
    let mut ranked = pool.to_vec();
    ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ranked.truncate(budget);
    ranked
}

/// Biased activity proxy: each true volume times `exp(noise_sd · z)`.
pub fn activity_proxy(graph: &NetworkGraph, noise_sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed, Stream::Activity);
    let normal = Normal::new(0.0, noise_sd.max(0.0)).expect("finite sd");
    graph.volumes().into_iter().map(|y| y * math::exp(normal.sample(&mut rng))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::path_graph;
    use crate::synthetic::{generate_synthetic, SyntheticConfig};
    use proptest::prelude::*;

    fn strat(kind: StrategyKind) -> PlacementStrategy {
        PlacementStrategy { kind, seed: 5 }
    }

    #[test]
    fn random_is_seeded_and_nested() {
        let g = path_graph(30);
        let p = SensorPartition::from_existing(30, [0, 1]).unwrap();
        let a = select_by_strategy(&g, &p, strat(StrategyKind::Random), 10, None).unwrap();
        assert_eq!(a, select_by_strategy(&g, &p, strat(StrategyKind::Random), 10, None).unwrap());
        let b = select_by_strategy(&g, &p, strat(StrategyKind::Random), 4, None).unwrap();
        assert_eq!(&a[..4], b.as_slice());
    }

    #[test]
    fn true_activity_picks_busiest_unlabeled() {
        let g = generate_synthetic(&SyntheticConfig { n_nodes: 60, ..SyntheticConfig::default() }).unwrap();
        let p = SensorPartition::from_existing(60, [3, 9]).unwrap();
        let y = g.volumes();
        let got = select_by_strategy(&g, &p, strat(StrategyKind::ObservedActivity), 5, Some(&y)).unwrap();
        let mut order: Vec<usize> = (0..60).filter(|i| *i != 3 && *i != 9).collect();
        order.sort_by(|&a, &b| y[b].partial_cmp(&y[a]).unwrap());
        assert_eq!(got, order[..5].to_vec());
    }

    #[test]
    fn betweenness_on_path_picks_middle() {
        // The train set may not be empty, so one endpoint carries a sensor.
        let g = path_graph(3);
        let p = SensorPartition::from_existing(3, [0]).unwrap();
        assert_eq!(select_by_strategy(&g, &p, strat(StrategyKind::Betweenness), 1, None).unwrap(), vec![1]);
    }

    #[test]
    fn errors() {
        let g = path_graph(5);
        let p = SensorPartition::from_existing(5, [0, 1]).unwrap();
        assert_eq!(
            select_by_strategy(&g, &p, strat(StrategyKind::ObservedActivity), 1, None),
            Err(BaselineError::MissingActivityVector)
        );
        assert_eq!(
            select_by_strategy(&g, &p, strat(StrategyKind::Closeness), 4, None),
            Err(BaselineError::BudgetTooLarge { budget: 4, available: 3 })
        );
        assert_eq!(select_by_strategy(&g, &p, strat(StrategyKind::RlGreedy), 1, None), Err(BaselineError::NotAHeuristic));
    }

    #[test]
    fn reserved_nodes_are_skipped() {
        let g = path_graph(5);
        let p = SensorPartition::from_existing(5, [0]).unwrap();
        let reserved: BTreeSet<usize> = [2].into_iter().collect();
        let got = select_excluding(&g, &p, strat(StrategyKind::Betweenness), 2, None, &reserved).unwrap();
        assert_eq!(got, vec![1, 3]);
    }

    proptest! {
        #[test]
        fn never_labeled_never_duplicated(seed in 0u64..500, frac in 0.05f64..0.8, budget_frac in 0.0f64..1.0) {
            let g = generate_synthetic(&SyntheticConfig { n_nodes: 25, seed, ..SyntheticConfig::default() }).unwrap();
            let p = crate::partition::make_partition(&g, frac, seed).unwrap();
            let k = (budget_frac * p.unlabeled().len() as f64) as usize;
            let activity = activity_proxy(&g, 0.5, seed);
            for kind in StrategyKind::HEURISTICS {
                let got = select_by_strategy(&g, &p, PlacementStrategy { kind, seed }, k, Some(&activity)).unwrap();
                prop_assert_eq!(got.len(), k);
                let set: BTreeSet<usize> = got.iter().copied().collect();
                prop_assert_eq!(set.len(), k);
                prop_assert!(got.iter().all(|i| !p.is_labeled(*i)));
            }
        }
    }
}

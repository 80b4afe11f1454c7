//! Sensor partitions (which segments carry counters) and evaluation splits.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::graph::NetworkGraph;
use crate::math;
use crate::rng::{seeded, Stream};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PartitionError {
    #[error("existing-sensor fraction {0} must lie in (0, 1] and select at least one node")]
    InvalidFraction(f64),
    #[error("node {0} is not a valid id")]
    UnknownNode(usize),
    #[error("node {0} already carries a sensor")]
    AlreadyLabeled(usize),
    #[error("sensor sets overlap or do not cover the graph")]
    Inconsistent,
    #[error("the train set is empty")]
    EmptyTrainSet,
    #[error("too few unlabeled nodes ({0}) to draw validation and test sets")]
    TooFewUnlabeled(usize),
    #[error("split fractions {0} + {1} must be non-negative and sum below 1")]
    InvalidSplitFractions(f64, f64),
}

/// Disjoint cover of the node set: original sensors, added sensors, rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorPartition {
    existing: BTreeSet<usize>,
    new: BTreeSet<usize>,
    unlabeled: BTreeSet<usize>,
}

impl SensorPartition {
    /// Partition with the given original sensors and nothing added.
    pub fn from_existing(n: usize, existing: impl IntoIterator<Item = usize>) -> Result<Self, PartitionError> {
        let existing: BTreeSet<usize> = existing.into_iter().collect();
        if let Some(&bad) = existing.iter().find(|&&i| i >= n) {
            return Err(PartitionError::UnknownNode(bad));
        }
        if existing.is_empty() {
            return Err(PartitionError::EmptyTrainSet);
        }
        let unlabeled = (0..n).filter(|i| !existing.contains(i)).collect();
        Ok(Self { existing, new: BTreeSet::new(), unlabeled })
    }

    pub fn from_sets(
        n: usize,
        existing: BTreeSet<usize>,
        new: BTreeSet<usize>,
        unlabeled: BTreeSet<usize>,
    ) -> Result<Self, PartitionError> {
        let p = Self { existing, new, unlabeled };
        p.validate(n)?;
        Ok(p)
    }

    pub fn validate(&self, n: usize) -> Result<(), PartitionError> {
        let total = self.existing.len() + self.new.len() + self.unlabeled.len();
        let union: BTreeSet<usize> =
            self.existing.iter().chain(&self.new).chain(&self.unlabeled).copied().collect();
        if total != n || union.len() != n || union.iter().next_back().is_some_and(|&m| m >= n) {
            return Err(PartitionError::Inconsistent);
        }
        if self.existing.is_empty() && self.new.is_empty() {
            return Err(PartitionError::EmptyTrainSet);
        }
        Ok(())
    }

    pub fn existing(&self) -> &BTreeSet<usize> {
        &self.existing
    }

    pub fn new_sensors(&self) -> &BTreeSet<usize> {
        &self.new
    }

    pub fn unlabeled(&self) -> &BTreeSet<usize> {
        &self.unlabeled
    }

    pub fn node_count(&self) -> usize {
        self.existing.len() + self.new.len() + self.unlabeled.len()
    }

    /// `existing ∪ new`.
    pub fn train(&self) -> BTreeSet<usize> {
        self.existing.union(&self.new).copied().collect()
    }

    pub fn is_labeled(&self, node: usize) -> bool {
        self.existing.contains(&node) || self.new.contains(&node)
    }

    /// Moves `node` from unlabeled to the added-sensor set.
    pub fn add_sensor(&mut self, node: usize) -> Result<(), PartitionError> {
        if self.is_labeled(node) {
            return Err(PartitionError::AlreadyLabeled(node));
        }
        if !self.unlabeled.remove(&node) {
            return Err(PartitionError::UnknownNode(node));
        }
        self.new.insert(node);
        Ok(())
    }

    /// The same original sensors with `added` placed on top.
    pub fn with_added(&self, added: &[usize]) -> Result<Self, PartitionError> {
        let mut p = self.clone();
        for &a in added {
            p.add_sensor(a)?;
        }
        Ok(p)
    }

    /// Drops every added sensor.
    pub fn reset(&self) -> Self {
        let mut p = self.clone();
        p.unlabeled.extend(p.new.iter().copied());
        p.new.clear();
        p
    }
}

/// Uniformly samples `round(fraction * N)` original sensors.
pub fn make_partition(graph: &NetworkGraph, existing_fraction: f64, seed: u64) -> Result<SensorPartition, PartitionError> {
    let n = graph.node_count();
    if !(existing_fraction > 0.0 && existing_fraction <= 1.0) {
        return Err(PartitionError::InvalidFraction(existing_fraction));
    }
    let count = math::round(existing_fraction * n as f64) as usize;
    if count == 0 {
        return Err(PartitionError::InvalidFraction(existing_fraction));
    }
    partition_with_count(graph, count.min(n), seed)
}

/// Uniformly samples exactly `count` original sensors.
pub fn partition_with_count(graph: &NetworkGraph, count: usize, seed: u64) -> Result<SensorPartition, PartitionError> {
    let n = graph.node_count();
    if count == 0 || count > n {
        return Err(PartitionError::InvalidFraction(count as f64 / n as f64));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut seeded(seed, Stream::Partition));
    SensorPartition::from_existing(n, ids.into_iter().take(count))
}

/// Fraction of nodes without a sensor.
pub fn sparsity(partition: &SensorPartition) -> f64 {
    partition.unlabeled.len() as f64 / partition.node_count() as f64
}

/// Training nodes plus held-out validation and test nodes drawn from the
/// unlabeled set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: BTreeSet<usize>,
    pub val: BTreeSet<usize>,
    pub test: BTreeSet<usize>,
}

impl SplitAssignment {
    pub fn is_disjoint(&self) -> bool {
        self.train.is_disjoint(&self.val) && self.train.is_disjoint(&self.test) && self.val.is_disjoint(&self.test)
    }

    /// Nodes reserved for evaluation; placement never targets these.
    pub fn held_out(&self) -> BTreeSet<usize> {
        self.val.union(&self.test).copied().collect()
    }

    /// Same held-out sets, train replaced by the partition's current train set.
    pub fn with_train_from(&self, partition: &SensorPartition) -> Self {
        Self { train: partition.train(), val: self.val.clone(), test: self.test.clone() }
    }

    pub fn train_vec(&self) -> Vec<usize> {
        self.train.iter().copied().collect()
    }

    pub fn val_vec(&self) -> Vec<usize> {
        self.val.iter().copied().collect()
    }

    pub fn test_vec(&self) -> Vec<usize> {
        self.test.iter().copied().collect()
    }
}

/// Draws disjoint validation and test sets of `floor(frac * |unlabeled|)`
/// nodes each; `train` is the partition's labeled set.
pub fn make_splits(
    partition: &SensorPartition,
    val_frac: f64,
    test_frac: f64,
    seed: u64,
) -> Result<SplitAssignment, PartitionError> {
    if !(val_frac >= 0.0 && test_frac >= 0.0 && val_frac + test_frac < 1.0) {
        return Err(PartitionError::InvalidSplitFractions(val_frac, test_frac));
    }
    let pool: Vec<usize> = partition.unlabeled.iter().copied().collect();
    let val_n = math::floor(val_frac * pool.len() as f64) as usize;
    let test_n = math::floor(test_frac * pool.len() as f64) as usize;
    if pool.len() < 2 || val_n == 0 || test_n == 0 {
        return Err(PartitionError::TooFewUnlabeled(pool.len()));
    }
    let mut shuffled = pool;
    shuffled.shuffle(&mut seeded(seed, Stream::Split));
    let val = shuffled[..val_n].iter().copied().collect();
    let test = shuffled[val_n..val_n + test_n].iter().copied().collect();
    Ok(SplitAssignment { train: partition.train(), val, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::path_graph;

    #[test]
    fn full_fraction_leaves_nothing_unlabeled() {
        let g = path_graph(10);
        let p = make_partition(&g, 1.0, 3).unwrap();
        assert!(p.unlabeled().is_empty());
        assert_eq!(sparsity(&p), 0.0);
    }

    #[test]
    fn partition_is_deterministic() {
        let g = path_graph(50);
        assert_eq!(make_partition(&g, 0.2, 9).unwrap(), make_partition(&g, 0.2, 9).unwrap());
        assert_ne!(make_partition(&g, 0.2, 9).unwrap(), make_partition(&g, 0.2, 10).unwrap());
    }

    #[test]
    fn invalid_fractions_rejected() {
        let g = path_graph(10);
        for f in [0.0, -0.1, 1.5, f64::NAN, 0.01] {
            assert!(matches!(make_partition(&g, f, 0), Err(PartitionError::InvalidFraction(_))), "{f}");
        }
    }

    #[test]
    fn melbourne_scale_sparsity() {
        let p = SensorPartition::from_existing(15_933, 0..141).unwrap();
        assert_eq!(p.unlabeled().len(), 15_792);
        assert!((sparsity(&p) - 15_792.0 / 15_933.0).abs() < 1e-15);
        assert!((sparsity(&p) - 0.99115).abs() < 1e-5);
    }

    #[test]
    fn melbourne_scale_split_sizes() {
        let p = SensorPartition::from_existing(15_933, 0..141).unwrap();
        let s = make_splits(&p, 0.15, 0.15, 1).unwrap();
        assert_eq!(s.val.len(), 2368);
        assert_eq!(s.test.len(), 2368);
        assert!(s.is_disjoint());
    }

    #[test]
    fn too_few_unlabeled() {
        let p = SensorPartition::from_existing(3, [0]).unwrap();
        assert_eq!(make_splits(&p, 0.15, 0.15, 0), Err(PartitionError::TooFewUnlabeled(2)));
    }

    #[test]
    fn added_node_moves_into_train() {
        let mut p = SensorPartition::from_existing(100, 0..10).unwrap();
        let before = make_splits(&p, 0.15, 0.15, 4).unwrap();
        let a = *before.val.iter().next().unwrap();
        p.add_sensor(a).unwrap();
        let after = make_splits(&p, 0.15, 0.15, 4).unwrap();
        assert!(after.train.contains(&a));
        assert!(!after.val.contains(&a) && !after.test.contains(&a));
        assert!(after.is_disjoint());
        assert_eq!(p.add_sensor(a), Err(PartitionError::AlreadyLabeled(a)));
    }

    #[test]
    fn reset_restores_existing_only() {
        let p = SensorPartition::from_existing(20, [1, 2]).unwrap();
        let q = p.with_added(&[5, 7]).unwrap();
        assert_eq!(q.train().len(), 4);
        assert_eq!(q.reset(), p);
    }
}

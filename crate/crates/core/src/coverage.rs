//! Sensor counts by road class, before and after placement.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::{NetworkGraph, RoadClass};
use crate::partition::SensorPartition;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoverageError {
    #[error("partition covers {partition} nodes but the graph has {graph}")]
    GraphMismatch { graph: usize, partition: usize },
    #[error("{budgets} budgets but {partitions} placed partitions")]
    BudgetCount { budgets: usize, partitions: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub road_class: RoadClass,
    pub segments: usize,
    pub sensors_before: usize,
    /// One entry per budget, in the report's budget order.
    pub sensors_after: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub budgets: Vec<usize>,
    /// One row per road class, in [`RoadClass::ALL`] order.
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    pub fn total_before(&self) -> usize {
        self.rows.iter().map(|r| r.sensors_before).sum()
    }

    pub fn total_after(&self, budget_index: usize) -> usize {
        self.rows.iter().map(|r| r.sensors_after[budget_index]).sum()
    }

    pub fn row(&self, class: RoadClass) -> &CoverageRow {
        &self.rows[class.index()]
    }
}

fn class_counts(graph: &NetworkGraph, nodes: impl Iterator<Item = usize>) -> [usize; 6] {
    let mut counts = [0; 6];
    for i in nodes {
        counts[graph.node(i).road_class.index()] += 1;
    }
    counts
}

fn check(graph: &NetworkGraph, partition: &SensorPartition) -> Result<(), CoverageError> {
    let n = graph.node_count();
    if partition.node_count() != n || partition.validate(n).is_err() {
        return Err(CoverageError::GraphMismatch { graph: n, partition: partition.node_count() });
    }
    Ok(())
}

/// Labeled nodes (existing plus added) by class for `before` and for each
/// `after[i]`, the partition reached with `budgets[i]` placements.
pub fn coverage_report(
    graph: &NetworkGraph,
    before: &SensorPartition,
    after: &[SensorPartition],
    budgets: &[usize],
) -> Result<CoverageReport, CoverageError> {
    if after.len() != budgets.len() {
        return Err(CoverageError::BudgetCount { budgets: budgets.len(), partitions: after.len() });
    }
    check(graph, before)?;
    for p in after {
        check(graph, p)?;
    }
    let segments = class_counts(graph, 0..graph.node_count());
    let sensors_before = class_counts(graph, before.train().into_iter());
    let sensors_after: Vec<[usize; 6]> = after.iter().map(|p| class_counts(graph, p.train().into_iter())).collect();
    let rows = RoadClass::ALL
        .iter()
        .map(|&c| {
            let k = c.index();
            CoverageRow {
                road_class: c,
                segments: segments[k],
                sensors_before: sensors_before[k],
                sensors_after: sensors_after.iter().map(|a| a[k]).collect(),
            }
        })
        .collect();
    Ok(CoverageReport { budgets: budgets.to_vec(), rows })
}

/// Node classes of a network shaped like the Melbourne counter census: 141
/// counters of which 67 sit on protected bike lanes, 10 on mixed arterials
/// and 1 on a local street. The remaining 63 counters are spread over the
/// other classes. Counters occupy ids `0..141`; `extra` unmonitored segments
/// follow, cycling through all classes.
pub fn melbourne_counter_classes(extra: usize) -> Vec<RoadClass> {
    let mut classes = vec![RoadClass::ProtectedBikeLane; 67];
    classes.extend([RoadClass::ArterialMixed; 10]);
    classes.push(RoadClass::LocalMixed);
    classes.extend([RoadClass::PaintedLaneArterialCollector; 40]);
    classes.extend([RoadClass::OffRoadPath; 20]);
    classes.extend([RoadClass::Other; 3]);
    classes.extend((0..extra).map(|i| RoadClass::ALL[i % 6]));
    classes
}

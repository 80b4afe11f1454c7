//! Road networks as undirected graphs whose nodes are road segments.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("duplicate node id {0}")]
    DuplicateNodeId(usize),
    #[error("node ids must be 0..N-1; id {0} is out of range")]
    NonContiguousIds(usize),
    #[error("edge ({0}, {1}) references a node that does not exist")]
    DanglingEdgeEndpoint(usize, usize),
    #[error("edge ({0}, {1}) appears more than once")]
    DuplicateEdge(usize, usize),
    #[error("edge ({0}, {0}) joins a node to itself")]
    SelfLoop(usize),
    #[error("node {node} has {got} features, expected {expected}")]
    FeatureWidth { node: usize, expected: usize, got: usize },
    #[error("edge ({u}, {v}) has {got} attributes, expected {expected}")]
    EdgeAttrWidth { u: usize, v: usize, expected: usize, got: usize },
    #[error("node {0} has a negative or non-finite volume")]
    InvalidVolume(usize),
    #[error("node {0} has a non-finite feature")]
    NonFiniteFeature(usize),
    #[error("unknown road class {0:?}")]
    UnknownRoadClass(String),
}

/// Infrastructure category of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadClass {
    ProtectedBikeLane,
    PaintedLaneArterialCollector,
    OffRoadPath,
    LocalMixed,
    ArterialMixed,
    Other,
}

impl RoadClass {
    pub const ALL: [RoadClass; 6] = [
        RoadClass::ProtectedBikeLane,
        RoadClass::PaintedLaneArterialCollector,
        RoadClass::OffRoadPath,
        RoadClass::LocalMixed,
        RoadClass::ArterialMixed,
        RoadClass::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RoadClass::ProtectedBikeLane => "protected_bike_lane",
            RoadClass::PaintedLaneArterialCollector => "painted_lane_arterial_collector",
            RoadClass::OffRoadPath => "off_road_path",
            RoadClass::LocalMixed => "local_mixed",
            RoadClass::ArterialMixed => "arterial_mixed",
            RoadClass::Other => "other",
        }
    }
}

impl fmt::Display for RoadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoadClass {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoadClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| GraphError::UnknownRoadClass(s.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNode {
    pub id: usize,
    pub road_class: RoadClass,
    /// Ground-truth daily volume.
    pub volume: f64,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadEdge {
    pub u: usize,
    pub v: usize,
    pub attrs: Vec<f64>,
}

impl RoadEdge {
    /// Endpoints ordered `(min, max)`.
    pub fn key(&self) -> (usize, usize) {
        if self.u <= self.v {
            (self.u, self.v)
        } else {
            (self.v, self.u)
        }
    }
}

#[derive(Deserialize)]
struct RawGraph {
    nodes: Vec<RoadNode>,
    edges: Vec<RoadEdge>,
    #[serde(default)]
    feature_dim: Option<usize>,
    #[serde(default)]
    edge_dim: Option<usize>,
}

/// A validated road network. Construct with [`NetworkGraph::new`]; nodes are
/// stored in id order and adjacency is symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph")]
pub struct NetworkGraph {
    nodes: Vec<RoadNode>,
    edges: Vec<RoadEdge>,
    feature_dim: usize,
    edge_dim: usize,
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
}

impl TryFrom<RawGraph> for NetworkGraph {
    type Error = GraphError;

    fn try_from(raw: RawGraph) -> Result<Self, Self::Error> {
        NetworkGraph::with_dims(raw.nodes, raw.edges, raw.feature_dim, raw.edge_dim)
    }
}

impl NetworkGraph {
    /// Validates and builds a graph. Node order in `nodes` is irrelevant; ids
    /// must cover `0..N` exactly once.
    pub fn new(nodes: Vec<RoadNode>, edges: Vec<RoadEdge>) -> Result<Self, GraphError> {
        Self::with_dims(nodes, edges, None, None)
    }

    /// As [`NetworkGraph::new`], with explicit widths for graphs where they
    /// cannot be inferred (no nodes with features, no edges).
    pub fn with_dims(
        mut nodes: Vec<RoadNode>,
        edges: Vec<RoadEdge>,
        feature_dim: Option<usize>,
        edge_dim: Option<usize>,
    ) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        let n = nodes.len();
        let mut seen = vec![false; n];
        for node in &nodes {
            if node.id >= n {
                return Err(GraphError::NonContiguousIds(node.id));
            }
            if seen[node.id] {
                return Err(GraphError::DuplicateNodeId(node.id));
            }
            seen[node.id] = true;
        }
        nodes.sort_by_key(|node| node.id);

        let d = feature_dim.unwrap_or(nodes[0].features.len());
        for node in &nodes {
            if node.features.len() != d {
                return Err(GraphError::FeatureWidth { node: node.id, expected: d, got: node.features.len() });
            }
            if !(node.volume.is_finite() && node.volume >= 0.0) {
                return Err(GraphError::InvalidVolume(node.id));
            }
            if node.features.iter().any(|f| !f.is_finite()) {
                return Err(GraphError::NonFiniteFeature(node.id));
            }
        }

        let d_e = edge_dim.or_else(|| edges.first().map(|e| e.attrs.len())).unwrap_or(0);
        let mut keys = BTreeSet::new();
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            if e.u >= n || e.v >= n {
                return Err(GraphError::DanglingEdgeEndpoint(e.u, e.v));
            }
            if e.u == e.v {
                return Err(GraphError::SelfLoop(e.u));
            }
            if e.attrs.len() != d_e {
                return Err(GraphError::EdgeAttrWidth { u: e.u, v: e.v, expected: d_e, got: e.attrs.len() });
            }
            let key = e.key();
            if !keys.insert(key) {
                return Err(GraphError::DuplicateEdge(key.0, key.1));
            }
            adjacency[e.u].push(e.v);
            adjacency[e.v].push(e.u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self { nodes, edges, feature_dim: d, edge_dim: d_e, adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_dim
    }

    pub fn nodes(&self) -> &[RoadNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &RoadNode {
        &self.nodes[id]
    }

    pub fn edges(&self) -> &[RoadEdge] {
        &self.edges
    }

    pub fn neighbors(&self, id: usize) -> &[usize] {
        &self.adjacency[id]
    }

    pub fn degree(&self, id: usize) -> usize {
        self.adjacency[id].len()
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.nodes.len() as f64
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.volume).collect()
    }

    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.u, e.v)).collect()
    }

    /// `N x d` node feature matrix.
    pub fn feature_matrix(&self) -> Tensor {
        let data = self.nodes.iter().flat_map(|n| n.features.iter().copied()).collect();
        Tensor::matrix(self.nodes.len(), self.feature_dim, data).expect("validated widths")
    }

    /// `|E| x d_e` edge attribute matrix, rows in edge-list order.
    pub fn edge_attr_matrix(&self) -> Tensor {
        let data = self.edges.iter().flat_map(|e| e.attrs.iter().copied()).collect();
        Tensor::matrix(self.edges.len(), self.edge_dim, data).expect("validated widths")
    }

    /// Connected component label per node (labels are the smallest member id).
    pub fn components(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut label = vec![usize::MAX; n];
        let mut stack = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = start;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for &v in &self.adjacency[u] {
                    if label[v] == usize::MAX {
                        label[v] = start;
                        stack.push(v);
                    }
                }
            }
        }
        label
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }

    /// Applies a node relabeling: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| RoadNode { id: perm[n.id], ..n.clone() })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|e| RoadEdge { u: perm[e.u], v: perm[e.v], attrs: e.attrs.clone() })
            .collect();
        Self::with_dims(nodes, edges, Some(self.feature_dim), Some(self.edge_dim))
    }
}

/// Sparse matrix in coordinate form, entries sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    /// `D^{-1/2} (A + I) D^{-1/2}` for an undirected edge list on `n` nodes.
    pub fn gcn_normalized(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut entries: Vec<(usize, usize)> = Vec::with_capacity(n + 2 * edges.len());
        let mut degree = vec![1.0; n];
        for i in 0..n {
            entries.push((i, i));
        }
        for &(u, v) in edges {
            entries.push((u, v));
            entries.push((v, u));
            degree[u] += 1.0;
            degree[v] += 1.0;
        }
        entries.sort_unstable();
        let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / math::sqrt(*d)).collect();
        let mut rows = Vec::with_capacity(entries.len());
        let mut cols = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (r, c) in entries {
            rows.push(r);
            cols.push(c);
            values.push(inv_sqrt[r] * inv_sqrt[c]);
        }
        Self { n, rows, cols, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.values) {
            out[r][c] += v;
        }
        out
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.values)
            .filter(|((&rr, &cc), _)| rr == r && cc == c)
            .map(|(_, v)| *v)
            .sum()
    }
}

/// Self-loop augmented, symmetrically normalized adjacency of `graph`.
pub fn normalized_adjacency(graph: &NetworkGraph) -> SparseMatrix {
    SparseMatrix::gcn_normalized(graph.node_count(), &graph.edge_pairs())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn node(id: usize, volume: f64, features: Vec<f64>) -> RoadNode {
        RoadNode { id, road_class: RoadClass::Other, volume, features }
    }

    pub(crate) fn path_graph(n: usize) -> NetworkGraph {
        let nodes = (0..n).map(|i| node(i, i as f64, vec![i as f64, 1.0])).collect();
        let edges = (1..n).map(|i| RoadEdge { u: i - 1, v: i, attrs: vec![0.5] }).collect();
        NetworkGraph::new(nodes, edges).unwrap()
    }

    #[test]
    fn rejects_dangling_endpoint() {
        let nodes = vec![node(0, 1.0, vec![]), node(1, 1.0, vec![])];
        let edges = vec![RoadEdge { u: 0, v: 99, attrs: vec![] }];
        assert_eq!(NetworkGraph::new(nodes, edges), Err(GraphError::DanglingEdgeEndpoint(0, 99)));
    }

    #[test]
    fn rejects_duplicate_unordered_edge() {
        let nodes = vec![node(0, 1.0, vec![]), node(1, 1.0, vec![])];
        let edges = vec![RoadEdge { u: 0, v: 1, attrs: vec![] }, RoadEdge { u: 1, v: 0, attrs: vec![] }];
        assert_eq!(NetworkGraph::new(nodes, edges), Err(GraphError::DuplicateEdge(0, 1)));
    }

    #[test]
    fn rejects_duplicate_and_gapped_ids() {
        let dup = vec![node(0, 1.0, vec![]), node(0, 1.0, vec![])];
        assert_eq!(NetworkGraph::new(dup, vec![]), Err(GraphError::DuplicateNodeId(0)));
        let gap = vec![node(0, 1.0, vec![]), node(2, 1.0, vec![])];
        assert_eq!(NetworkGraph::new(gap, vec![]), Err(GraphError::NonContiguousIds(2)));
        assert_eq!(NetworkGraph::new(vec![], vec![]), Err(GraphError::EmptyGraph));
    }

    #[test]
    fn rejects_negative_volume_and_ragged_features() {
        let neg = vec![node(0, -1.0, vec![])];
        assert_eq!(NetworkGraph::new(neg, vec![]), Err(GraphError::InvalidVolume(0)));
        let ragged = vec![node(0, 1.0, vec![1.0]), node(1, 1.0, vec![])];
        assert!(matches!(NetworkGraph::new(ragged, vec![]), Err(GraphError::FeatureWidth { .. })));
    }

    #[test]
    fn adjacency_is_symmetric() {
        let g = path_graph(5);
        for u in 0..5 {
            for &v in g.neighbors(u) {
                assert!(g.neighbors(v).contains(&u));
            }
        }
    }

    #[test]
    fn normalized_adjacency_single_node() {
        let g = NetworkGraph::new(vec![node(0, 0.0, vec![])], vec![]).unwrap();
        assert_eq!(normalized_adjacency(&g).to_dense(), vec![vec![1.0]]);
    }

    #[test]
    fn normalized_adjacency_two_nodes() {
        let g = path_graph(2);
        let a = normalized_adjacency(&g).to_dense();
        for row in &a {
            for v in row {
                assert!((v - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn road_class_names_round_trip() {
        for c in RoadClass::ALL {
            assert_eq!(c.as_str().parse::<RoadClass>().unwrap(), c);
        }
        assert!("highway".parse::<RoadClass>().is_err());
    }
}

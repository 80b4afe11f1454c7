//! Hop-count centralities on the segment graph.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::NetworkGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentralityKind {
    Betweenness,
    Closeness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityScores {
    pub kind: CentralityKind,
    pub scores: Vec<f64>,
}

/// Hop distances from `source`; `usize::MAX` when unreachable.
pub fn bfs_distances(graph: &NetworkGraph, source: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; graph.node_count()];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        for &w in graph.neighbors(v) {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Brandes' dependency accumulation, halved for the undirected graph and
/// left unnormalized.
pub fn betweenness(graph: &NetworkGraph) -> CentralityScores {
    let n = graph.node_count();
    let mut score = vec![0.0; n];
    let mut order = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        order.clear();
        for v in 0..n {
            preds[v].clear();
            sigma[v] = 0.0;
            dist[v] = usize::MAX;
            delta[v] = 0.0;
        }
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in graph.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = order.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                score[w] += delta[w];
            }
        }
    }
    score.iter_mut().for_each(|s| *s /= 2.0);
    CentralityScores { kind: CentralityKind::Betweenness, scores: score }
}

/// `(r−1)/Σd · (r−1)/(N−1)` where `r` counts nodes reachable from `v`
/// (itself included); zero when nothing else is reachable.
pub fn closeness(graph: &NetworkGraph) -> CentralityScores {
    let n = graph.node_count();
    let scores = (0..n)
        .map(|v| {
            let dist = bfs_distances(graph, v);
            let (reach, total) = dist
                .iter()
                .filter(|&&d| d != usize::MAX)
                .fold((0usize, 0usize), |(r, t), &d| (r + 1, t + d));
            if reach <= 1 || n <= 1 {
                0.0
            } else {
                let others = (reach - 1) as f64;
                others / total as f64 * (others / (n - 1) as f64)
            }
        })
        .collect();
    CentralityScores { kind: CentralityKind::Closeness, scores }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::{node, path_graph};
    use crate::graph::RoadEdge;
    use crate::rng::{seeded, Stream};
    use rand::Rng;

    fn graph_from(n: usize, pairs: &[(usize, usize)]) -> NetworkGraph {
        let nodes = (0..n).map(|i| node(i, 1.0, vec![0.0])).collect();
        let edges = pairs.iter().map(|&(u, v)| RoadEdge { u, v, attrs: vec![] }).collect();
        NetworkGraph::with_dims(nodes, edges, Some(1), Some(0)).unwrap()
    }

    fn random_graph(seed: u64) -> NetworkGraph {
        let mut rng = seeded(seed, Stream::Graph);
        let n = rng.random_range(2..=20);
        let p = rng.random_range(0.05..0.5);
        let mut pairs = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random::<f64>() < p {
                    pairs.push((u, v));
                }
            }
        }
        graph_from(n, &pairs)
    }

    /// Counts shortest paths by enumerating them one extension at a time.
    fn brute_betweenness(g: &NetworkGraph) -> Vec<f64> {
        let n = g.node_count();
        let dist: Vec<Vec<usize>> = (0..n).map(|s| bfs_distances(g, s)).collect();
        let mut score = vec![0.0; n];
        for s in 0..n {
            for t in s + 1..n {
                if dist[s][t] == usize::MAX {
                    continue;
                }
                let mut paths: Vec<Vec<usize>> = vec![vec![s]];
                for _ in 0..dist[s][t] {
                    paths = paths
                        .into_iter()
                        .flat_map(|p| {
                            let last = *p.last().unwrap();
                            g.neighbors(last)
                                .iter()
                                .filter(|&&w| dist[s][w] == dist[s][last] + 1 && dist[w][t] < usize::MAX && dist[s][w] + dist[w][t] == dist[s][t])
                                .map(|&w| {
                                    let mut q = p.clone();
                                    q.push(w);
                                    q
                                })
                                .collect::<Vec<_>>()
                        })
                        .collect();
                }
                let total = paths.len() as f64;
                for p in &paths {
                    for &v in &p[1..p.len() - 1] {
                        score[v] += 1.0 / total;
                    }
                }
            }
        }
        score
    }

    #[test]
    fn path_of_three() {
        let b = betweenness(&path_graph(3)).scores;
        assert_eq!(b, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn complete_graph_has_no_intermediaries() {
        let k4 = graph_from(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert!(betweenness(&k4).scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn brandes_matches_enumeration() {
        for seed in 0..50 {
            let g = random_graph(seed);
            let fast = betweenness(&g).scores;
            let slow = brute_betweenness(&g);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-9, "seed {seed}: {fast:?} vs {slow:?}");
            }
        }
    }

    #[test]
    fn star_closeness() {
        let star = graph_from(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let c = closeness(&star).scores;
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert!((c[1] - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_node_closeness_is_zero() {
        let g = graph_from(3, &[(0, 1)]);
        let c = closeness(&g).scores;
        assert_eq!(c[2], 0.0);
        // Component of two out of three nodes: 1/1 * 1/2.
        assert!((c[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn closeness_is_a_fraction() {
        for seed in 0..30 {
            let c = closeness(&random_graph(seed)).scores;
            assert!(c.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}

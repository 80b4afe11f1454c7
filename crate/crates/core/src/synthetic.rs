//! Planted-signal road networks.
//!
//! Segments are points in the unit square joined to nearby segments; volumes
//! come from a few random sources smoothed by neighbour averaging, so nearby
//! segments carry similar volumes. Features are the road-class one-hot plus two
//! noisy covariates of the volume.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::graph::{GraphError, NetworkGraph, RoadClass, RoadEdge, RoadNode};
use crate::math;
use crate::rng::{seeded, Stream};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SyntheticError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VolumeProcess {
    pub diffusion_steps: usize,
    pub source_count: usize,
    /// Source intensities are uniform on `[lo, hi]`.
    pub source_intensity: [f64; 2],
    pub noise_sd: f64,
}

impl Default for VolumeProcess {
    fn default() -> Self {
        Self { diffusion_steps: 4, source_count: 6, source_intensity: [300.0, 1500.0], noise_sd: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_nodes: usize,
    pub avg_degree: f64,
    /// Probabilities over [`RoadClass::ALL`].
    pub class_mix: [f64; 6],
    pub volume_process: VolumeProcess,
    /// Noise standard deviation of the two volume covariates.
    pub covariate_noise: [f64; 2],
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_nodes: 200,
            avg_degree: 4.0,
            class_mix: [0.15, 0.2, 0.1, 0.3, 0.15, 0.1],
            volume_process: VolumeProcess::default(),
            covariate_noise: [0.5, 1.0],
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = SyntheticError::InvalidConfig;
        if self.n_nodes < 2 {
            return Err(bad("n_nodes must be at least 2"));
        }
        if self.class_mix.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(bad("class_mix entries must be non-negative"));
        }
        if (self.class_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(bad("class_mix must sum to 1"));
        }
        if !(self.avg_degree > 0.0 && self.avg_degree <= (self.n_nodes - 1) as f64) {
            return Err(bad("avg_degree must lie in (0, n_nodes - 1]"));
        }
        let vp = &self.volume_process;
        if vp.source_count == 0 || vp.source_count > self.n_nodes {
            return Err(bad("source_count must lie in [1, n_nodes]"));
        }
        let [lo, hi] = vp.source_intensity;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(bad("source_intensity must satisfy 0 <= lo <= hi"));
        }
        if !(vp.noise_sd >= 0.0 && vp.noise_sd.is_finite()) {
            return Err(bad("noise_sd must be non-negative"));
        }
        if self.covariate_noise.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(bad("covariate_noise must be non-negative"));
        }
        Ok(())
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.0[hi] = lo;
        true
    }
}

fn dist(p: &[(f64, f64)], a: usize, b: usize) -> f64 {
    let dx = p[a].0 - p[b].0;
    let dy = p[a].1 - p[b].1;
    math::sqrt(dx * dx + dy * dy)
}

/// Geometric graph with exactly `round(avg_degree * n / 2)` edges (or the
/// spanning-tree size if larger): a minimum spanning forest over k-nearest
/// candidates, bridged into one component, then filled with the shortest
/// remaining candidates.
fn geometric_edges(points: &[(f64, f64)], avg_degree: f64) -> Vec<(usize, usize)> {
    let n = points.len();
    let k = (math::ceil(3.0 * avg_degree) as usize).max(8).min(n - 1);
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(n * k);
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n);
    for u in 0..n {
        scratch.clear();
        scratch.extend((0..n).filter(|&v| v != u).map(|v| (dist(points, u, v), v)));
        scratch.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, v) in &scratch[..k] {
            candidates.push((d, u.min(v), u.max(v)));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    candidates.dedup_by(|a, b| a.1 == b.1 && a.2 == b.2);

    let mut uf = UnionFind((0..n).collect());
    let mut chosen = vec![false; candidates.len()];
    let mut edges = Vec::new();
    for (i, &(_, u, v)) in candidates.iter().enumerate() {
        if uf.union(u, v) {
            chosen[i] = true;
            edges.push((u, v));
        }
    }
    // Bridge any remaining components through their closest pair.
    loop {
        let root0 = uf.find(0);
        let (inside, outside): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| uf.find(i) == root0);
        if outside.is_empty() {
            break;
        }
        let mut best = (f64::INFINITY, 0, 0);
        for &u in &inside {
            for &v in &outside {
                let d = dist(points, u, v);
                if d < best.0 {
                    best = (d, u, v);
                }
            }
        }
        uf.union(best.1, best.2);
        edges.push((best.1.min(best.2), best.1.max(best.2)));
    }

    let target = math::round(avg_degree * n as f64 / 2.0) as usize;
    let mut present: alloc::collections::BTreeSet<(usize, usize)> = edges.iter().copied().collect();
    for (i, &(_, u, v)) in candidates.iter().enumerate() {
        if edges.len() >= target {
            break;
        }
        if !chosen[i] && present.insert((u, v)) {
            edges.push((u, v));
        }
    }
    edges.sort_unstable();
    edges
}

/// Builds a connected planted-signal network. Pure function of `config`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<NetworkGraph, SyntheticError> {
    config.validate()?;
    let n = config.n_nodes;
    let mut rng = seeded(config.seed, Stream::Graph);

    let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let edge_list = geometric_edges(&points, config.avg_degree);

    let classes: Vec<RoadClass> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (c, p) in RoadClass::ALL.iter().zip(&config.class_mix) {
                acc += p;
                if u < acc {
                    return *c;
                }
            }
            *RoadClass::ALL.iter().rev().zip(config.class_mix.iter().rev()).find(|(_, p)| **p > 0.0).unwrap().0
        })
        .collect();

    let mut adjacency = vec![Vec::new(); n];
    for &(u, v) in &edge_list {
        adjacency[u].push(v);
        adjacency[v].push(u);
    }

    let vp = &config.volume_process;
    let mut volume = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..vp.source_count {
        let j = rng.random_range(i..n);
        order.swap(i, j);
        let [lo, hi] = vp.source_intensity;
        volume[order[i]] += if hi > lo { rng.random_range(lo..hi) } else { lo };
    }
    for _ in 0..vp.diffusion_steps {
        volume = (0..n)
            .map(|i| {
                let s: f64 = adjacency[i].iter().map(|&j| volume[j]).sum();
                (volume[i] + s) / (1 + adjacency[i].len()) as f64
            })
            .collect();
    }
    if vp.noise_sd > 0.0 {
        let noise = Normal::new(0.0, vp.noise_sd).map_err(|_| SyntheticError::InvalidConfig("noise_sd"))?;
        for v in &mut volume {
            *v = (*v + noise.sample(&mut rng)).max(0.0);
        }
    }

    let mean_volume = volume.iter().sum::<f64>() / n as f64;
    let scale = if mean_volume > 0.0 { mean_volume } else { 1.0 };
    let covariate = |sd: f64, rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        if sd > 0.0 {
            Normal::new(0.0, sd).map(|d| d.sample(rng)).unwrap_or(0.0)
        } else {
            0.0
        }
    };
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let mut features = vec![0.0; RoadClass::ALL.len() + 2];
        features[classes[i].index()] = 1.0;
        let base = volume[i] / scale;
        features[6] = base + covariate(config.covariate_noise[0], &mut rng);
        features[7] = base + covariate(config.covariate_noise[1], &mut rng);
        nodes.push(RoadNode { id: i, road_class: classes[i], volume: volume[i], features });
    }

    let spacing = 1.0 / math::sqrt(n as f64);
    let edges = edge_list
        .into_iter()
        .map(|(u, v)| {
            let d = dist(&points, u, v);
            let dx = points[v].0 - points[u].0;
            let heading = if d > 0.0 { math::abs(dx / d) } else { 0.0 };
            RoadEdge { u, v, attrs: vec![d / spacing, heading] }
        })
        .collect();

    Ok(NetworkGraph::new(nodes, edges)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = SyntheticConfig { n_nodes: 200, seed: 7, ..Default::default() };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = generate_synthetic(&SyntheticConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_source_without_diffusion_or_noise() {
        let cfg = SyntheticConfig {
            n_nodes: 30,
            volume_process: VolumeProcess {
                diffusion_steps: 0,
                source_count: 1,
                source_intensity: [10.0, 10.0],
                noise_sd: 0.0,
            },
            ..Default::default()
        };
        let g = generate_synthetic(&cfg).unwrap();
        let v = g.volumes();
        assert_eq!(v.iter().filter(|&&x| x == 10.0).count(), 1);
        assert_eq!(v.iter().filter(|&&x| x == 0.0).count(), 29);
    }

    #[test]
    fn mean_degree_matches_target() {
        let cfg = SyntheticConfig { n_nodes: 500, avg_degree: 4.0, seed: 11, ..Default::default() };
        let g = generate_synthetic(&cfg).unwrap();
        assert!((g.mean_degree() - 4.0).abs() <= 0.5, "mean degree {}", g.mean_degree());
        assert!(g.is_connected());
    }

    #[test]
    fn volumes_are_spatially_autocorrelated() {
        let g = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let v = g.volumes();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
        let cov: f64 = g.edges().iter().map(|e| (v[e.u] - mean) * (v[e.v] - mean)).sum();
        let moran = (v.len() as f64 / g.edge_count() as f64) * cov / var;
        assert!(moran > 0.3, "Moran's I {moran}");
    }

    #[test]
    fn config_validation() {
        let bad_mix = SyntheticConfig { class_mix: [0.5, 0.5, 0.5, 0.0, 0.0, 0.0], ..Default::default() };
        assert!(matches!(generate_synthetic(&bad_mix), Err(SyntheticError::InvalidConfig(_))));
        let tiny = SyntheticConfig { n_nodes: 1, ..Default::default() };
        assert!(matches!(generate_synthetic(&tiny), Err(SyntheticError::InvalidConfig(_))));
    }

    #[test]
    fn features_have_fixed_width_and_valid_one_hot() {
        let g = generate_synthetic(&SyntheticConfig::default()).unwrap();
        assert_eq!(g.feature_dim(), 8);
        assert_eq!(g.edge_dim(), 2);
        for node in g.nodes() {
            assert_eq!(node.features[..6].iter().sum::<f64>(), 1.0);
            assert_eq!(node.features[node.road_class.index()], 1.0);
        }
    }
}

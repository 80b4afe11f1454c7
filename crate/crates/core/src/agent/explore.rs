use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentError, AgentState};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationKind {
    Standard,
    AdaptiveEpsilon,
    #[default]
    Curiosity,
}

impl ExplorationKind {
    pub const ALL: [ExplorationKind; 3] =
        [ExplorationKind::Standard, ExplorationKind::AdaptiveEpsilon, ExplorationKind::Curiosity];

    pub fn as_str(self) -> &'static str {
        match self {
            ExplorationKind::Standard => "standard",
            ExplorationKind::AdaptiveEpsilon => "adaptive_epsilon",
            ExplorationKind::Curiosity => "curiosity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorationConfig {
    pub kind: ExplorationKind,
    /// Fixed ε for the standard and curiosity variants.
    pub epsilon: f64,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    /// Weight of the intrinsic bonus (curiosity only).
    pub beta: f64,
    /// Embedding coordinates within ±threshold fall in the zero bucket.
    pub bucket_threshold: f64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            kind: ExplorationKind::Curiosity,
            epsilon: 0.1,
            epsilon_start: 1.0,
            epsilon_decay: 0.995,
            epsilon_min: 0.05,
            beta: 0.1,
            bucket_threshold: 0.1,
        }
    }
}

impl ExplorationConfig {
    pub fn with_kind(kind: ExplorationKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.epsilon) && unit(self.epsilon_start) && unit(self.epsilon_min) && unit(self.epsilon_decay)) {
            return Err(AgentError::InvalidConfig("epsilon parameters must lie in [0, 1]"));
        }
        if self.epsilon_min > self.epsilon_start {
            return Err(AgentError::InvalidConfig("epsilon_min exceeds epsilon_start"));
        }
        if !(self.beta >= 0.0 && self.bucket_threshold >= 0.0) {
            return Err(AgentError::InvalidConfig("beta and bucket_threshold must be non-negative"));
        }
        Ok(())
    }
}

/// ε-greedy action choice plus, for curiosity, visit counts over
/// sign-quantized states.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationPolicy {
    config: ExplorationConfig,
    epsilon: f64,
    visits: BTreeMap<Vec<i8>, u64>,
}

impl ExplorationPolicy {
    pub fn new(config: ExplorationConfig) -> Self {
        let epsilon = match config.kind {
            ExplorationKind::AdaptiveEpsilon => config.epsilon_start,
            _ => config.epsilon,
        };
        Self { config, epsilon, visits: BTreeMap::new() }
    }

    pub fn kind(&self) -> ExplorationKind {
        self.config.kind
    }

    pub fn config(&self) -> &ExplorationConfig {
        &self.config
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Weight applied to the intrinsic term; zero unless curiosity.
    pub fn beta(&self) -> f64 {
        if self.config.kind == ExplorationKind::Curiosity {
            self.config.beta
        } else {
            0.0
        }
    }

    /// Advances the schedule by one environment step.
    pub fn advance(&mut self) {
        if self.config.kind == ExplorationKind::AdaptiveEpsilon {
            self.epsilon = (self.epsilon * self.config.epsilon_decay).max(self.config.epsilon_min);
        }
    }

    /// With probability ε a uniform index, otherwise the first maximum.
    pub fn choose<R: Rng>(&self, q: &[f64], rng: &mut R) -> Result<usize, AgentError> {
        if q.is_empty() {
            return Err(AgentError::EmptyCandidateSet);
        }
        if self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon {
            return Ok(rng.random_range(0..q.len()));
        }
        Ok(greedy_index(q))
    }

    pub fn bucket(&self, state: &AgentState) -> Vec<i8> {
        let t = self.config.bucket_threshold;
        state
            .embedding
            .iter()
            .map(|&v| {
                if v > t {
                    1
                } else if v < -t {
                    -1
                } else {
                    0
                }
            })
            .collect()
    }

    pub fn visit_count(&self, state: &AgentState) -> u64 {
        self.visits.get(&self.bucket(state)).copied().unwrap_or(0)
    }

    /// Records a visit and returns `1/sqrt(count)`.
    pub fn intrinsic_reward(&mut self, state: &AgentState) -> Result<f64, AgentError> {
        if self.config.kind != ExplorationKind::Curiosity {
            return Err(AgentError::WrongPolicyKind);
        }
        let count = self.visits.entry(self.bucket(state)).or_insert(0);
        *count += 1;
        Ok(1.0 / math::sqrt(*count as f64))
    }
}

/// Index of the first maximum, so ties resolve to the earliest entry.
pub(crate) fn greedy_index(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

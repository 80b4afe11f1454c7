//! DQN sensor-placement agent.
//!
//! The environment owns a graph, the sensor partition and a warm-started
//! model. Each action adds one sensor, fine-tunes the model on the enlarged
//! train set and pays the drop in validation MSE (plus an optional
//! count-based curiosity bonus). Q is a small scorer over
//! `[state || candidate embedding]`, so the action space can be any size.

mod dqn;
mod env;
mod explore;
mod qnet;
mod replay;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::ModelError;
use crate::partition::PartitionError;
use crate::tensor::TensorError;

pub use dqn::{final_placement, train_agent, DqnAgent, EpisodeResult};
pub use env::{PlacementEnv, StepOutcome};
pub use explore::{ExplorationConfig, ExplorationKind, ExplorationPolicy};
pub use qnet::{q_inputs, QNet, QNetMeta};
pub use replay::{ReplayBuffer, Transition};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("no candidate nodes to score")]
    EmptyCandidateSet,
    #[error("intrinsic reward requested from a non-curiosity policy")]
    WrongPolicyKind,
    #[error("node {0} is not an available placement")]
    InvalidAction(usize),
    #[error("placement budget exhausted")]
    BudgetExhausted,
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("budget {budget} exceeds the {available} available candidates")]
    BudgetTooLarge { budget: usize, available: usize },
    #[error("invalid agent config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl From<crate::checkpoint::CheckpointError> for AgentError {
    fn from(e: crate::checkpoint::CheckpointError) -> Self {
        AgentError::Model(ModelError::Checkpoint(e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Hard target-network copy every this many TD updates.
    pub sync_every: usize,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub q_hidden: usize,
    pub q_learning_rate: f64,
    pub exploration: ExplorationConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            episodes: 10,
            gamma: 0.95,
            batch_size: 32,
            replay_capacity: 10_000,
            sync_every: 25,
            finetune_epochs: 10,
            finetune_lr: 1e-3,
            q_hidden: 64,
            q_learning_rate: 1e-3,
            exploration: ExplorationConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(AgentError::InvalidConfig("gamma must lie in [0, 1]"));
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.q_hidden == 0 {
            return Err(AgentError::InvalidConfig("batch size, replay capacity and q_hidden must be positive"));
        }
        if !(self.finetune_lr > 0.0 && self.q_learning_rate > 0.0) {
            return Err(AgentError::InvalidConfig("learning rates must be positive"));
        }
        self.exploration.validate()
    }
}

/// Mean of the train-node embeddings plus the number of placements so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub embedding: Vec<f64>,
    pub placements_made: usize,
}

/// `(previous − new) + β·intrinsic`.
pub fn shaped_reward(previous_loss: f64, new_loss: f64, beta: f64, intrinsic: f64) -> f64 {
    (previous_loss - new_loss) + beta * intrinsic
}

#[cfg(test)]
mod tests;

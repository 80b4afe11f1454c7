use alloc::sync::Arc;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::PlacementEnv;
use super::explore::{greedy_index, ExplorationKind, ExplorationPolicy};
use super::qnet::QNet;
use super::replay::{ReplayBuffer, Transition};
use super::{shaped_reward, AgentConfig, AgentError};
use crate::rng::{seeded, Stream};

/// Trace of one training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: usize,
    pub chosen: Vec<usize>,
    pub rewards: Vec<f64>,
    pub extrinsic: Vec<f64>,
    pub intrinsic: Vec<f64>,
    /// Validation MSE before the first step and after each step.
    pub val_losses: Vec<f64>,
    /// ε in force at each decision.
    pub epsilons: Vec<f64>,
    pub td_losses: Vec<f64>,
    /// Target-network syncs so far (cumulative across episodes).
    pub syncs: u64,
    pub gamma: f64,
    pub final_val_mse: f64,
    pub final_test_mse: f64,
}

/// Q-network, replay memory and exploration state; persists across episodes.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    config: AgentConfig,
    qnet: QNet,
    buffer: ReplayBuffer,
    policy: ExplorationPolicy,
    action_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    episodes: usize,
}

impl DqnAgent {
    pub fn new(config: AgentConfig, embed_dim: usize, seed: u64) -> Result<Self, AgentError> {
        config.validate()?;
        Ok(Self {
            qnet: QNet::new(embed_dim, config.q_hidden, config.q_learning_rate, config.sync_every, seed),
            buffer: ReplayBuffer::new(config.replay_capacity),
            policy: ExplorationPolicy::new(config.exploration.clone()),
            action_rng: seeded(seed, Stream::Agent),
            replay_rng: seeded(seed, Stream::Replay),
            episodes: 0,
            config,
        })
    }

    pub fn qnet(&self) -> &QNet {
        &self.qnet
    }

    pub fn qnet_mut(&mut self) -> &mut QNet {
        &mut self.qnet
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn policy(&self) -> &ExplorationPolicy {
        &self.policy
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// Resets `env`, rolls until the budget is spent, learning after every
    /// step once the buffer holds a full batch.
    pub fn run_episode(&mut self, env: &mut PlacementEnv) -> Result<EpisodeResult, AgentError> {
        env.reset()?;
        let mut result = EpisodeResult {
            episode: self.episodes,
            chosen: Vec::new(),
            rewards: Vec::new(),
            extrinsic: Vec::new(),
            intrinsic: Vec::new(),
            val_losses: Vec::from([env.last_val_loss()]),
            epsilons: Vec::new(),
            td_losses: Vec::new(),
            syncs: 0,
            gamma: self.config.gamma,
            final_val_mse: 0.0,
            final_test_mse: 0.0,
        };
        let mut state = env.observe();
        let mut candidates = env.candidates();
        let mut cand_emb = Arc::new(env.embedding_rows(&candidates));
        while env.remaining() > 0 {
            let q = self.qnet.q_values(&state.embedding, &cand_emb)?;
            result.epsilons.push(self.policy.epsilon());
            let pick = self.policy.choose(&q, &mut self.action_rng)?;
            let action = candidates[pick];
            let action_embedding = cand_emb.row_slice(pick).to_vec();

            let previous = env.last_val_loss();
            let outcome = env.step(action)?;
            let next_state = env.observe();
            let intrinsic = if self.policy.kind() == ExplorationKind::Curiosity {
                self.policy.intrinsic_reward(&next_state)?
            } else {
                0.0
            };
            let reward = shaped_reward(previous, outcome.val_loss, self.policy.beta(), intrinsic);

            candidates = env.candidates();
            cand_emb = Arc::new(env.embedding_rows(&candidates));
            self.buffer.push(Transition {
                state: state.embedding,
                action,
                action_embedding,
                reward,
                next_state: next_state.embedding.clone(),
                next_candidates: Arc::clone(&cand_emb),
                terminal: outcome.terminal,
            });
            if self.buffer.len() >= self.config.batch_size {
                let loss =
                    self.qnet.td_update(&self.buffer, self.config.batch_size, self.config.gamma, &mut self.replay_rng)?;
                result.td_losses.push(loss);
            }
            self.policy.advance();

            result.chosen.push(action);
            result.rewards.push(reward);
            result.extrinsic.push(outcome.extrinsic);
            result.intrinsic.push(intrinsic);
            result.val_losses.push(outcome.val_loss);
            state = next_state;
        }
        result.syncs = self.qnet.syncs();
        result.final_val_mse = env.last_val_loss();
        result.final_test_mse = env.test_loss();
        self.episodes += 1;
        Ok(result)
    }
}

/// Trains a fresh agent on `env` for `config.episodes` episodes.
pub fn train_agent(
    env: &mut PlacementEnv,
    config: &AgentConfig,
    seed: u64,
) -> Result<(DqnAgent, Vec<EpisodeResult>), AgentError> {
    let mut agent = DqnAgent::new(config.clone(), env.embed_dim(), seed)?;
    let mut traces = Vec::with_capacity(config.episodes);
    for _ in 0..config.episodes {
        traces.push(agent.run_episode(env)?);
    }
    Ok((agent, traces))
}

/// Greedy (ε = 0) rollout of `budget` placements from a fresh reset.
pub fn final_placement(qnet: &QNet, env: &mut PlacementEnv, budget: usize) -> Result<Vec<usize>, AgentError> {
    env.reset()?;
    if budget > env.budget() {
        return Err(AgentError::BudgetTooLarge { budget, available: env.budget() });
    }
    let mut chosen = Vec::with_capacity(budget);
    for _ in 0..budget {
        let state = env.observe();
        let candidates = env.candidates();
        let q = qnet.q_values(&state.embedding, &env.embedding_rows(&candidates))?;
        let action = candidates[greedy_index(&q)];
        env.step(action)?;
        chosen.push(action);
    }
    Ok(chosen)
}

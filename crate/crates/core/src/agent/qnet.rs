use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::replay::ReplayBuffer;
use super::AgentError;
use crate::checkpoint::Checkpoint;
use crate::math;
use crate::optim::{Adam, AdamConfig};
use crate::rng::{seeded, Stream};
use crate::tensor::{Tape, Tensor, Var};

const NAMES: [&str; 4] = ["hidden.weight", "hidden.bias", "out.weight", "out.bias"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetMeta {
    pub embed_dim: usize,
    pub hidden: usize,
    pub td_updates: u64,
    pub syncs: u64,
}

/// Two-layer scorer `Q(s, a) = w2·ReLU(W1·[s || h_a] + b1) + b2` with a
/// frozen target copy.
#[derive(Debug, Clone)]
pub struct QNet {
    embed_dim: usize,
    hidden: usize,
    online: Vec<Tensor>,
    target: Vec<Tensor>,
    adam: Adam,
    sync_every: usize,
    td_updates: u64,
    syncs: u64,
}

fn glorot<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let a = math::sqrt(6.0 / (rows + cols) as f64);
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-a..a)).collect()).expect("sized")
}

/// Rows `[state || candidate_i]` for each candidate row.
fn pair_inputs(state: &[f64], candidates: &Tensor) -> Tensor {
    let n = candidates.rows();
    let mut data = Vec::with_capacity(n * (state.len() + candidates.cols()));
    for i in 0..n {
        data.extend_from_slice(state);
        data.extend_from_slice(candidates.row_slice(i));
    }
    Tensor::matrix(n, state.len() + candidates.cols(), data).expect("sized")
}

fn forward(tape: &mut Tape, params: &[Var], inputs: Var) -> Result<Var, AgentError> {
    let z = tape.matmul(inputs, params[0])?;
    let z = tape.add_row(z, params[1])?;
    let z = tape.relu(z);
    let z = tape.matmul(z, params[2])?;
    Ok(tape.add_row(z, params[3])?)
}

fn score(params: &[Tensor], inputs: Tensor) -> Result<Vec<f64>, AgentError> {
    let mut tape = Tape::new();
    let p: Vec<Var> = params.iter().map(|t| tape.constant(t.clone())).collect();
    let x = tape.constant(inputs);
    let q = forward(&mut tape, &p, x)?;
    Ok(tape.value(q).data().to_vec())
}

impl QNet {
    pub fn new(embed_dim: usize, hidden: usize, learning_rate: f64, sync_every: usize, seed: u64) -> Self {
        let mut rng = seeded(seed, Stream::QNetInit);
        let online = Vec::from([
            glorot(&mut rng, 2 * embed_dim, hidden),
            Tensor::zeros(1, hidden),
            glorot(&mut rng, hidden, 1),
            Tensor::zeros(1, 1),
        ]);
        Self {
            embed_dim,
            hidden,
            target: online.clone(),
            online,
            adam: Adam::new(AdamConfig::with_lr(learning_rate)),
            sync_every,
            td_updates: 0,
            syncs: 0,
        }
    }

    /// All weights zero, so every candidate scores the same.
    pub fn zeroed(mut self) -> Self {
        for t in self.online.iter_mut().chain(self.target.iter_mut()) {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        self
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn params(&self) -> &[Tensor] {
        &self.online
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.online
    }

    pub fn target_params(&self) -> &[Tensor] {
        &self.target
    }

    pub fn td_updates(&self) -> u64 {
        self.td_updates
    }

    pub fn syncs(&self) -> u64 {
        self.syncs
    }

    fn check_state(&self, state: &[f64], candidates: &Tensor) -> Result<(), AgentError> {
        if candidates.rows() == 0 {
            return Err(AgentError::EmptyCandidateSet);
        }
        if state.len() != self.embed_dim || candidates.cols() != self.embed_dim {
            return Err(crate::tensor::TensorError::ShapeMismatch {
                op: "q_values",
                detail: alloc::format!("state {} / candidates {} vs embed dim {}", state.len(), candidates.cols(), self.embed_dim),
            }
            .into());
        }
        Ok(())
    }

    /// Online-network score per candidate row.
    pub fn q_values(&self, state: &[f64], candidates: &Tensor) -> Result<Vec<f64>, AgentError> {
        self.check_state(state, candidates)?;
        score(&self.online, pair_inputs(state, candidates))
    }

    pub fn target_q_values(&self, state: &[f64], candidates: &Tensor) -> Result<Vec<f64>, AgentError> {
        self.check_state(state, candidates)?;
        score(&self.target, pair_inputs(state, candidates))
    }

    /// Hard copy of the online weights into the target network.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
        self.syncs += 1;
    }

    /// Mean squared error of online Q on `inputs` (rows `[s || h_a]`) against
    /// `targets`, and its gradient per online tensor.
    pub fn td_gradients(&self, inputs: &Tensor, targets: &[f64]) -> Result<(f64, Vec<Tensor>), AgentError> {
        let mut tape = Tape::new();
        let p: Vec<Var> = self.online.iter().map(|t| tape.leaf(t.clone().with_grad(true))).collect();
        let x = tape.constant(inputs.clone());
        let q = forward(&mut tape, &p, x)?;
        let neg = tape.constant(Tensor::column(targets.iter().map(|y| -y).collect()));
        let diff = tape.add(q, neg)?;
        let sq = tape.square(diff);
        let loss = tape.mean(sq)?;
        let value = tape.value(loss).data()[0];
        let grads = tape.backward(loss)?;
        Ok((value, p.iter().map(|&v| grads.wrt(v)).collect()))
    }

    /// One Adam step on a uniform mini-batch. Targets are
    /// `r + γ·max_a' Q_target(s', a')`, or `r` alone on terminal transitions.
    /// Syncs the target network every `sync_every` updates.
    pub fn td_update<R: Rng>(
        &mut self,
        buffer: &ReplayBuffer,
        batch_size: usize,
        gamma: f64,
        rng: &mut R,
    ) -> Result<f64, AgentError> {
        if buffer.is_empty() {
            return Err(AgentError::EmptyBuffer);
        }
        let batch = buffer.sample(batch_size, rng);
        let width = 2 * self.embed_dim;
        let mut inputs = Vec::with_capacity(batch.len() * width);
        let mut targets = Vec::with_capacity(batch.len());
        for t in &batch {
            inputs.extend_from_slice(&t.state);
            inputs.extend_from_slice(&t.action_embedding);
            let bootstrap = if t.terminal || t.next_candidates.rows() == 0 {
                0.0
            } else {
                let q = self.target_q_values(&t.next_state, &t.next_candidates)?;
                q.into_iter().fold(f64::NEG_INFINITY, f64::max)
            };
            targets.push(t.reward + gamma * bootstrap);
        }
        let inputs = Tensor::matrix(batch.len(), width, inputs)?;
        let (loss, grads) = self.td_gradients(&inputs, &targets)?;
        let mut refs: Vec<&mut Tensor> = self.online.iter_mut().collect();
        self.adam.step(&mut refs, &grads)?;
        self.td_updates += 1;
        if self.sync_every > 0 && self.td_updates % self.sync_every as u64 == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    pub fn to_checkpoint(&self) -> Checkpoint<QNetMeta> {
        let meta = QNetMeta { embed_dim: self.embed_dim, hidden: self.hidden, td_updates: self.td_updates, syncs: self.syncs };
        Checkpoint::new("qnet", meta, NAMES.iter().copied().zip(&self.online))
    }

    /// Restores online weights; the target starts equal to them.
    pub fn from_checkpoint(ckpt: &Checkpoint<QNetMeta>, learning_rate: f64, sync_every: usize) -> Result<Self, AgentError> {
        ckpt.check_header("qnet")?;
        let mut q = Self::new(ckpt.meta.embed_dim, ckpt.meta.hidden, learning_rate, sync_every, 0);
        for (name, t) in NAMES.iter().zip(q.online.iter_mut()) {
            ckpt.fill(name, t)?;
        }
        q.target = q.online.clone();
        q.td_updates = ckpt.meta.td_updates;
        q.syncs = ckpt.meta.syncs;
        Ok(q)
    }
}

/// Builds `[state || embedding_row]` input rows; exposed for gradient checks.
pub fn q_inputs(state: &[f64], candidates: &Tensor) -> Tensor {
    pair_inputs(state, candidates)
}

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AgentError, AgentState};
use crate::graph::NetworkGraph;
use crate::model::{predict_and_embed, warm_finetune_in, GraphContext, HybridModelParams};
use crate::partition::{SensorPartition, SplitAssignment};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Drop in validation MSE caused by the placement.
    pub extrinsic: f64,
    pub val_loss: f64,
    pub terminal: bool,
}

/// Sensor placement as an episodic environment.
///
/// Candidates are unlabeled nodes outside the validation and test sets, so
/// adding a sensor never reveals an evaluation label.
#[derive(Debug, Clone)]
pub struct PlacementEnv {
    ctx: GraphContext,
    initial: SensorPartition,
    partition: SensorPartition,
    split: SplitAssignment,
    pool: BTreeSet<usize>,
    pretrained: HybridModelParams,
    params: HybridModelParams,
    predictions: Vec<f64>,
    embeddings: Tensor,
    last_val_loss: f64,
    budget: usize,
    placements: usize,
    finetune_epochs: usize,
    finetune_lr: f64,
}

fn mse(pred: &[f64], truth: &[f64], nodes: &BTreeSet<usize>) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    nodes.iter().map(|&i| (pred[i] - truth[i]) * (pred[i] - truth[i])).sum::<f64>() / nodes.len() as f64
}

impl PlacementEnv {
    pub fn new(
        graph: &NetworkGraph,
        partition: SensorPartition,
        split: SplitAssignment,
        pretrained: HybridModelParams,
        budget: usize,
        finetune_epochs: usize,
        finetune_lr: f64,
    ) -> Result<Self, AgentError> {
        Self::from_context(GraphContext::new(graph), partition, split, pretrained, budget, finetune_epochs, finetune_lr)
    }

    pub fn from_context(
        ctx: GraphContext,
        partition: SensorPartition,
        split: SplitAssignment,
        pretrained: HybridModelParams,
        budget: usize,
        finetune_epochs: usize,
        finetune_lr: f64,
    ) -> Result<Self, AgentError> {
        partition.validate(ctx.node_count())?;
        let held_out = split.held_out();
        let pool: BTreeSet<usize> = partition.unlabeled().difference(&held_out).copied().collect();
        if budget > pool.len() {
            return Err(AgentError::BudgetTooLarge { budget, available: pool.len() });
        }
        let (predictions, embeddings) = predict_and_embed(&pretrained, &ctx)?;
        let mut env = Self {
            last_val_loss: 0.0,
            ctx,
            initial: partition.clone(),
            partition,
            split,
            pool,
            params: pretrained.clone(),
            pretrained,
            predictions,
            embeddings,
            budget,
            placements: 0,
            finetune_epochs,
            finetune_lr,
        };
        env.last_val_loss = env.val_loss_now();
        Ok(env)
    }

    fn val_loss_now(&self) -> f64 {
        mse(&self.predictions, self.ctx.volumes(), &self.split.val)
    }

    /// Restores the initial sensors and the pretrained parameters.
    pub fn reset(&mut self) -> Result<(), AgentError> {
        self.partition = self.initial.clone();
        self.params = self.pretrained.clone();
        self.placements = 0;
        self.refresh()
    }

    fn refresh(&mut self) -> Result<(), AgentError> {
        let (pred, emb) = predict_and_embed(&self.params, &self.ctx)?;
        self.predictions = pred;
        self.embeddings = emb;
        self.last_val_loss = self.val_loss_now();
        Ok(())
    }

    pub fn context(&self) -> &GraphContext {
        &self.ctx
    }

    pub fn partition(&self) -> &SensorPartition {
        &self.partition
    }

    pub fn split(&self) -> &SplitAssignment {
        &self.split
    }

    pub fn params(&self) -> &HybridModelParams {
        &self.params
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn placements_made(&self) -> usize {
        self.placements
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.placements
    }

    pub fn embed_dim(&self) -> usize {
        self.embeddings.cols()
    }

    /// Validation MSE of the current parameters.
    pub fn last_val_loss(&self) -> f64 {
        self.last_val_loss
    }

    pub fn test_loss(&self) -> f64 {
        mse(&self.predictions, self.ctx.volumes(), &self.split.test)
    }

    pub fn embeddings(&self) -> &Tensor {
        &self.embeddings
    }

    /// Mean embedding over the current train nodes.
    pub fn observe(&self) -> AgentState {
        let train = self.partition.train();
        let h = self.embeddings.cols();
        let mut mean = alloc::vec![0.0; h];
        for &i in &train {
            for (m, v) in mean.iter_mut().zip(self.embeddings.row_slice(i)) {
                *m += v;
            }
        }
        if !train.is_empty() {
            let n = train.len() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
        }
        AgentState { embedding: mean, placements_made: self.placements }
    }

    /// Legal actions, ascending.
    pub fn candidates(&self) -> Vec<usize> {
        self.pool.iter().copied().filter(|&i| !self.partition.is_labeled(i)).collect()
    }

    pub fn embedding_rows(&self, nodes: &[usize]) -> Tensor {
        let h = self.embeddings.cols();
        let mut data = Vec::with_capacity(nodes.len() * h);
        for &i in nodes {
            data.extend_from_slice(self.embeddings.row_slice(i));
        }
        Tensor::matrix(nodes.len(), h, data).expect("sized")
    }

    /// Places a sensor at `action`, fine-tunes, and reports the loss change.
    pub fn step(&mut self, action: usize) -> Result<StepOutcome, AgentError> {
        if self.placements >= self.budget {
            return Err(AgentError::BudgetExhausted);
        }
        if !self.pool.contains(&action) || self.partition.is_labeled(action) {
            return Err(AgentError::InvalidAction(action));
        }
        self.partition.add_sensor(action)?;
        let train: Vec<usize> = self.partition.train().into_iter().collect();
        if self.finetune_epochs > 0 {
            warm_finetune_in(&mut self.params, &self.ctx, &train, self.finetune_epochs, self.finetune_lr)?;
        }
        let previous = self.last_val_loss;
        self.refresh()?;
        self.placements += 1;
        Ok(StepOutcome {
            extrinsic: previous - self.last_val_loss,
            val_loss: self.last_val_loss,
            terminal: self.placements == self.budget,
        })
    }
}

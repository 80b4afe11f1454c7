use alloc::collections::VecDeque;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::tensor::Tensor;

/// One stored experience. Embeddings are captured at decision time so the
/// sample stays valid after the model moves on.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub action_embedding: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Embeddings of the candidates available from `next_state`, one per row.
    pub next_candidates: Arc<Tensor>,
    pub terminal: bool,
}

/// Fixed-capacity FIFO store.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: VecDeque::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// Uniform sample of `min(batch, len)` distinct entries.
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<&Transition> {
        let k = batch.min(self.items.len());
        rand::seq::index::sample(rng, self.items.len(), k).into_iter().map(|i| &self.items[i]).collect()
    }
}

use std::collections::VecDeque;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor3;

#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Arc<Tensor3>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Arc<Tensor3>,
    pub terminal: bool,
}

/// Fixed-capacity FIFO experience store with its own sampling stream.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample(&mut self, batch: usize) -> Vec<&Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        let n = self.items.len();
        let idx: Vec<usize> = (0..batch).map(|_| self.rng.random_range(0..n)).collect();
        idx.into_iter().map(|i| &self.items[i]).collect()
    }
}

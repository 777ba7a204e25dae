use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use crate::geometry::Vec2;
use crate::sim::Observation;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Observation,
    pub a: Vec2,
    pub r: f64,
    pub s_next: Observation,
    /// True only when the episode ended in a state with no future (goal,
    /// collision, out of bounds); timeouts bootstrap.
    pub done: bool,
}

/// Fixed-capacity ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            next: 0,
        }
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

    /// Appends, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform indices without replacement; `None` if the buffer is too small.
    pub fn sample_indices(&self, batch: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
        (batch <= self.items.len() && batch > 0)
            .then(|| sample(rng, self.items.len(), batch).into_vec())
    }

    pub fn sample(&self, batch: usize, rng: &mut ChaCha8Rng) -> Option<Vec<&Transition>> {
        self.sample_indices(batch, rng)
            .map(|idx| idx.into_iter().map(|i| &self.items[i]).collect())
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }
}

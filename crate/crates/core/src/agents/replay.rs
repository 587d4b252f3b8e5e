use rand::Rng;

use crate::error::{Error, Result};

/// One transition. Tabular agents read the state ids, the DQN reads the
/// observation vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: usize,
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buf: Vec<Experience>,
    capacity: usize,
    next: usize,
    batch_size: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize, batch_size: usize) -> Result<Self> {
        if batch_size == 0 || capacity <= batch_size {
            return Err(Error::invalid(format!(
                "replay memory needs capacity > batch size >= 1, got {capacity} and {batch_size}"
            )));
        }
        Ok(Self {
            buf: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            next: 0,
            batch_size,
        })
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.buf.get(i)
    }

    /// Stores `e`, overwriting the oldest entry once full.
    pub fn push(&mut self, e: Experience) {
        if self.buf.len() < self.capacity {
            self.buf.push(e);
        } else {
            self.buf[self.next] = e;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<usize>> {
        if self.buf.len() < self.batch_size {
            return Err(Error::InsufficientMemory {
                held: self.buf.len(),
                needed: self.batch_size,
            });
        }
        Ok((0..self.batch_size).map(|_| rng.random_range(0..self.buf.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<&Experience>> {
        Ok(self.sample_indices(rng)?.into_iter().map(|i| &self.buf[i]).collect())
    }
}

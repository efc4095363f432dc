//! Shared experience replay: a bounded ring buffer of transitions with
//! uniform without-replacement batch sampling.

use rand::seq::index;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::Result;
use crate::knowledge::Observation;

/// One transition. Observations are stored in their compact window form and
/// expanded to network tensors only when a batch is assembled.
#[derive(Debug, Clone)]
pub struct ReplaySample {
    pub obs: Observation,
    pub action: u8,
    pub reward: f32,
    pub next: Observation,
}

/// Ring buffer shared by every agent: once full, the oldest transition is
/// overwritten first.
#[derive(Debug)]
pub struct ReplayMemory {
    buf: Vec<ReplaySample>,
    capacity: usize,
    write: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Result<ReplayMemory> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(ReplayMemory {
            buf: Vec::new(),
            capacity,
            write: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn push(&mut self, sample: ReplaySample) {
        debug_assert!((sample.action as usize) < crate::nn::ACTION_COUNT);
        if self.buf.len() < self.capacity {
            self.buf.push(sample);
        } else {
            self.buf[self.write] = sample;
            self.write = (self.write + 1) % self.capacity;
        }
    }

    /// Draws `batch` distinct transitions uniformly.
    pub fn sample_batch(&self, batch: usize, rng: &mut ChaCha8Rng) -> Result<Vec<&ReplaySample>> {
        if batch == 0 || batch > self.buf.len() {
            return Err(Error::domain(format!(
                "batch of {batch} from a replay of {}",
                self.buf.len()
            )));
        }
        let picks = index::sample(rng, self.buf.len(), batch);
        Ok(picks.iter().map(|i| &self.buf[i]).collect())
    }
}

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded generator used by every optimizer; ChaCha8 keeps streams identical
/// across platforms.
pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws indices from `0..len` uniformly without replacement, lazily.
///
/// A sparse Fisher-Yates shuffle: memory grows with the number of draws,
/// not with `len`.
#[derive(Debug, Clone)]
pub struct IndexSampler {
    len: u64,
    drawn: u64,
    swapped: HashMap<u64, u64>,
}

impl IndexSampler {
    pub fn new(len: u64) -> Self {
        Self {
            len,
            drawn: 0,
            swapped: HashMap::new(),
        }
    }

    pub fn remaining(&self) -> u64 {
        self.len - self.drawn
    }

    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<u64> {
        if self.drawn == self.len {
            return None;
        }
        let i = self.drawn;
        let j = rng.random_range(i..self.len);
        let at_j = *self.swapped.get(&j).unwrap_or(&j);
        let at_i = *self.swapped.get(&i).unwrap_or(&i);
        self.swapped.insert(j, at_i);
        self.swapped.remove(&i);
        self.drawn += 1;
        Some(at_j)
    }
}

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// Deterministic mini-batch index stream: a seeded permutation of
/// `0..n`, reshuffled whenever fewer than `batch` indices remain, so every
/// batch is full-size.
pub(crate) struct Batches {
    perm: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl Batches {
    pub(crate) fn new(n: usize, batch: usize, rng: ChaCha8Rng) -> Self {
        Batches {
            perm: (0..n).collect(),
            pos: n, // force a shuffle before the first batch
            batch: batch.min(n).max(1),
            rng,
        }
    }

    pub(crate) fn next(&mut self) -> &[usize] {
        if self.pos + self.batch > self.perm.len() {
            self.perm.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let out = &self.perm[self.pos..self.pos + self.batch];
        self.pos += self.batch;
        out
    }
}

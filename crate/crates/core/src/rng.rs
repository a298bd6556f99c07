//! Seeded random number generation.
//!
//! Everything random in this crate flows from a single `u64` seed through
//! [`SeededRng`]. ChaCha keeps the stream identical across platforms and
//! runs, which is what makes generated corpora, splits and checkpoints
//! byte-reproducible.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Deterministic RNG: identical (seed, call sequence) gives identical output.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha12Rng,
    seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha12Rng::seed_from_u64(seed),
            seed,
        }
    }

    /// Independent substream for `tag`, derived from this rng's seed.
    ///
    /// Substreams let e.g. the synthetic generator and its held-out oracle
    /// draw from unrelated sequences while staying fully seeded.
    pub fn substream(&self, tag: &str) -> SeededRng {
        SeededRng::new(derive_seed(self.seed, tag))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform f64 in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform f64 in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(f64::MIN_POSITIVE);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.gen_range(0..=i);
            items.swap(i, j);
        }
    }

    /// Draw `k` distinct indices from [0, n), in draw order. Panics if k > n.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} distinct from {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        self.shuffle(&mut pool);
        pool.truncate(k);
        pool
    }
}

/// FNV-1a over the tag, folded into the seed.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed.rotate_left(17)
}

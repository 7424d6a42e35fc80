//! Counter-based random streams and the block-parallel sampling driver.
//!
//! Every estimator splits its sample range into fixed-size blocks. Block `b`
//! of a run draws from its own ChaCha8 stream keyed by `(seed, label, b)`, so
//! the samples a block sees never depend on which worker ran it. Block
//! accumulators are merged in block order, which makes the final floating
//! point result bit-identical for any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Samples per block. Part of the reproducibility contract: changing it
/// changes every seeded result.
pub const BLOCK_SIZE: usize = 4096;

/// A single random stream.
#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    /// Stream number `index` of the family `label` under `seed`.
    pub fn new(seed: u64, label: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ mix64(label));
        rng.set_stream(mix64(label.rotate_left(17) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        Self { rng }
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal deviate.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random::<u64>()
    }
}

/// Stable 64-bit label for a stream family.
pub fn label(name: &str) -> u64 {
    // FNV-1a
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in name.as_bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Derive a child seed, e.g. one seed per sweep record.
pub fn derive_seed(seed: u64, key: u64) -> u64 {
    mix64(seed ^ mix64(key.wrapping_add(0x94D0_49BB_1331_11EB)))
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Associative accumulator merged in block order.
pub trait Accumulator: Default + Send {
    fn merge(self, other: Self) -> Self;
}

/// Running sums for a real-valued sample mean.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, z: f64) {
        self.n += 1;
        self.sum += z;
        self.sum_sq += z * z;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq / n) - mean * mean).max(0.0) * n / (n - 1.0);
        (var / n).sqrt()
    }
}

impl Accumulator for Moments {
    fn merge(self, other: Self) -> Self {
        Moments {
            n: self.n + other.n,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
        }
    }
}

/// Bernoulli hit counter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Hits {
    pub hits: u64,
    pub n: u64,
}

impl Accumulator for Hits {
    fn merge(self, other: Self) -> Self {
        Hits {
            hits: self.hits + other.hits,
            n: self.n + other.n,
        }
    }
}

impl<A: Accumulator, B: Accumulator> Accumulator for (A, B) {
    fn merge(self, other: Self) -> Self {
        (self.0.merge(other.0), self.1.merge(other.1))
    }
}

impl<T: Send> Accumulator for Vec<T> {
    fn merge(mut self, other: Self) -> Self {
        self.extend(other);
        self
    }
}

/// Run `n` samples split into blocks. `body(stream, count)` processes
/// `count` samples of one block and returns that block's accumulator.
pub fn run_blocks<A, F>(seed: u64, label: u64, n: usize, body: F) -> A
where
    A: Accumulator,
    F: Fn(&mut Stream, usize) -> A + Sync,
{
    let blocks = n.div_ceil(BLOCK_SIZE);
    let block_len = |b: usize| BLOCK_SIZE.min(n - b * BLOCK_SIZE);
    let run = |b: usize| {
        let mut stream = Stream::new(seed, label, b as u64);
        body(&mut stream, block_len(b))
    };

    #[cfg(feature = "parallel")]
    let parts: Vec<A> = {
        use rayon::prelude::*;
        (0..blocks).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<A> = (0..blocks).map(run).collect();

    parts.into_iter().fold(A::default(), A::merge)
}

/// Map independent tasks in parallel, preserving input order.
pub fn map_tasks<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

//! Counter-based random streams and order-stable parallel reductions.
//!
//! Every Monte Carlo sample (a path, a flow run, a series sample) draws from
//! its own ChaCha8 stream addressed by `(seed, domain, index)`. Work is split
//! into fixed-size chunks whose partial sums are combined by a pairwise tree
//! in index order, so results do not depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Samples per reduction chunk. Part of the reproducibility contract.
pub const CHUNK: u64 = 1024;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for sample `index` of the stream family `(seed, domain)`.
pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = splitmix64(seed ^ splitmix64(domain));
    for word in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        word.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Stable domain tag for a family of streams.
pub fn domain(label: &str, extra: u64) -> u64 {
    label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
        ^ splitmix64(extra)
}

/// First and second moments of a weighted sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(self, other: Moments) -> Moments {
        Moments {
            count: self.count + other.count,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
        }
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Pairwise tree combination in index order.
pub fn tree_reduce<T: Copy, F: Fn(T, T) -> T + Copy>(items: &[T], empty: T, f: F) -> T {
    match items.len() {
        0 => empty,
        1 => items[0],
        n => {
            let (l, r) = items.split_at(n / 2);
            f(tree_reduce(l, empty, f), tree_reduce(r, empty, f))
        }
    }
}

/// Runs `per_chunk` over fixed chunks of `0..n` in parallel and returns the
/// per-chunk results in index order.
pub fn chunked<T, F>(n: u64, per_chunk: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<u64>) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| per_chunk(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect()
}

/// Moments of `sample(index)` over `0..n`, bit-stable across thread counts.
pub fn moments<F>(n: u64, sample: F) -> Moments
where
    F: Fn(u64) -> f64 + Sync,
{
    let parts = chunked(n, |range| {
        let mut m = Moments::default();
        for i in range {
            m.push(sample(i));
        }
        m
    });
    tree_reduce(&parts, Moments::default(), Moments::merge)
}

/// Runs `f` on a dedicated pool with `workers` threads (or the global pool for `None`).
pub fn with_workers<R: Send, F: FnOnce() -> R + Send>(workers: Option<usize>, f: F) -> R {
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .expect("failed to build worker pool")
            .install(f),
        None => f(),
    }
}

//! Counter-based random streams keyed by `(seed, stream_id)`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Uniform};

/// A reproducible random stream; equal `(seed, stream_id)` give equal draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Stream id derived from an ordered list of integer labels.
    pub fn derived(seed: u64, labels: &[u64]) -> Self {
        Self::new(seed, derive_stream_id(labels))
    }

    /// Child stream sharing the seed, keyed by this stream id and `label`.
    pub fn child(&self, label: u64) -> Self {
        Self::new(self.seed, derive_stream_id(&[self.stream_id, label]))
    }

    pub fn rng(&self) -> Rng {
        let mut inner = ChaCha20Rng::seed_from_u64(self.seed);
        inner.set_stream(self.stream_id);
        Rng { inner }
    }
}

/// Sampler bound to one stream.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha20Rng,
}

impl Rng {
    /// Draw from `N(0, std²)`; `std = 0` yields exact zeros.
    pub fn normal(&mut self, std: f64) -> f64 {
        if std == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, std)
            .expect("finite nonnegative standard deviation")
            .sample(&mut self.inner)
    }

    pub fn normals(&mut self, count: usize, std: f64) -> Vec<f64> {
        (0..count).map(|_| self.normal(std)).collect()
    }

    /// Draw from `U[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        Uniform::new(lo, hi)
            .expect("lo < hi")
            .sample(&mut self.inner)
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: usize) -> usize {
        Uniform::new(0usize, bound)
            .expect("bound > 0")
            .sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform(0.0, 1.0) < p
    }

    pub fn next_u64(&mut self) -> u64 {
        rand::RngCore::next_u64(&mut self.inner)
    }

    /// Uniformly random `size`-subset of `0..n`, returned sorted.
    pub fn subset(&mut self, n: usize, size: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..size {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        let mut out = idx[..size].to_vec();
        out.sort_unstable();
        out
    }
}

/// SplitMix64 finalizer folded over the labels.
pub fn derive_stream_id(labels: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64 ^ labels.len() as u64;
    for &l in labels {
        h = mix(h ^ mix(l.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    h
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

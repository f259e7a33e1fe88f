//! Deterministic random number generation.
//!
//! One small generator is used everywhere so that datasets, parameter
//! initialization, and batch shuffles are reproducible from a single 64-bit
//! seed across platforms. The generator is splitmix64 (Steele et al.'s
//! finalizer-based stream), which is trivial to reimplement in any language;
//! Gaussians come from the Box-Muller transform. No external RNG crate is
//! used on purpose: the exact draw sequence is part of the artifact's
//! reproducibility contract.

/// splitmix64 stream with a cached Box-Muller spare.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare: Option<f64>,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 {
            state: seed,
            spare: None,
        }
    }

    /// Next raw 64-bit value.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform double in [0, 1) with 53 bits of mantissa.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in [0, n). Uses the modulo construction; the bias for
    /// the n used here (dataset sizes, cell counts) is far below 2^-50 and
    /// the construction is portable.
    ///
    /// Panics if n is zero.
    pub fn next_below(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_below requires n > 0");
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller. Each transform yields two variates;
    /// the second is cached and returned by the next call.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u maps [0,1) to (0,1], keeping ln() finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Gaussian with the given mean and standard deviation.
    pub fn gaussian(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.next_gaussian()
    }

    /// Fisher-Yates shuffle, high index down.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// Derives an independent stream seed from a base seed and a salt.
///
/// Used to give each benchmark cell, epoch shuffle, and subsample draw its
/// own stream without coupling their draw counts.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    SplitMix64::new(seed ^ salt.wrapping_mul(GOLDEN_GAMMA)).next_u64()
}

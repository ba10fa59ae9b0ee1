//! Deterministic, splittable random streams.
//!
//! Every stochastic step in the pipeline draws from an [`RngStream`]: a
//! SplitMix64-style generator run in counter mode. A stream is addressed by
//! a `(seed, stream)` pair, so parallel workers can each own a disjoint,
//! independently replayable substream without sharing mutable state. The
//! n-th draw of a given stream is a pure function of `(seed, stream, n)`,
//! which is what makes sampled output independent of worker count.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Final avalanche of SplitMix64 (Stafford mix 13). Also used on its own as
/// a cheap 64-bit hash for stream addressing.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A counter-mode pseudo-random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    stream: u64,
    counter: u64,
}

impl RngStream {
    /// Root stream for a seed; identical to `substream(seed, 0)`.
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// Stream addressed by `(seed, stream)`. Distinct addresses yield
    /// statistically independent sequences.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let base = mix64(seed ^ 0x6C62_272E_07BB_0142);
        Self {
            stream: mix64(base ^ stream.wrapping_mul(GOLDEN_GAMMA)),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.stream ^ self.counter.wrapping_mul(GOLDEN_GAMMA))
    }

    /// Uniform in `[0, 1)` with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased uniform draw from `[0, n)` (Lemire's multiply-and-reject).
    ///
    /// # Panics
    /// Panics if `n == 0`.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let mut x = self.next_u64();
        let mut m = (x as u128) * (n as u128);
        let mut lo = m as u64;
        if lo < n {
            // 2^64 mod n, computed without 128-bit division.
            let t = n.wrapping_neg() % n;
            while lo < t {
                x = self.next_u64();
                m = (x as u128) * (n as u128);
                lo = m as u64;
            }
        }
        (m >> 64) as u64
    }

    /// Uniform index into a slice of length `n`.
    pub fn next_index(&mut self, n: usize) -> usize {
        self.next_below(n as u64) as usize
    }
}

//! Deterministic random number generation.
//!
//! Everything stochastic in the crate (weight init, dropout masks, epoch
//! shuffles, synthetic data) draws from [`RngState`], a SplitMix64 stream.
//! SplitMix64 uses only 64-bit integer arithmetic, so a given seed yields the
//! same sample sequence on every platform, which is what makes seeded runs
//! bit-reproducible.

/// SplitMix64 generator state.
///
/// Reference: Steele, Lea, Flood, "Fast splittable pseudorandom number
/// generators" (the `splitmix64` finalizer). Period 2^64.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    state: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { state: seed }
    }

    /// Derive an independent stream for `(seed, tag)`, e.g. per-epoch shuffles.
    pub fn derived(seed: u64, tag: u64) -> Self {
        let mut mixer = RngState::new(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let s = mixer.next_u64();
        RngState::new(s)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in [0, n). `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Modulo bias is negligible for desk-scale n (< 2^32).
        (self.next_u64() % n as u64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

//! Deterministic pseudo-random generation shared by the manifest builder,
//! the profiler baselines and the synthetic data generators.
//!
//! The generator is splitmix64 (Steele, Lea & Flood's `SplittableRandom`
//! finalizer, as published by Vigna). It is trivially portable: every output
//! is a pure function of the 64-bit state, so manifests and synthetic data
//! can be reproduced from the seed in any language. Gaussian variates come
//! from the Box-Muller transform rather than a table-driven method for the
//! same reason.

/// splitmix64 stream. One instance owns one stream; derive independent
/// streams with [`SplitMix64::derive`] instead of sharing an instance.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent stream for a keyed sub-task (per frame, per case, ...).
    /// The key is mixed through one splitmix64 round so nearby keys do not
    /// produce correlated streams.
    pub fn derive(seed: u64, key: u64) -> Self {
        let mut root = SplitMix64::new(seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let s = root.next_u64();
        SplitMix64::new(s)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)` by rejection from the top, so the
    /// distribution is exactly uniform (no modulo bias).
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let zone = u64::MAX - (u64::MAX % bound + 1) % bound;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % bound;
            }
        }
    }

    /// Uniform integer in `[lo, hi]` inclusive.
    pub fn next_range(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi, "empty range");
        lo + self.next_below(hi - lo + 1)
    }

    /// Standard normal via Box-Muller. Draws two uniforms per call and
    /// discards the second variate; simplicity beats caching here.
    pub fn next_gaussian(&mut self) -> f64 {
        // u1 is shifted away from zero so ln(u1) is finite.
        let u1 = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let u1 = if u1 <= 0.0 { f64::MIN_POSITIVE } else { u1 };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

//! Seeded random number generation.
//!
//! All randomness in this crate flows through [`Rng`], a splitmix64 generator
//! (Steele, Lea, Flood 2014). The algorithm is fixed here, in full, so that
//! datasets, initializations, and attack starts reproduce bit-for-bit on any
//! platform and in any reimplementation: the state advances by the constant
//! 0x9E3779B97F4A7C15, and each output is the finalizer
//! `z ^= z >> 31` applied after two multiply-xor-shift rounds.
//!
//! Uniform doubles take the top 53 bits of an output word; Gaussians use the
//! Box-Muller transform on two uniforms.

/// One splitmix64 step: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic splitmix64 stream.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Derives an independent stream from `(seed, tag, index)`.
    ///
    /// Used wherever per-sample or per-step streams are needed so that
    /// results do not depend on batching or scheduling order.
    pub fn derive(seed: u64, tag: u64, index: u64) -> Self {
        let mut s = seed;
        let a = splitmix64(&mut s);
        let mut t = a ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        let b = splitmix64(&mut t);
        let mut u = b ^ index.wrapping_mul(0xA076_1D64_78BD_642F);
        splitmix64(&mut u);
        Rng { state: u }
    }

    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform in [0, 1), 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller. Uses (1 - u) inside the log so the
    /// argument is never zero.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in [0, n). `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        // Modulo bias is negligible for the small n used here (dataset and
        // class counts), and keeping the reduction trivial makes the stream
        // easy to reproduce elsewhere.
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

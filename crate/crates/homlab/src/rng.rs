//! Counter-based deterministic random streams.
//!
//! Every random decision in the simulator is drawn from a stream keyed by
//! `(seed, domain, a, b)`. Streams can therefore be evaluated in any order,
//! on any number of threads, and still produce identical results. The
//! generator is a SplitMix64-style avalanche over the absorbed key.

/// Stafford variant 13 of the 64-bit finalizer. Bijective.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Absorb one key word into the running state. Bijective in `x` for fixed `h`.
#[inline(always)]
pub fn absorb(h: u64, x: u64) -> u64 {
    mix64(h ^ x.wrapping_add(GAMMA))
}

/// Stream domains. Distinct domains decouple the random decisions made for
/// the same (block, slot, channel) coordinates.
pub mod domain {
    pub const PHASE: u64 = 1;
    pub const CLICK: u64 = 2;
    pub const JITTER: u64 = 3;
    pub const DARK: u64 = 4;
    pub const SCAN_POINT: u64 = 5;
    pub const TEST: u64 = 99;
}

/// The absorbed key for a `(seed, domain, a, b)` stream.
#[inline]
pub fn stream_key(seed: u64, domain: u64, a: u64, b: u64) -> u64 {
    absorb(absorb(absorb(absorb(0, seed), domain), a), b)
}

/// Counter-indexed draw under a fixed key: the value the stream for this key
/// would produce at position `counter`, at the cost of a single finalizer.
/// Hot-loop form for one decision per (slot, channel).
#[inline(always)]
pub fn keyed_u64(key: u64, counter: u64) -> u64 {
    mix64(key ^ counter.wrapping_mul(GAMMA))
}

/// A keyed random stream: SplitMix64 seeded by the absorbed key.
#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(seed: u64, domain: u64, a: u64, b: u64) -> Self {
        Stream {
            state: stream_key(seed, domain, a, b),
        }
    }

    #[inline(always)]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform on [0, 1).
    #[inline(always)]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1]. Safe as a log argument.
    #[inline(always)]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller.
    #[inline]
    pub fn gaussian(&mut self) -> f64 {
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Exponential with the given mean.
    #[inline]
    pub fn exponential(&mut self, mean: f64) -> f64 {
        -mean * self.uniform_open().ln()
    }
}

/// Probability as a u64 threshold: `next_u64() < threshold` occurs with
/// probability `p` (clamped to [0, 1]).
#[inline(always)]
pub fn p_to_threshold(p: f64) -> u64 {
    if p <= 0.0 {
        0
    } else if p >= 1.0 {
        u64::MAX
    } else {
        (p * 18_446_744_073_709_551_616.0) as u64
    }
}

//! Deterministic, splittable random number generation.
//!
//! The generator is SplitMix64: a 64-bit state advanced by the golden-ratio
//! increment `0x9E3779B97F4A7C15` and finalized with the mixer
//!
//! ```text
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z =  z ^ (z >> 31)
//! ```
//!
//! Output `i` (0-based) of a generator seeded with `s` is `mix(s + (i + 1) * γ)`,
//! so the stream is a pure function of `(seed, counter)` and any language can
//! reproduce it bit for bit. Independent sub-streams are derived with
//! [`SimRng::stream`], which folds a list of ids into a fresh seed.
//!
//! Conversions:
//! - `next_f64`: top 53 bits scaled by 2^-53, uniform in `[0, 1)`.
//! - `below(n)`: rejection sampling on the widening product (Lemire), unbiased.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based SplitMix64 generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimRng {
    state: u64,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// A generator whose seed is derived from `seed` and an ordered list of ids.
    ///
    /// Streams for distinct id lists are statistically independent; the same
    /// `(seed, ids)` always yields the same stream.
    pub fn stream(seed: u64, ids: &[u64]) -> Self {
        let mut h = mix64(seed ^ 0x5851_F42D_4C95_7F2D);
        for &id in ids {
            h = mix64(h.wrapping_add(GAMMA) ^ mix64(id.wrapping_add(GAMMA)));
        }
        Self::new(h)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// `true` with probability `p` (clamped to `[0, 1]`).
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Fisher–Yates shuffle, last position first.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

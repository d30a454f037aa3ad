//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 keystream keyed by the run seed with the
//! replica index as the ChaCha stream id, so streams never overlap and any
//! replica can be regenerated on its own.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStreamSpec {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStreamSpec {
    pub const fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// The spec of the `k`-th stream after this one.
    pub fn nth(self, k: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: self.stream_id.wrapping_add(k),
        }
    }
}

/// A random stream with a two-bit buffer for cone steps.
///
/// Cone steps take two bits at a time from the low end of the current word;
/// full uniforms always come from a fresh word and leave the bit buffer
/// untouched.
pub struct StreamRng {
    inner: ChaCha8Rng,
    bits: u64,
    pairs_left: u32,
}

impl StreamRng {
    pub fn new(spec: RngStreamSpec) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(spec.seed);
        inner.set_stream(spec.stream_id);
        Self {
            inner,
            bits: 0,
            pairs_left: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0,1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0,1)`, never zero.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Next two-bit step code.
    #[inline]
    pub fn pair(&mut self) -> u32 {
        if self.pairs_left == 0 {
            self.bits = self.inner.next_u64();
            self.pairs_left = 32;
        }
        let code = (self.bits & 3) as u32;
        self.bits >>= 2;
        self.pairs_left -= 1;
        code
    }

    /// Up to `max` step codes packed in the low bits of the returned word,
    /// together with how many were taken. Never crosses a word boundary, so
    /// the codes are exactly those successive [`pair`](Self::pair) calls
    /// would have produced.
    #[inline]
    pub fn pairs(&mut self, max: u32) -> (u64, u32) {
        debug_assert!(max >= 1);
        if self.pairs_left == 0 {
            self.bits = self.inner.next_u64();
            self.pairs_left = 32;
        }
        let take = max.min(self.pairs_left);
        let word = if take == 32 {
            self.bits
        } else {
            self.bits & ((1u64 << (2 * take)) - 1)
        };
        self.bits = if take == 32 { 0 } else { self.bits >> (2 * take) };
        self.pairs_left -= take;
        (word, take)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinism_and_stream_separation() {
        let a: Vec<u64> = {
            let mut r = StreamRng::new(RngStreamSpec::new(7, 3));
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = StreamRng::new(RngStreamSpec::new(7, 3));
            (0..8).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = StreamRng::new(RngStreamSpec::new(7, 4));
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn batched_pairs_match_single_pairs() {
        let spec = RngStreamSpec::new(11, 0);
        let mut single = StreamRng::new(spec);
        let mut batched = StreamRng::new(spec);
        let mut expected = Vec::new();
        for _ in 0..500 {
            expected.push(single.pair());
        }
        let mut got = Vec::new();
        let chunks = [1u32, 5, 32, 17, 31, 2, 64, 3, 32, 32, 100, 7];
        let mut ci = 0;
        while got.len() < expected.len() {
            let want = chunks[ci % chunks.len()].min((expected.len() - got.len()) as u32);
            ci += 1;
            let mut left = want;
            while left > 0 {
                let (w, n) = batched.pairs(left);
                for k in 0..n {
                    got.push(((w >> (2 * k)) & 3) as u32);
                }
                left -= n;
            }
        }
        assert_eq!(got, expected);
    }

    #[test]
    fn uniforms_live_in_unit_interval() {
        let mut r = StreamRng::new(RngStreamSpec::new(1, 1));
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            let v = r.uniform_open();
            assert!(v > 0.0 && v < 1.0);
        }
    }
}

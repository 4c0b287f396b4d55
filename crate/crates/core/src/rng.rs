//! Seeded, splittable random streams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::C64;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose output is fixed by the algorithm and therefore
/// identical on every platform. Distinct stream ids give independent streams
/// for the same seed.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream derived from this one's identity and `tag`; it does not
    /// consume draws from `self`.
    pub fn substream(&self, tag: u64) -> Self {
        Self::new(self.seed, mix(self.stream_id ^ mix(tag.wrapping_add(1))))
    }

    /// Derived stream for a pair of indices such as `(k, repeat)`.
    pub fn substream2(&self, a: u64, b: u64) -> Self {
        self.substream(mix(a).wrapping_add(b.rotate_left(32)))
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Complex number with independent standard normal components.
    pub fn complex_normal(&mut self) -> C64 {
        C64::new(self.normal(), self.normal())
    }

    /// Sample an index from nonnegative weights summing to `total`.
    pub fn categorical(&mut self, weights: &[f64], total: f64) -> usize {
        let target = self.uniform() * total;
        let mut acc = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if target < acc {
                return i;
            }
        }
        // Roundoff: fall back to the last index with positive weight.
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(42, 3);
        let mut b = RngStream::new(42, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        let va: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let vb: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        assert_ne!(va, vb);
    }

    #[test]
    fn substream_is_independent_of_parent_position() {
        let mut a = RngStream::new(5, 0);
        let s1 = a.substream(9);
        a.next_u64();
        let s2 = a.substream(9);
        let (mut s1, mut s2) = (s1, s2);
        assert_eq!(s1.next_u64(), s2.next_u64());
        assert_ne!(a.substream(1).next_u64(), a.substream(2).next_u64());
    }

    #[test]
    fn known_first_draw_is_stable() {
        // Pinned so that a change in the generator is noticed.
        let mut a = RngStream::new(0, 0);
        let first = a.next_u64();
        let mut b = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(first, b.next_u64());
    }

    #[test]
    fn categorical_respects_zero_weights() {
        let mut r = RngStream::new(1, 1);
        for _ in 0..1000 {
            assert_eq!(r.categorical(&[0.0, 1.0, 0.0], 1.0), 1);
        }
    }
}

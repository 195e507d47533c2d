//! Deterministic counter-based randomness.
//!
//! Every stochastic routine in this crate draws from a [`Stream`] derived
//! from the run seed plus a domain tag and the indices identifying the unit
//! of work (agent, grid cell, replicate, ...). Work units can therefore be
//! scheduled on any number of threads in any order and still reproduce the
//! same draws bit for bit: the stream for a unit depends only on its key,
//! never on which worker ran before it.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood's `splitmix64`), which is
//! a fixed published algorithm — unlike library RNGs it can never change
//! between dependency versions, so seeded outputs stay stable forever.

/// Domain tags keep streams for different purposes disjoint even when their
/// numeric indices collide.
pub mod tag {
    pub const CURVE: u64 = 1;
    pub const THRESHOLD_COST: u64 = 2;
    pub const SOCIAL_COST: u64 = 3;
    pub const PAYMENT: u64 = 4;
    pub const MECHANISM: u64 = 5;
    pub const LOWER_BOUND: u64 = 6;
    pub const PROFILE: u64 = 7;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stream key from a seed and a list of index words.
///
/// Each word is absorbed through one SplitMix64 step, so permuting or
/// shifting the words yields unrelated keys.
pub fn derive_key(seed: u64, words: &[u64]) -> u64 {
    let mut state = seed ^ 0x6A09_E667_F3BC_C909;
    let mut key = splitmix64(&mut state);
    for &w in words {
        state ^= w.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        key ^= splitmix64(&mut state);
    }
    key
}

/// A deterministic random stream; cheap to construct per work unit.
#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
}

impl Stream {
    /// Stream identified by `(seed, tag, words...)`.
    pub fn keyed(seed: u64, tag: u64, words: &[u64]) -> Self {
        let mut state = derive_key(seed, words) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        // Burn one step so the first output already mixes the tag.
        splitmix64(&mut state);
        Stream { state }
    }

    /// Placeholder stream handed to algorithms that declare themselves
    /// deterministic (they must not draw from it, but the signature needs
    /// one).
    pub fn unused() -> Self {
        Stream { state: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform draw from [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw from `{0, 1, ..., n-1}`.
    #[inline]
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift bounded generation; the modulo bias of n vs 2^64 is
        // far below anything observable here.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Uniform draw from the closed interval [lo, hi].
    #[inline]
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let mut a = Stream::keyed(42, tag::CURVE, &[3, 7, 11]);
        let mut b = Stream::keyed(42, tag::CURVE, &[3, 7, 11]);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_keys_give_distinct_streams() {
        let first = Stream::keyed(42, tag::CURVE, &[3, 7, 11]).next_u64();
        assert_ne!(first, Stream::keyed(42, tag::CURVE, &[3, 7, 12]).next_u64());
        assert_ne!(first, Stream::keyed(42, tag::CURVE, &[3, 11, 7]).next_u64());
        assert_ne!(first, Stream::keyed(42, tag::PAYMENT, &[3, 7, 11]).next_u64());
        assert_ne!(first, Stream::keyed(43, tag::CURVE, &[3, 7, 11]).next_u64());
    }

    #[test]
    fn unit_uniforms_stay_in_range_and_average_half() {
        let mut s = Stream::keyed(7, tag::PROFILE, &[0]);
        let mut sum = 0.0;
        let n = 100_000;
        for _ in 0..n {
            let u = s.next_f64();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 5e-3, "mean {mean}");
    }

    #[test]
    fn index_draws_cover_all_buckets() {
        let mut s = Stream::keyed(9, tag::MECHANISM, &[1]);
        let mut counts = [0usize; 5];
        for _ in 0..10_000 {
            counts[s.next_index(5)] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            assert!(c > 1_600, "bucket {i} has {c} draws");
        }
    }
}

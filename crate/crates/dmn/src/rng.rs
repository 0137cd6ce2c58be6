//! Seedable counter-based pseudo-random generator.
//!
//! Sampled fixtures must be reproducible across implementations, so instead
//! of depending on an external RNG whose stream may change between releases,
//! the generator is pinned here: draw `i` of stream `seed` is
//!
//! ```text
//! mix64(seed + i * 0x9e3779b97f4a7c15)
//! ```
//!
//! where `mix64` is the 64-bit finalizer with constants `0xbf58476d1ce4e5b9`
//! and `0x94d049bb133111eb` (shift-xor by 30, 27, 31). Outputs depend only on
//! `(seed, i)`, so streams can be split or replayed at will. Test vectors are
//! frozen in the unit tests below.

/// Counter-based generator: a seed plus a draw counter.
#[derive(Debug, Clone)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed, counter: 0 }
    }

    /// Next raw 64-bit draw.
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)` via the widening-multiply reduction.
    /// `bound` must be nonzero.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "next_below bound must be nonzero");
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Bernoulli draw with success probability `p`.
    pub fn next_bool(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen vectors; any change to these breaks every sampled fixture.
    #[test]
    fn stream_vectors_are_pinned() {
        let mut r = CounterRng::new(0);
        assert_eq!(r.next_u64(), 0xe220a8397b1dcdaf);
        assert_eq!(r.next_u64(), 0x6e789e6aa1b965f4);
        assert_eq!(r.next_u64(), 0x06c45d188009454f);

        let mut r = CounterRng::new(42);
        assert_eq!(r.next_u64(), 0xbdd732262feb6e95);
        assert_eq!(r.next_u64(), 0x28efe333b266f103);
    }

    #[test]
    fn unit_interval_and_bounds() {
        let mut r = CounterRng::new(7);
        for _ in 0..1000 {
            let x = r.next_f64();
            assert!((0.0..1.0).contains(&x));
            let k = r.next_below(13);
            assert!(k < 13);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = CounterRng::new(123);
        let mut b = CounterRng::new(123);
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}

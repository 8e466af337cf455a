//! Deterministic hashing and pseudo-randomness.
//!
//! The hashing embedder and the synthetic trace generator must produce
//! identical output on every run and every platform, so this module pins the
//! exact algorithms rather than depending on an external RNG whose stream may
//! change between versions:
//!
//! - token/seed hashing: FNV-1a, 64-bit (offset basis `0xcbf29ce484222325`,
//!   prime `0x100000001b3`);
//! - generator: SplitMix64 (Steele, Lea & Flood), advanced by the golden
//!   gamma `0x9e3779b97f4a7c15`;
//! - float conversion: the high 53 bits of each output word, scaled into
//!   `[0, 1)` or `[-1, 1)`.
//!
//! All operations are integer arithmetic plus IEEE-754 multiplications with
//! exactly representable scale factors, so the streams are bit-stable.

/// 64-bit FNV-1a over a byte slice.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// SplitMix64 generator with a fixed, documented output stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Seed from arbitrary bytes via FNV-1a.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self::new(fnv1a_64(bytes))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the high 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-1, 1)`.
    pub fn next_signed(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    /// Uniform in `[0, n)`. Plain modulo; the tiny bias is irrelevant for
    /// trace synthesis and test-data generation.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below requires n > 0");
        self.next_u64() % n
    }

    /// True with probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Pick one element of a non-empty slice.
    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.next_below(items.len() as u64) as usize]
    }
}

//! Deterministic randomness: SplitMix64 streams plus FNV-1a 64 seed salting.
//!
//! Every random choice in this crate flows through these routines so that a
//! run is a pure function of its 64-bit seed, bit-for-bit, on any platform.

/// FNV-1a 64-bit offset basis.
const FNV_OFFSET: u64 = 14695981039346656037;
/// FNV-1a 64-bit prime.
const FNV_PRIME: u64 = 1099511628211;

/// Golden-ratio increment shared by SplitMix64 and the per-variant salt.
pub const GOLDEN_GAMMA: u64 = 0x9E3779B97F4A7C15;

/// FNV-1a 64 over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Seed for the per-case augmentation stream:
/// `global_seed XOR fnv1a64(case_id) XOR (variant_index * GOLDEN_GAMMA)`.
pub fn case_stream_seed(global_seed: u64, case_id: &str, variant_index: u32) -> u64 {
    global_seed ^ fnv1a64(case_id.as_bytes()) ^ u64::from(variant_index).wrapping_mul(GOLDEN_GAMMA)
}

/// Seed for a pipeline stage, salted with the stage name. Same scheme as the
/// per-case streams with a zero variant index.
pub fn stage_seed(global_seed: u64, stage: &str) -> u64 {
    global_seed ^ fnv1a64(stage.as_bytes())
}

/// SplitMix64 (Vigna). Non-cryptographic; chosen for trivially portable,
/// bit-exact behavior across implementations.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, n)`. `n` must be nonzero. Plain modulo: the bias
    /// is negligible for the small ranges used here and the rule is trivial
    /// to reproduce in other languages.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    /// Uniform draw in the inclusive range `[lo, hi]`.
    pub fn next_in_range(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        lo + self.next_below(hi - lo + 1)
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

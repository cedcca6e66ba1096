//! Deterministic seed derivation.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one 64-bit seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Stream tags that keep derived seeds for different purposes apart.
pub mod tags {
    pub const SPLIT: u64 = 1;
    pub const DEBIAS: u64 = 2;
    pub const JITTER: u64 = 3;
    pub const PAIR: u64 = 4;
    pub const DATA: u64 = 5;
    pub const TEST: u64 = 6;
}

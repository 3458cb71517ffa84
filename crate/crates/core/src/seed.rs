//! Seed derivation so every random stream in an episode hangs off one master seed.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(stream, index)` under `base`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    mix(mix(base ^ mix(stream)) ^ index)
}

/// Stream tags.
pub mod stream {
    pub const TRAJECTORY: u64 = 1;
    pub const OPTIMIZER: u64 = 2;
    pub const CSI: u64 = 3;
    pub const TRAINING: u64 = 4;
}

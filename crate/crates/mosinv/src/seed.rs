//! Seed derivation. Every RNG stream in the crate is keyed off one of the
//! two user-visible seeds through this mixer, so distinct consumers
//! (sampling, splitting, weight init, shuffling) never share a stream.

/// Domain tag for per-device parameter sampling.
pub const DOMAIN_SAMPLE: u64 = 0x5a4d_504c;
/// Domain tag for split assignment.
pub const DOMAIN_SPLIT: u64 = 0x5350_4c54;
/// Domain tag for weight initialization.
pub const DOMAIN_INIT: u64 = 0x494e_4954;
/// Domain tag for the per-epoch batch shuffle.
pub const DOMAIN_SHUFFLE: u64 = 0x5348_4646;

/// SplitMix64 finalizer. Full-period mix of a 64-bit state.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent 64-bit seed from `parts`. Order-sensitive, so
/// (seed, domain, index, retry) tuples map to distinct streams.
pub fn mix(parts: &[u64]) -> u64 {
    let mut state = 0x243f_6a88_85a3_08d3; // arbitrary nonzero start
    for &p in parts {
        state = splitmix64(state ^ p);
    }
    state
}

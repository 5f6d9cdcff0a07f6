// SPDX-License-Identifier: MIT OR Apache-2.0

//! Counter-based parameter generator.
//!
//! Every parameter value is a pure function of `(seed, stream, index)`, so
//! any implementation that follows `docs/formats.md` reproduces the weights
//! bit-for-bit without sharing generator state.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of the SplitMix64 finalizer applied to `x + GOLDEN_GAMMA`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Raw 64 random bits for element `index` of parameter stream `stream`.
pub fn draw_bits(seed: u64, stream: u32, index: u64) -> u64 {
    debug_assert!(index < (1 << 40));
    let counter = (u64::from(stream) << 40) | index;
    splitmix64(seed ^ splitmix64(counter))
}

/// Uniform sample in `[-1, 1)` built from the top 53 bits.
pub fn symmetric_uniform(seed: u64, stream: u32, index: u64) -> f64 {
    let unit = (draw_bits(seed, stream, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * unit - 1.0
}

/// Fills `len` values as `offset + scale * U[-1, 1)`.
pub fn fill(seed: u64, stream: u32, len: usize, offset: f64, scale: f64) -> Vec<f64> {
    (0..len as u64)
        .map(|i| offset + scale * symmetric_uniform(seed, stream, i))
        .collect()
}

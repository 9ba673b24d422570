//! Seeding contract for reproducible, thread-count independent sampling.
//!
//! Every path owns independent ChaCha8 streams selected by
//! `(seed, path_index, channel)`: the key is `seed` expanded by
//! `seed_from_u64` and the 64-bit stream id is `path_index * 4 + channel`.
//! Within a stream, values are consumed in step order, so the step index
//! is the stream position. Which thread runs a path has no influence on
//! its draws.
//!
//! The channels split the per-step noise so that the Brownian increments
//! driving a path are the same whichever Volterra scheme is used:
//!
//! - [`Channel::Brownian`]: one standard normal per step, `ΔW = √τ z`.
//! - [`Channel::Orthogonal`]: one standard normal per step for `ΔW^⊥`.
//! - [`Channel::Residual`]: the remaining driver components, scheme specific.
//!
//! Path indices at or above [`RESERVED_BASE`] are reserved for auxiliary
//! draws (sampled forward-variance curves, data shuffling).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type PathRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Channel {
    Brownian = 0,
    Orthogonal = 1,
    Residual = 2,
    Misc = 3,
}

/// First path index reserved for non-path draws.
pub const RESERVED_BASE: u64 = 1 << 60;

pub fn path_rng(seed: u64, path_index: u64, channel: Channel) -> PathRng {
    debug_assert!(path_index < 1 << 62);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index * 4 + channel as u64);
    rng
}

/// Stream for auxiliary purpose `slot` (curve sampling, shuffles, ...).
pub fn aux_rng(seed: u64, slot: u64) -> PathRng {
    path_rng(seed, RESERVED_BASE + slot, Channel::Misc)
}

/// Independent seed for a purpose identified by `salt` (splitmix64 mix).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn normal(rng: &mut PathRng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn fill_normal(rng: &mut PathRng, out: &mut [f64]) {
    for x in out {
        *x = StandardNormal.sample(rng);
    }
}

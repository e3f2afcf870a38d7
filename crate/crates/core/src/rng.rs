//! Counter-based random streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream addressed by
//! `(key, index)`. Keys are derived from the master seed by SplitMix64 mixing
//! with a purpose tag, and the index is usually a particle number, so the
//! sequence seen by one particle never depends on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Purpose tags for key derivation.
pub mod tag {
    pub const INITIAL_VELOCITY: u64 = 0x01;
    pub const INITIAL_POSITION: u64 = 0x02;
    pub const DYNAMICS: u64 = 0x03;
    pub const BOOTSTRAP: u64 = 0x04;
    pub const RESAMPLE: u64 = 0x05;
    pub const PICARD_ITERATE: u64 = 0x06;
    pub const REPLICATE: u64 = 0x07;
    pub const DIAGNOSTICS: u64 = 0x08;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child key of `parent` for the given tag.
pub fn derive(parent: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Stream number `index` under `key`.
pub fn substream(key: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

//! Seeded, counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream addressed by a
//! run seed plus a tuple of task keys (sample index, pair index, ...). Two
//! tasks never share a stream, and a task's stream does not depend on which
//! worker runs it or in what order, so parallel results match sequential
//! ones bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a key path into a single 64-bit stream id.
pub fn stream_id(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0x5851_f42d_4c95_7f2d, |acc, &k| splitmix(acc ^ splitmix(k)))
}

/// Stream for `seed` addressed by `keys`.
pub fn stream(seed: u64, keys: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(keys));
    rng
}

/// Derives a child seed, used when one run seed fans out to several
/// independent sub-runs (e.g. multi-seed experiments).
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    splitmix(seed ^ stream_id(keys))
}

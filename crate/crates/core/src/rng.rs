//! Deterministic per-(seed, replication, draw) random streams.
//!
//! Every noise matrix is drawn from its own ChaCha8 stream whose key is a
//! SplitMix64 hash of `(seed, replication, index)`. Replications can then run
//! in any order or in parallel and still reproduce bit-for-bit.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes three words into one 64-bit stream id.
pub fn derive_stream_id(seed: u64, replication: u64, index: u64) -> u64 {
    let a = splitmix64(seed);
    let b = splitmix64(a ^ replication.wrapping_mul(0xD1B5_4A32_D192_ED03));
    splitmix64(b ^ index.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7))
}

/// Independent generator for draw `index` of replication `replication`.
pub fn stream_rng(seed: u64, replication: u64, index: u64) -> ChaCha8Rng {
    let id = derive_stream_id(seed, replication, index);
    let mut key = [0u8; 32];
    let mut state = id;
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Replication index reserved for calibration (training) sequences so they
/// never share a stream with monitored replications.
pub const CALIBRATION_REPLICATION: u64 = u64::MAX;

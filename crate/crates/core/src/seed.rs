//! Seed derivation.
//!
//! Every random table or run draws from a ChaCha20 stream. The 64-bit seed
//! selects the key and a named substream selects the ChaCha stream id, so a
//! generator can add new tables without shifting the draws of existing ones.
//!
//! Per-run seeds are derived with [`mix`], a SplitMix64 finalizer chained over
//! the inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds `parts` into `seed`: `h <- splitmix64(h ^ part)` for each part.
pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |h, &p| splitmix64(h ^ p))
}

/// 64-bit FNV-1a of a label.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// ChaCha20 stream keyed by `seed`, with stream id `label_hash(name)`.
pub fn substream(seed: u64, name: &str) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(label_hash(name));
    rng
}

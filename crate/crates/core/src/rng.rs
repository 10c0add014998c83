//! Seeding conventions.
//!
//! Every random draw comes from ChaCha8 (portable, bit-identical across
//! platforms). A record seed selects the key; independent consumers within
//! one record use distinct ChaCha streams:
//!
//! | stream | consumer                     |
//! |--------|------------------------------|
//! | 0      | timestep sampling            |
//! | 1      | prompt region corruption     |
//! | 2      | reasoning region corruption  |
//! | 3      | code region corruption       |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const TIMESTEP_STREAM: u64 = 0;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// 64-bit content hash that does not depend on platform or compiler version.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

/// Seed for one record: the master seed xor a stable hash of the record id,
/// so the result does not depend on record order or sharding.
pub fn record_seed(master_seed: u64, record_id: &str) -> u64 {
    master_seed ^ stable_hash(record_id.as_bytes())
}

/// Uniform index in `0..n`; `n` must be positive.
pub fn index_below(rng: &mut impl Rng, n: usize) -> usize {
    rng.random_range(0..n as u64) as usize
}

pub fn bernoulli(rng: &mut impl Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Fisher–Yates shuffle driven by [`index_below`].
pub fn shuffle<T>(items: &mut [T], rng: &mut impl Rng) {
    for i in (1..items.len()).rev() {
        let j = index_below(rng, i + 1);
        items.swap(i, j);
    }
}

//! Seeded generators. Each consumer draws from its own ChaCha stream so that
//! adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_HEAD_INIT: u64 = 10;
pub(crate) const STREAM_GAMMA_INIT: u64 = 11;
pub(crate) const STREAM_SESSION_INIT: u64 = 12;
pub(crate) const STREAM_SHUFFLE: u64 = 13;
pub(crate) const STREAM_USER: u64 = 1 << 32;

pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Independent generator for one simulated user.
pub fn for_user(seed: u64, user: u64) -> ChaCha8Rng {
    seeded(seed, STREAM_USER + user)
}

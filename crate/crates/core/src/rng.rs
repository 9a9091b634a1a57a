//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream selected
//! by `(master seed, stream id)`. Work items own their stream, so results do
//! not depend on how rayon schedules them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids at or above this offset are reserved for fresh predictive draws.
pub(crate) const PREDICTIVE_STREAM_OFFSET: u64 = 1 << 62;

/// Deterministic generator for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

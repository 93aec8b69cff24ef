//! Seeded generator streams. Every consumer of randomness gets its own
//! ChaCha stream derived from the run seed, so adding sensors or switching
//! strategy never shifts the spawn sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Priority tie-breaking in coordination rounds.
pub const PLANNER_STREAM: u64 = 1;
/// Source `j` draws from stream `SPAWN_STREAM_BASE + j`.
pub const SPAWN_STREAM_BASE: u64 = 1 << 16;
/// Random-walk sensor `i` draws from stream `WALK_STREAM_BASE + i`.
pub const WALK_STREAM_BASE: u64 = 1 << 32;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

//! Per-event random streams.
//!
//! Event `i` of a run seeded with `seed` always draws from the ChaCha8 stream
//! number `i` under the key derived from `seed`, so results do not depend on
//! how events are partitioned across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type EventRng = ChaCha8Rng;

pub fn event_stream(seed: u64, index: u64) -> EventRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
